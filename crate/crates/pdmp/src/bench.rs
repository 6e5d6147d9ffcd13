//! End-to-end benchmark harness: trains occupancy models, runs planner
//! ensembles across seeds and environments, and emits the metric tables and
//! curves as CSV and SVG.
//!
//! Cells run sequentially; each PDMP cell already uses the spare threads for
//! its producers, so timing comparisons are only valid in this mode. All
//! randomness derives from one root seed expanded per (env, planner,
//! variant, seed index), so any cell reproduces independently.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{CostGradField, FieldGate, FlowSpec, NetField, PulledField};
use crate::geometry::{generate_dataset, make_benchmark_env, with_boundary_walls, Environment};
use crate::kinematics::Manipulator;
use crate::net::{train_net, NetArch, OccupancyNet, TrainConfig};
use crate::planner::{
    plan, BucketSource, DrawBreakdown, PlanRequest, PlanResult, PlannerKind,
    UniformSource,
};
use crate::sampler::{start_producers_opts, PriorSampler, SampleBucket, SamplerOpts, SamplerStats};
use crate::derive_seed;
use crate::svg::{line_chart, Series};

/// Occupancy-model training settings for the harness.
///
/// The hidden widths default well below the library's 64x64 so a producer
/// thread can morph samples faster than the planner consumes them on plain
/// CPUs; accuracy on the desk-scale worlds is unaffected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub samples: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Margin of occupied boundary slabs added around the workspace for
    /// training, so the morph also learns to stay inside bounds. Zero
    /// disables the augmentation.
    pub boundary_margin: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            samples: 20_000,
            hidden: vec![16, 16],
            epochs: 60,
            batch_size: 128,
            learning_rate: 3e-3,
            boundary_margin: 0.12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Uniform,
    Pdmp,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Uniform => "uniform",
            Variant::Pdmp => "pdmp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Robot {
    Point,
    Arm,
}

impl Robot {
    pub fn as_str(&self) -> &'static str {
        match self {
            Robot::Point => "point",
            Robot::Arm => "arm",
        }
    }
}

fn planner_str(p: PlannerKind) -> &'static str {
    match p {
        PlannerKind::RrtStar => "rrt-star",
        PlannerKind::RrtConnect => "rrt-connect",
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub environments: Vec<String>,
    pub planners: Vec<PlannerKind>,
    pub variants: Vec<Variant>,
    pub robot: Robot,
    pub seeds: usize,
    /// Per-run planning budget in seconds.
    pub budget: f64,
    pub root_seed: u64,
    pub query_index: usize,
    pub train: TrainSettings,
    pub flow: FlowSpec,
    /// Low-occupancy gate on the morphing field; `None` uses the raw
    /// occupancy gradient.
    pub gate: Option<FieldGate>,
    pub sampler: SamplerOpts,
    pub record_draws: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            environments: vec!["divider2d".into()],
            planners: vec![PlannerKind::RrtStar, PlannerKind::RrtConnect],
            variants: vec![Variant::Uniform, Variant::Pdmp],
            robot: Robot::Point,
            seeds: 30,
            budget: 2.0,
            root_seed: 0,
            query_index: 0,
            train: TrainSettings::default(),
            flow: FlowSpec::default(),
            gate: Some(FieldGate::default()),
            sampler: SamplerOpts {
                // Two producers keep the morph pipeline ahead of one
                // planner thread even on small machines.
                workers: crate::sampler::default_workers().max(2),
                ..SamplerOpts::default()
            },
            record_draws: true,
        }
    }
}

impl BenchConfig {
    fn validate(&self) -> Result<()> {
        if self.seeds < 1 || self.environments.is_empty() {
            return Err(Error::InvalidConfig(
                "need at least one seed and one environment".into(),
            ));
        }
        Ok(())
    }
}

/// One planning run inside a cell. The raw draw log is reduced to the
/// binned series and the second-half counters at aggregation time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed_index: usize,
    pub success: bool,
    pub time_to_solution: Option<f64>,
    pub best_cost: Option<f64>,
    pub iterations: u64,
    pub stats: SamplerStats,
    pub draws: DrawBreakdown,
    pub path: Vec<Vec<f64>>,
    /// (prior draws, total draws) in the second half of the budget.
    pub second_half: Option<(u64, u64)>,
}

/// Mean cumulative draw counts over the cell's runs, sampled at bin edges.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub cum_morphed: Vec<f64>,
    pub cum_prior: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchCell {
    pub env: String,
    pub robot: Robot,
    pub planner: PlannerKind,
    pub variant: Variant,
    pub runs: Vec<RunRecord>,
    pub success_pct: f64,
    /// Mean/std of time-to-solution over successful runs.
    pub tts_mean: Option<f64>,
    pub tts_std: Option<f64>,
    pub draws: DrawBreakdown,
    pub series: TimeSeries,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub budget: f64,
    pub cells: Vec<BenchCell>,
}

/// Resolves a benchmark name or a path to an environment JSON file.
pub fn resolve_env(name: &str) -> Result<Environment> {
    if name.ends_with(".json") || name.contains('/') {
        Environment::load(Path::new(name))
    } else {
        make_benchmark_env(name)
    }
}

fn fnv1a(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Trains the occupancy model for an environment and reports held-out
/// accuracy measured on a fresh dataset over the original (unaugmented)
/// world, 80/20 split.
pub fn train_for_env(
    env: &Environment,
    settings: &TrainSettings,
    seed: u64,
) -> Result<(OccupancyNet, f64)> {
    let world = if settings.boundary_margin > 0.0 {
        with_boundary_walls(env, settings.boundary_margin)?
    } else {
        env.clone()
    };
    let ds = generate_dataset(&world, settings.samples, derive_seed(seed, 101));
    let arch = NetArch::new(env.dim(), settings.hidden.clone())?;
    let cfg = TrainConfig {
        epochs: settings.epochs,
        batch_size: settings.batch_size,
        learning_rate: settings.learning_rate,
        seed,
        ..TrainConfig::default()
    };
    let net = train_net(&ds, &arch, &cfg)?;
    let holdout = generate_dataset(env, 5_000, derive_seed(seed, 102));
    let acc = net.accuracy(&holdout.points, &holdout.labels)?;
    Ok((net, acc))
}

/// Builds the morphing field for the chosen robot.
pub fn make_field(
    robot: &Manipulator,
    net: Arc<OccupancyNet>,
    gate: Option<FieldGate>,
) -> Arc<dyn CostGradField> {
    match (robot, gate) {
        (Manipulator::PointRobot(_), None) => Arc::new(NetField::new(net)),
        (Manipulator::PointRobot(_), Some(g)) => Arc::new(NetField::gated(net, g)),
        (arm @ Manipulator::PlanarArm(_), None) => Arc::new(PulledField::new(net, arm.clone())),
        (arm @ Manipulator::PlanarArm(_), Some(g)) => {
            Arc::new(PulledField::gated(net, arm.clone(), g))
        }
    }
}

/// Picks the robot and its start/goal query for a bench cell.
fn robot_and_query(
    env: &Environment,
    robot: Robot,
    query_index: usize,
) -> Result<(Manipulator, Vec<f64>, Vec<f64>)> {
    match robot {
        Robot::Point => {
            let q = env
                .queries
                .get(query_index)
                .ok_or_else(|| Error::InvalidConfig("no point query at index".into()))?;
            Ok((
                Manipulator::point_robot_in(&env.bounds),
                q.start.clone(),
                q.goal.clone(),
            ))
        }
        Robot::Arm => {
            let arm = env
                .manipulator
                .clone()
                .ok_or_else(|| Error::InvalidConfig("environment has no manipulator".into()))?;
            let q = arm
                .queries()
                .get(query_index)
                .ok_or_else(|| Error::InvalidConfig("no arm query at index".into()))?
                .clone();
            Ok((arm, q.start, q.goal))
        }
    }
}

/// Runs one planning cell seed: constructs the sample source (with fresh
/// producers for the PDMP variant), plans, and tears the producers down.
#[allow(clippy::too_many_arguments)]
pub fn run_cell_seed(
    env: &Environment,
    robot: &Manipulator,
    start: &[f64],
    goal: &[f64],
    planner: PlannerKind,
    variant: Variant,
    field: Option<&Arc<dyn CostGradField>>,
    cfg: &BenchConfig,
    seed: u64,
) -> Result<PlanResult> {
    let mut req = PlanRequest::new(start.to_vec(), goal.to_vec(), planner);
    req.time_budget = cfg.budget;
    req.seed = seed;
    req.record_draws = cfg.record_draws;
    let limits: Vec<(f64, f64)> = robot.joint_limits().to_vec();
    match variant {
        Variant::Uniform => {
            let mut src = UniformSource::new(PriorSampler::new(limits, seed));
            plan(&req, &mut src, robot, env)
        }
        Variant::Pdmp => {
            let field = field.ok_or_else(|| Error::InvalidConfig("missing field".into()))?;
            let bucket = SampleBucket::new(cfg.sampler.bucket_capacity);
            let producer_prior = PriorSampler::new(limits.clone(), derive_seed(seed, 1));
            let handle = start_producers_opts(
                Arc::clone(&bucket),
                &producer_prior,
                Arc::clone(field),
                cfg.flow,
                &cfg.sampler,
            );
            let fallback = PriorSampler::new(limits, derive_seed(seed, 2));
            let mut src = BucketSource::new(Arc::clone(&bucket), fallback);
            let result = plan(&req, &mut src, robot, env);
            let stats = handle.stop_and_join()?;
            let mut result = result?;
            // Final producer counters (pushed/dropped keep moving briefly
            // after the plan loop ends).
            result.sample_stats.pushed = stats.pushed;
            result.sample_stats.dropped = stats.dropped;
            Ok(result)
        }
    }
}

const SERIES_BINS: usize = 40;

fn reduce_run(seed_index: usize, budget: f64, res: &PlanResult) -> (RunRecord, TimeSeries) {
    let mut series = TimeSeries::default();
    let mut second_half = None;
    if let Some(log) = &res.draw_log {
        series.t = (0..=SERIES_BINS)
            .map(|k| budget * k as f64 / SERIES_BINS as f64)
            .collect();
        series.cum_morphed = vec![0.0; SERIES_BINS + 1];
        series.cum_prior = vec![0.0; SERIES_BINS + 1];
        let (mut prior_2nd, mut total_2nd) = (0u64, 0u64);
        for ev in log {
            let bin = ((ev.t / budget) * SERIES_BINS as f64).ceil() as usize;
            let bin = bin.min(SERIES_BINS);
            if ev.source == crate::sampler::DrawSource::Prior {
                series.cum_prior[bin] += 1.0;
            } else {
                series.cum_morphed[bin] += 1.0;
            }
            if ev.t >= budget / 2.0 {
                total_2nd += 1;
                prior_2nd += (ev.source == crate::sampler::DrawSource::Prior) as u64;
            }
        }
        for k in 1..=SERIES_BINS {
            series.cum_morphed[k] += series.cum_morphed[k - 1];
            series.cum_prior[k] += series.cum_prior[k - 1];
        }
        second_half = Some((prior_2nd, total_2nd));
    }
    let record = RunRecord {
        seed_index,
        success: res.success,
        time_to_solution: res.time_to_solution,
        best_cost: res.best_cost,
        iterations: res.iterations,
        stats: res.sample_stats,
        draws: res.draws,
        path: res.path.clone(),
        second_half,
    };
    (record, series)
}

fn aggregate_cell(
    env: &str,
    robot: Robot,
    planner: PlannerKind,
    variant: Variant,
    runs: Vec<RunRecord>,
    series_acc: Vec<TimeSeries>,
) -> BenchCell {
    let n = runs.len().max(1);
    let successes: Vec<f64> = runs
        .iter()
        .filter(|r| r.success)
        .filter_map(|r| r.time_to_solution)
        .collect();
    let success_pct = 100.0 * runs.iter().filter(|r| r.success).count() as f64 / n as f64;
    let (tts_mean, tts_std) = if successes.is_empty() {
        (None, None)
    } else {
        let mean = successes.iter().sum::<f64>() / successes.len() as f64;
        let var = successes.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>()
            / successes.len() as f64;
        (Some(mean), Some(var.sqrt()))
    };
    let mut draws = DrawBreakdown::default();
    for r in &runs {
        draws.morphed.count += r.draws.morphed.count;
        draws.morphed.feasible += r.draws.morphed.feasible;
        draws.prior.count += r.draws.prior.count;
        draws.prior.feasible += r.draws.prior.feasible;
    }
    let mut series = TimeSeries::default();
    let with_series = series_acc.iter().filter(|s| !s.t.is_empty()).count();
    if with_series > 0 {
        let scale = 1.0 / with_series as f64;
        for s in series_acc.into_iter().filter(|s| !s.t.is_empty()) {
            if series.t.is_empty() {
                series.t = s.t.clone();
                series.cum_morphed = vec![0.0; s.cum_morphed.len()];
                series.cum_prior = vec![0.0; s.cum_prior.len()];
            }
            for k in 0..series.t.len() {
                series.cum_morphed[k] += s.cum_morphed[k] * scale;
                series.cum_prior[k] += s.cum_prior[k] * scale;
            }
        }
    }
    BenchCell {
        env: env.to_string(),
        robot,
        planner,
        variant,
        runs,
        success_pct,
        tts_mean,
        tts_std,
        draws,
        series,
    }
}

/// Runs the whole benchmark grid. Every cell is independently reproducible
/// from the root seed; a failing cell aborts with the underlying error.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for env_name in &cfg.environments {
        let env = resolve_env(env_name)?;
        let (robot, start, goal) = robot_and_query(&env, cfg.robot, cfg.query_index)?;
        let needs_net = cfg.variants.contains(&Variant::Pdmp);
        let field = if needs_net {
            let (net, _acc) =
                train_for_env(&env, &cfg.train, derive_seed(cfg.root_seed, fnv1a(env_name)))?;
            Some(make_field(&robot, Arc::new(net), cfg.gate))
        } else {
            None
        };
        for &planner in &cfg.planners {
            for &variant in &cfg.variants {
                let mut runs = Vec::with_capacity(cfg.seeds);
                let mut series_acc = Vec::with_capacity(cfg.seeds);
                for s in 0..cfg.seeds {
                    let seed = derive_seed(
                        cfg.root_seed,
                        fnv1a(&format!(
                            "{env_name}/{}/{}/{s}",
                            planner_str(planner),
                            variant.as_str()
                        )),
                    );
                    let res = run_cell_seed(
                        &env,
                        &robot,
                        &start,
                        &goal,
                        planner,
                        variant,
                        field.as_ref(),
                        cfg,
                        seed,
                    )?;
                    let (record, series) = reduce_run(s, cfg.budget, &res);
                    runs.push(record);
                    series_acc.push(series);
                }
                cells.push(aggregate_cell(
                    env_name, cfg.robot, planner, variant, runs, series_acc,
                ));
            }
        }
    }
    Ok(BenchReport {
        budget: cfg.budget,
        cells,
    })
}

pub const TABLE1_HEADER: &str = "env,robot,planner,variant,total_samples,from_prior,from_morphed,total_feasible_pct,prior_feasible_pct,morphed_feasible_pct";
pub const TABLE2_HEADER: &str =
    "env,robot,planner,variant,runs,success_pct,tts_mean_s,tts_std_s";

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_default()
}

/// Sample-feasibility table (totals and per-source breakdown).
pub fn table1_csv(report: &BenchReport) -> String {
    let mut out = String::from(TABLE1_HEADER);
    out.push('\n');
    for c in &report.cells {
        let d = &c.draws;
        let total = d.total();
        let total_pct = (total > 0)
            .then(|| 100.0 * (d.morphed.feasible + d.prior.feasible) as f64 / total as f64);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            c.env,
            c.robot.as_str(),
            planner_str(c.planner),
            c.variant.as_str(),
            total,
            d.prior.count,
            d.morphed.count,
            fmt_opt(total_pct, 2),
            fmt_opt(d.prior.feasible_pct(), 2),
            fmt_opt(d.morphed.feasible_pct(), 2),
        ));
    }
    out
}

/// Planner outcome table (success rate, time-to-solution moments).
pub fn table2_csv(report: &BenchReport) -> String {
    let mut out = String::from(TABLE2_HEADER);
    out.push('\n');
    for c in &report.cells {
        out.push_str(&format!(
            "{},{},{},{},{},{:.2},{},{}\n",
            c.env,
            c.robot.as_str(),
            planner_str(c.planner),
            c.variant.as_str(),
            c.runs.len(),
            c.success_pct,
            fmt_opt(c.tts_mean, 4),
            fmt_opt(c.tts_std, 4),
        ));
    }
    out
}

/// Success rate against a sweep of time thresholds, computed from the
/// recorded time-to-solution values (no re-running).
pub fn success_curves(report: &BenchReport) -> Vec<Series> {
    const STEPS: usize = 60;
    report
        .cells
        .iter()
        .map(|c| {
            let n = c.runs.len().max(1) as f64;
            let points = (0..=STEPS)
                .map(|k| {
                    let t = report.budget * k as f64 / STEPS as f64;
                    let ok = c
                        .runs
                        .iter()
                        .filter(|r| r.success && r.time_to_solution.unwrap_or(f64::MAX) <= t)
                        .count();
                    (t, 100.0 * ok as f64 / n)
                })
                .collect();
            Series {
                label: format!(
                    "{}/{}/{}",
                    c.env,
                    planner_str(c.planner),
                    c.variant.as_str()
                ),
                points,
            }
        })
        .collect()
}

fn morphed_fraction_series(report: &BenchReport) -> Vec<Series> {
    let mut out = Vec::new();
    for c in &report.cells {
        if c.variant != Variant::Pdmp || c.series.t.is_empty() {
            continue;
        }
        let zip = |v: &[f64]| -> Vec<(f64, f64)> {
            c.series.t.iter().copied().zip(v.iter().copied()).collect()
        };
        out.push(Series {
            label: format!("{}/{} morphed", c.env, planner_str(c.planner)),
            points: zip(&c.series.cum_morphed),
        });
        out.push(Series {
            label: format!("{}/{} prior", c.env, planner_str(c.planner)),
            points: zip(&c.series.cum_prior),
        });
    }
    out
}

/// Writes `table1.csv`, `table2.csv`, `success_curve.svg`, and
/// `morphed_fraction.svg` under `dir`; returns the paths.
pub fn emit_report(report: &BenchReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let files = [
        ("table1.csv", table1_csv(report)),
        ("table2.csv", table2_csv(report)),
        (
            "success_curve.svg",
            line_chart(
                "success rate vs planning time",
                "time (s)",
                "success (%)",
                &success_curves(report),
            ),
        ),
        (
            "morphed_fraction.svg",
            line_chart(
                "cumulative draws by source",
                "time (s)",
                "draws",
                &morphed_fraction_series(report),
            ),
        ),
    ];
    let mut written = Vec::new();
    for (name, content) in files {
        let path = dir.join(name);
        std::fs::write(&path, content)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_emits_headers_only() {
        let report = BenchReport {
            budget: 2.0,
            cells: vec![],
        };
        let t1 = table1_csv(&report);
        let t2 = table2_csv(&report);
        assert_eq!(t1.trim_end(), TABLE1_HEADER);
        assert_eq!(t2.trim_end(), TABLE2_HEADER);
    }

    #[test]
    fn trivial_bench_cell_succeeds() {
        // Single seed, empty env, uniform rrt-connect: 100% success.
        let env = Environment::new(
            "open",
            crate::geometry::Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            vec![],
            vec![crate::geometry::Query {
                start: vec![0.2, 0.2],
                goal: vec![0.8, 0.8],
            }],
        )
        .unwrap();
        let tmp = std::env::temp_dir().join("pdmp_bench_trivial");
        let _ = std::fs::create_dir_all(&tmp);
        let env_path = tmp.join("open.json");
        env.save(&env_path).unwrap();

        let cfg = BenchConfig {
            environments: vec![env_path.to_string_lossy().to_string()],
            planners: vec![PlannerKind::RrtConnect],
            variants: vec![Variant::Uniform],
            seeds: 1,
            budget: 3.0,
            ..BenchConfig::default()
        };
        let report = run_bench(&cfg).unwrap();
        assert_eq!(report.cells.len(), 1);
        assert_eq!(report.cells[0].success_pct, 100.0);

        // One data row per CSV, schema columns intact.
        let t1 = table1_csv(&report);
        let mut lines = t1.lines();
        assert_eq!(lines.next().unwrap(), TABLE1_HEADER);
        let row = lines.next().unwrap();
        assert_eq!(row.split(',').count(), TABLE1_HEADER.split(',').count());
        assert!(lines.next().is_none());

        // Conservation: from-prior + from-morphed == total samples.
        let d = &report.cells[0].draws;
        assert_eq!(d.prior.count + d.morphed.count, d.total());
        let files = emit_report(&report, &tmp).unwrap();
        assert_eq!(files.len(), 4);
        for f in files {
            assert!(f.exists());
        }
    }

    #[test]
    fn success_curve_is_monotone() {
        let report = BenchReport {
            budget: 2.0,
            cells: vec![BenchCell {
                env: "e".into(),
                robot: Robot::Point,
                planner: PlannerKind::RrtStar,
                variant: Variant::Uniform,
                runs: vec![
                    RunRecord {
                        seed_index: 0,
                        success: true,
                        time_to_solution: Some(0.5),
                        best_cost: Some(1.0),
                        iterations: 10,
                        stats: SamplerStats::default(),
                        draws: DrawBreakdown::default(),
                        path: vec![],
                        second_half: None,
                    },
                    RunRecord {
                        seed_index: 1,
                        success: false,
                        time_to_solution: None,
                        best_cost: None,
                        iterations: 10,
                        stats: SamplerStats::default(),
                        draws: DrawBreakdown::default(),
                        path: vec![],
                        second_half: None,
                    },
                ],
                success_pct: 50.0,
                tts_mean: Some(0.5),
                tts_std: Some(0.0),
                draws: DrawBreakdown::default(),
                series: TimeSeries::default(),
            }],
        };
        let curves = success_curves(&report);
        assert_eq!(curves.len(), 1);
        let pts = &curves[0].points;
        assert!(pts.windows(2).all(|w| w[1].1 >= w[0].1));
        assert_eq!(pts.last().unwrap().1, 50.0);
    }
}
