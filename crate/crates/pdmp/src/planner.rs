//! Sequential sampling-based planners (RRT*, RRT-Connect) consuming any
//! sample source, with exact edge collision checking against the ground-truth
//! geometry and k-d tree nearest-neighbor search.
//!
//! The planner runs on a single thread. When fed by the producer bucket it
//! never blocks on it: an empty bucket falls back to the prior, so degraded
//! producers only revert the planner to vanilla uniform sampling.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_in_collision, Environment};
use crate::kdtree::KdTree;
use crate::kinematics::Manipulator;
use crate::sampler::{draw_sample, DrawSource, PriorSampler, SampleBucket, SamplerStats};

/// C-space interpolation resolution for edge checks: max per-joint step in
/// radians between tested configurations.
pub const EDGE_RESOLUTION: f64 = 0.02;

/// Arm links are tested at sample points no further apart than this (meters).
pub const LINK_SAMPLE_SPACING: f64 = 0.05;

/// Exact validity check: true iff any point of a dense set of robot points
/// (all body points plus link samples every `LINK_SAMPLE_SPACING`) is inside
/// an obstacle or outside the workspace bounds.
pub fn config_in_collision(m: &Manipulator, env: &Environment, q: &[f64]) -> bool {
    debug_assert_eq!(q.len(), m.n_joints());
    match m {
        Manipulator::PointRobot(_) => !env.bounds.contains(q) || point_in_collision(env, q),
        Manipulator::PlanarArm(arm) => {
            let mut acc = 0.0;
            let (mut x, mut y) = (arm.base[0], arm.base[1]);
            for (len, qi) in arm.links.iter().zip(q) {
                acc += qi;
                let (s, c) = acc.sin_cos();
                let steps = (len / LINK_SAMPLE_SPACING).ceil() as usize;
                for k in 0..=steps {
                    let span = len * k as f64 / steps as f64;
                    let p = [x + span * c, y + span * s];
                    if !env.bounds.contains(&p) || point_in_collision(env, &p) {
                        return true;
                    }
                }
                x += len * c;
                y += len * s;
            }
            // Configured body points may sit between link samples.
            let mut pts = Vec::new();
            m.fk_all_body_points(q, &mut pts);
            pts.chunks(2)
                .any(|p| !env.bounds.contains(p) || point_in_collision(env, p))
        }
    }
}

/// Edge check by linear C-space interpolation at `resolution` max per-joint
/// step; endpoints included.
pub fn edge_in_collision_res(
    m: &Manipulator,
    env: &Environment,
    q1: &[f64],
    q2: &[f64],
    resolution: f64,
) -> bool {
    let max_step = q1
        .iter()
        .zip(q2)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let steps = (max_step / resolution).ceil().max(1.0) as usize;
    let mut q = vec![0.0; q1.len()];
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        for (qi, (a, b)) in q.iter_mut().zip(q1.iter().zip(q2)) {
            *qi = a + t * (b - a);
        }
        if config_in_collision(m, env, &q) {
            return true;
        }
    }
    false
}

/// [`edge_in_collision_res`] at the planner's default resolution.
pub fn edge_in_collision(m: &Manipulator, env: &Environment, q1: &[f64], q2: &[f64]) -> bool {
    edge_in_collision_res(m, env, q1, q2, EDGE_RESOLUTION)
}

/// Re-validates a path: consecutive configs must pass the edge check at the
/// given resolution and stay inside joint limits.
pub fn path_is_collision_free(
    m: &Manipulator,
    env: &Environment,
    path: &[Vec<f64>],
    resolution: f64,
) -> bool {
    if path.is_empty() {
        return false;
    }
    if path.iter().any(|q| !m.within_limits(q)) {
        return false;
    }
    if path.len() == 1 {
        return !config_in_collision(m, env, &path[0]);
    }
    path.windows(2)
        .all(|w| !edge_in_collision_res(m, env, &w[0], &w[1], resolution))
}

/// Where the planner pulls samples from.
pub trait SampleSource {
    fn draw(&mut self) -> (Vec<f64>, DrawSource);
    fn stats(&self) -> SamplerStats;
}

/// Vanilla uniform sampling; what the pipeline reduces to with producers
/// disabled.
pub struct UniformSource {
    prior: PriorSampler,
    drawn: u64,
}

impl UniformSource {
    pub fn new(prior: PriorSampler) -> Self {
        Self { prior, drawn: 0 }
    }
}

impl SampleSource for UniformSource {
    fn draw(&mut self) -> (Vec<f64>, DrawSource) {
        self.drawn += 1;
        (self.prior.draw(), DrawSource::Prior)
    }

    fn stats(&self) -> SamplerStats {
        SamplerStats {
            popped_prior: self.drawn,
            ..SamplerStats::default()
        }
    }
}

/// Non-blocking pop from the producer bucket with prior fallback.
pub struct BucketSource {
    bucket: Arc<SampleBucket>,
    fallback: PriorSampler,
}

impl BucketSource {
    pub fn new(bucket: Arc<SampleBucket>, fallback: PriorSampler) -> Self {
        Self { bucket, fallback }
    }
}

impl SampleSource for BucketSource {
    fn draw(&mut self) -> (Vec<f64>, DrawSource) {
        draw_sample(&self.bucket, &mut self.fallback)
    }

    fn stats(&self) -> SamplerStats {
        self.bucket.stats()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerKind {
    RrtStar,
    RrtConnect,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanRequest {
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    /// Wall-clock budget in seconds; the anytime loop runs until it expires.
    pub time_budget: f64,
    pub planner: PlannerKind,
    /// C-space distance within which the goal counts as reached.
    pub goal_tolerance: f64,
    pub seed: u64,
    /// Steering step; default 0.2 x C-space diameter / 10.
    pub eta: Option<f64>,
    /// Rewiring constant; default 2 x eta.
    pub gamma: Option<f64>,
    /// Optional hard iteration cap (mainly for deterministic tests).
    pub max_iterations: Option<u64>,
    /// Keep a per-draw log of (time, source, feasible).
    pub record_draws: bool,
}

impl PlanRequest {
    pub fn new(start: Vec<f64>, goal: Vec<f64>, planner: PlannerKind) -> Self {
        Self {
            start,
            goal,
            time_budget: 2.0,
            planner,
            goal_tolerance: 1e-6,
            seed: 0,
            eta: None,
            gamma: None,
            max_iterations: None,
            record_draws: false,
        }
    }
}

/// One sample draw as seen by the planner.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DrawEvent {
    /// Seconds since planning started.
    pub t: f64,
    pub source: DrawSource,
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct FeasiblePct {
    pub overall: Option<f64>,
    pub prior: Option<f64>,
    pub morphed: Option<f64>,
}

/// Absolute per-source draw/feasibility counts for one planning run.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct DrawBreakdown {
    pub morphed: CensusBucket,
    pub prior: CensusBucket,
}

impl DrawBreakdown {
    pub fn total(&self) -> u64 {
        self.morphed.count + self.prior.count
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanResult {
    pub success: bool,
    /// Start-to-goal configurations; empty on failure.
    pub path: Vec<Vec<f64>>,
    /// Seconds until the first feasible path; `None` on failure.
    pub time_to_solution: Option<f64>,
    /// C-space length of the best path found.
    pub best_cost: Option<f64>,
    pub iterations: u64,
    pub sample_stats: SamplerStats,
    pub feasible_sample_pct: FeasiblePct,
    pub draws: DrawBreakdown,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub draw_log: Option<Vec<DrawEvent>>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Search tree with parent pointers and root-distance bookkeeping.
struct Tree {
    kd: KdTree,
    parent: Vec<usize>,
    cost: Vec<f64>,
    children: Vec<Vec<usize>>,
}

const NO_PARENT: usize = usize::MAX;

impl Tree {
    fn new(dim: usize, root: &[f64]) -> Self {
        let mut kd = KdTree::new(dim);
        kd.insert(root);
        Self {
            kd,
            parent: vec![NO_PARENT],
            cost: vec![0.0],
            children: vec![Vec::new()],
        }
    }

    fn len(&self) -> usize {
        self.parent.len()
    }

    fn insert(&mut self, q: &[f64], parent: usize, edge: f64) -> usize {
        let idx = self.kd.insert(q);
        self.parent.push(parent);
        self.cost.push(self.cost[parent] + edge);
        self.children.push(Vec::new());
        self.children[parent].push(idx);
        idx
    }

    /// Moves `node` under `new_parent` and refreshes subtree costs.
    fn reparent(&mut self, node: usize, new_parent: usize, edge: f64) {
        let old = self.parent[node];
        if old != NO_PARENT {
            self.children[old].retain(|&c| c != node);
        }
        self.parent[node] = new_parent;
        self.children[new_parent].push(node);
        let delta = self.cost[new_parent] + edge - self.cost[node];
        // Depth-first cost refresh over the moved subtree.
        let mut stack = vec![node];
        while let Some(v) = stack.pop() {
            self.cost[v] += delta;
            stack.extend_from_slice(&self.children[v]);
        }
    }

    fn path_from_root(&self, node: usize) -> Vec<Vec<f64>> {
        let mut chain = Vec::new();
        let mut v = node;
        loop {
            chain.push(self.kd.point(v).to_vec());
            if self.parent[v] == NO_PARENT {
                break;
            }
            v = self.parent[v];
        }
        chain.reverse();
        chain
    }

    /// Full structural validation: single root, acyclic parents, costs
    /// consistent with edge lengths. Run at termination in every build and
    /// incrementally (per touched node) in debug builds.
    fn validate(&self) {
        let n = self.len();
        let mut roots = 0;
        for v in 0..n {
            if self.parent[v] == NO_PARENT {
                roots += 1;
                assert_eq!(self.cost[v], 0.0, "root cost");
                continue;
            }
            let p = self.parent[v];
            let edge = dist(self.kd.point(v), self.kd.point(p));
            assert!(
                (self.cost[v] - self.cost[p] - edge).abs() < 1e-9,
                "cost inconsistent at node {v}"
            );
            // Bounded walk to the root proves acyclicity.
            let mut hops = 0;
            let mut u = v;
            while self.parent[u] != NO_PARENT {
                u = self.parent[u];
                hops += 1;
                assert!(hops <= n, "parent cycle at node {v}");
            }
        }
        assert_eq!(roots, 1, "exactly one root");
    }

    #[cfg(debug_assertions)]
    fn debug_check_node(&self, v: usize) {
        if self.parent[v] == NO_PARENT {
            return;
        }
        let p = self.parent[v];
        let edge = dist(self.kd.point(v), self.kd.point(p));
        debug_assert!((self.cost[v] - self.cost[p] - edge).abs() < 1e-9);
        let mut hops = 0;
        let mut u = v;
        while self.parent[u] != NO_PARENT {
            u = self.parent[u];
            hops += 1;
            debug_assert!(hops <= self.len(), "parent cycle at node {v}");
        }
    }
}

struct PlanContext<'a> {
    m: &'a Manipulator,
    env: &'a Environment,
    eta: f64,
    gamma: f64,
    dim: usize,
}

impl<'a> PlanContext<'a> {
    fn new(req: &PlanRequest, m: &'a Manipulator, env: &'a Environment) -> Result<Self> {
        let dim = m.n_joints();
        for (name, q) in [("start", &req.start), ("goal", &req.goal)] {
            if q.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: q.len(),
                });
            }
            if !m.within_limits(q) {
                return Err(Error::InvalidConfig(format!("{name} outside joint limits")));
            }
        }
        if !(req.time_budget > 0.0) {
            return Err(Error::InvalidConfig("time budget must be positive".into()));
        }
        if config_in_collision(m, env, &req.start) {
            return Err(Error::StartInCollision);
        }
        if config_in_collision(m, env, &req.goal) {
            return Err(Error::GoalInCollision);
        }
        let eta = req.eta.unwrap_or(0.2 * m.cspace_diameter() / 10.0);
        let gamma = req.gamma.unwrap_or(2.0 * eta);
        Ok(Self {
            m,
            env,
            eta,
            gamma,
            dim,
        })
    }

    fn steer(&self, from: &[f64], to: &[f64]) -> Vec<f64> {
        let d = dist(from, to);
        if d <= self.eta {
            return to.to_vec();
        }
        let s = self.eta / d;
        from.iter().zip(to).map(|(f, t)| f + (t - f) * s).collect()
    }

    fn rewire_radius(&self, n: usize) -> f64 {
        if n < 2 {
            return 0.0;
        }
        let r = self.gamma * ((n as f64).ln() / n as f64).powf(1.0 / self.dim as f64);
        r.min(self.eta)
    }

    fn blocked(&self, a: &[f64], b: &[f64]) -> bool {
        edge_in_collision(self.m, self.env, a, b)
    }

    /// One RRT* extension toward `target`: nearest, steer, collision check,
    /// choose-parent over the rewiring radius, insert, rewire. Returns the
    /// new node index.
    fn extend(&self, tree: &mut Tree, target: &[f64], scratch: &mut Vec<usize>) -> Option<usize> {
        let (nn, nn_d2) = tree.kd.nearest(target)?;
        if nn_d2 == 0.0 {
            return None;
        }
        let x_new = self.steer(tree.kd.point(nn), target);
        if config_in_collision(self.m, self.env, &x_new) {
            return None;
        }
        if self.blocked(tree.kd.point(nn), &x_new) {
            return None;
        }
        let r = self.rewire_radius(tree.len());
        tree.kd.within_radius(&x_new, r, scratch);

        // Choose parent: cheapest collision-free connection; candidates are
        // sorted by (cost, index) so ties stay deterministic.
        let mut parent = nn;
        let nn_cost = tree.cost[nn] + dist(tree.kd.point(nn), &x_new);
        let mut cands: Vec<(f64, usize)> = scratch
            .iter()
            .map(|&v| (tree.cost[v] + dist(tree.kd.point(v), &x_new), v))
            .collect();
        cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (c, v) in &cands {
            if *c >= nn_cost {
                break;
            }
            if !self.blocked(tree.kd.point(*v), &x_new) {
                parent = *v;
                break;
            }
        }
        let idx = tree.insert(&x_new, parent, dist(tree.kd.point(parent), &x_new));

        // Rewire neighbors through the new node where that is cheaper.
        for &v in scratch.iter() {
            if v == parent {
                continue;
            }
            let edge = dist(&x_new, tree.kd.point(v));
            if tree.cost[idx] + edge + 1e-12 < tree.cost[v]
                && !self.blocked(&x_new, tree.kd.point(v))
            {
                tree.reparent(v, idx, edge);
                #[cfg(debug_assertions)]
                tree.debug_check_node(v);
            }
        }
        #[cfg(debug_assertions)]
        tree.debug_check_node(idx);
        Some(idx)
    }
}

/// Per-run draw bookkeeping shared by both planners.
struct DrawStats {
    counts: [u64; 2],
    feasible: [u64; 2],
    log: Option<Vec<DrawEvent>>,
}

impl DrawStats {
    fn new(record: bool) -> Self {
        Self {
            counts: [0; 2],
            feasible: [0; 2],
            log: record.then(Vec::new),
        }
    }

    fn record(&mut self, src: DrawSource, feasible: bool, t: f64) {
        let i = (src == DrawSource::Prior) as usize;
        self.counts[i] += 1;
        self.feasible[i] += feasible as u64;
        if let Some(log) = &mut self.log {
            log.push(DrawEvent {
                t,
                source: src,
                feasible,
            });
        }
    }

    fn pct(&self) -> FeasiblePct {
        let frac = |f: u64, c: u64| (c > 0).then(|| 100.0 * f as f64 / c as f64);
        FeasiblePct {
            overall: frac(
                self.feasible[0] + self.feasible[1],
                self.counts[0] + self.counts[1],
            ),
            prior: frac(self.feasible[1], self.counts[1]),
            morphed: frac(self.feasible[0], self.counts[0]),
        }
    }

    fn breakdown(&self) -> DrawBreakdown {
        DrawBreakdown {
            morphed: CensusBucket {
                count: self.counts[0],
                feasible: self.feasible[0],
            },
            prior: CensusBucket {
                count: self.counts[1],
                feasible: self.feasible[1],
            },
        }
    }
}

/// Start-equals-goal shortcut shared by both planners.
fn trivial_result(
    req: &PlanRequest,
    source: &mut dyn SampleSource,
    t0: Instant,
) -> Option<PlanResult> {
    if dist(&req.start, &req.goal) > req.goal_tolerance {
        return None;
    }
    Some(PlanResult {
        success: true,
        path: vec![req.start.clone()],
        time_to_solution: Some(t0.elapsed().as_secs_f64()),
        best_cost: Some(0.0),
        iterations: 0,
        sample_stats: source.stats(),
        feasible_sample_pct: FeasiblePct::default(),
        draws: DrawBreakdown::default(),
        draw_log: req.record_draws.then(Vec::new),
    })
}

fn best_link_cost(tree: &Tree, links: &[(usize, f64)]) -> f64 {
    links
        .iter()
        .map(|&(v, d)| tree.cost[v] + d)
        .fold(f64::INFINITY, f64::min)
}

/// Anytime RRT*: draw, extend, rewire, and attempt a goal connection every
/// iteration; keeps improving until the budget expires. Deterministic given
/// the request seed and a deterministic sample source.
pub fn rrt_star(
    req: &PlanRequest,
    source: &mut dyn SampleSource,
    m: &Manipulator,
    env: &Environment,
) -> Result<PlanResult> {
    let ctx = PlanContext::new(req, m, env)?;
    let t0 = Instant::now();
    if let Some(r) = trivial_result(req, source, t0) {
        return Ok(r);
    }
    let mut tree = Tree::new(ctx.dim, &req.start);
    let mut goal_links: Vec<(usize, f64)> = Vec::new();
    let mut stats = DrawStats::new(req.record_draws);
    let mut scratch = Vec::new();
    let mut iterations = 0u64;
    let mut tts = None;
    let mut prev_best = f64::INFINITY;

    while t0.elapsed().as_secs_f64() < req.time_budget
        && req.max_iterations.is_none_or(|cap| iterations < cap)
    {
        iterations += 1;
        let (sample, src) = source.draw();
        let feasible = !config_in_collision(m, env, &sample);
        stats.record(src, feasible, t0.elapsed().as_secs_f64());

        if let Some(idx) = ctx.extend(&mut tree, &sample, &mut scratch) {
            let gd = dist(tree.kd.point(idx), &req.goal);
            if gd <= 2.0 * ctx.eta && !ctx.blocked(tree.kd.point(idx), &req.goal) {
                goal_links.push((idx, gd));
                tts.get_or_insert_with(|| t0.elapsed().as_secs_f64());
            }
        }
        if cfg!(debug_assertions) && !goal_links.is_empty() {
            let best = best_link_cost(&tree, &goal_links);
            debug_assert!(best <= prev_best + 1e-9, "anytime cost regressed");
            prev_best = best;
        }
    }
    tree.validate();

    let best = goal_links
        .iter()
        .map(|&(v, d)| (tree.cost[v] + d, v))
        .min_by(|a, b| a.partial_cmp(b).unwrap());
    let (path, best_cost) = match best {
        Some((c, v)) => {
            let mut path = tree.path_from_root(v);
            path.push(req.goal.clone());
            (path, Some(c))
        }
        None => (Vec::new(), None),
    };
    Ok(PlanResult {
        success: best_cost.is_some(),
        path,
        time_to_solution: tts,
        best_cost,
        iterations,
        sample_stats: source.stats(),
        feasible_sample_pct: stats.pct(),
        draws: stats.breakdown(),
        draw_log: stats.log,
    })
}

/// Bidirectional RRT*-Connect: trees rooted at start and goal are extended
/// alternately; after each successful extension the other tree greedily
/// steers toward the new node until it connects or is blocked. Rewiring
/// applies within each tree as in [`rrt_star`].
pub fn rrt_connect(
    req: &PlanRequest,
    source: &mut dyn SampleSource,
    m: &Manipulator,
    env: &Environment,
) -> Result<PlanResult> {
    let ctx = PlanContext::new(req, m, env)?;
    let t0 = Instant::now();
    if let Some(r) = trivial_result(req, source, t0) {
        return Ok(r);
    }
    // trees[0] is rooted at the start, trees[1] at the goal.
    let mut trees = [Tree::new(ctx.dim, &req.start), Tree::new(ctx.dim, &req.goal)];
    let mut bridges: Vec<(usize, usize)> = Vec::new();
    let mut stats = DrawStats::new(req.record_draws);
    let mut scratch = Vec::new();
    let mut iterations = 0u64;
    let mut tts = None;
    let connect_cap = (ctx.m.cspace_diameter() / ctx.eta).ceil() as usize + 2;

    while t0.elapsed().as_secs_f64() < req.time_budget
        && req.max_iterations.is_none_or(|cap| iterations < cap)
    {
        iterations += 1;
        let a = (iterations % 2) as usize;
        let b = 1 - a;
        let (sample, src) = source.draw();
        let feasible = !config_in_collision(m, env, &sample);
        stats.record(src, feasible, t0.elapsed().as_secs_f64());

        let Some(idx_a) = ctx.extend(&mut trees[a], &sample, &mut scratch) else {
            continue;
        };
        let x_new = trees[a].kd.point(idx_a).to_vec();

        // Greedy connect: keep steering the other tree toward x_new.
        let mut reached = None;
        for _ in 0..connect_cap {
            match ctx.extend(&mut trees[b], &x_new, &mut scratch) {
                None => break,
                Some(idx_b) => {
                    if dist(trees[b].kd.point(idx_b), &x_new) == 0.0 {
                        reached = Some(idx_b);
                        break;
                    }
                }
            }
        }
        if let Some(idx_b) = reached {
            let bridge = if a == 0 { (idx_a, idx_b) } else { (idx_b, idx_a) };
            bridges.push(bridge);
            tts.get_or_insert_with(|| t0.elapsed().as_secs_f64());
        }
    }
    trees[0].validate();
    trees[1].validate();

    let best = bridges
        .iter()
        .map(|&(s, g)| (trees[0].cost[s] + trees[1].cost[g], s, g))
        .min_by(|x, y| x.partial_cmp(y).unwrap());
    let (path, best_cost) = match best {
        Some((c, s, g)) => {
            let mut path = trees[0].path_from_root(s);
            let mut tail = trees[1].path_from_root(g);
            tail.reverse();
            path.extend(tail.into_iter().skip(1));
            (path, Some(c))
        }
        None => (Vec::new(), None),
    };
    Ok(PlanResult {
        success: best_cost.is_some(),
        path,
        time_to_solution: tts,
        best_cost,
        iterations,
        sample_stats: source.stats(),
        feasible_sample_pct: stats.pct(),
        draws: stats.breakdown(),
        draw_log: stats.log,
    })
}

/// Dispatch on the requested planner kind.
pub fn plan(
    req: &PlanRequest,
    source: &mut dyn SampleSource,
    m: &Manipulator,
    env: &Environment,
) -> Result<PlanResult> {
    match req.planner {
        PlannerKind::RrtStar => rrt_star(req, source, m, env),
        PlannerKind::RrtConnect => rrt_connect(req, source, m, env),
    }
}

/// Per-source feasibility breakdown of `n` draws.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct CensusBucket {
    pub count: u64,
    pub feasible: u64,
}

impl CensusBucket {
    pub fn feasible_pct(&self) -> Option<f64> {
        (self.count > 0).then(|| 100.0 * self.feasible as f64 / self.count as f64)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Census {
    pub total: u64,
    pub feasible_pct: f64,
    pub prior: CensusBucket,
    pub morphed: CensusBucket,
}

/// Draws `n` samples and classifies each by the exact collision oracle and
/// by its source.
pub fn feasibility_census(
    source: &mut dyn SampleSource,
    m: &Manipulator,
    env: &Environment,
    n: usize,
) -> Census {
    assert!(n >= 1);
    let mut buckets = [CensusBucket::default(), CensusBucket::default()];
    for _ in 0..n {
        let (q, src) = source.draw();
        let b = &mut buckets[(src == DrawSource::Prior) as usize];
        b.count += 1;
        b.feasible += !config_in_collision(m, env, &q) as u64;
    }
    let feasible = buckets[0].feasible + buckets[1].feasible;
    Census {
        total: n as u64,
        feasible_pct: 100.0 * feasible as f64 / n as f64,
        prior: buckets[1],
        morphed: buckets[0],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_benchmark_env, Aabb, Obstacle};

    fn empty_env(name: &str) -> Environment {
        Environment::new(
            name,
            Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            vec![],
            vec![],
        )
        .unwrap()
    }

    fn wall_env() -> Environment {
        Environment::new(
            "wall",
            Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            vec![Obstacle::Box {
                min: vec![0.45, 0.0],
                max: vec![0.55, 1.0],
            }],
            vec![],
        )
        .unwrap()
    }

    fn point_robot(env: &Environment) -> Manipulator {
        Manipulator::point_robot_in(&env.bounds)
    }

    fn uniform(env: &Environment, seed: u64) -> UniformSource {
        UniformSource::new(PriorSampler::new(
            env.bounds
                .min
                .iter()
                .zip(&env.bounds.max)
                .map(|(a, b)| (*a, *b))
                .collect(),
            seed,
        ))
    }

    #[test]
    fn point_robot_collision_and_bounds() {
        let env = wall_env();
        let m = point_robot(&env);
        assert!(config_in_collision(&m, &env, &[0.5, 0.5]));
        assert!(!config_in_collision(&m, &env, &[0.2, 0.5]));
        // Outside bounds counts as collision.
        assert!(config_in_collision(&m, &env, &[1.5, 0.5]));
    }

    #[test]
    fn arm_inside_empty_bounds_is_free() {
        let env = Environment::new(
            "big",
            Aabb::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap(),
            vec![],
            vec![],
        )
        .unwrap();
        let m = Manipulator::planar_arm(
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            vec![(-3.1, 3.1); 2],
            crate::kinematics::default_body_points(2),
        )
        .unwrap();
        assert!(!config_in_collision(&m, &env, &[0.3, 0.5]));
    }

    #[test]
    fn arm_grazing_boundary_collides() {
        // 1-link arm pointing at a box whose face touches the end-effector.
        let env = Environment::new(
            "graze",
            Aabb::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(),
            vec![Obstacle::Box {
                min: vec![1.0, -0.1],
                max: vec![1.2, 0.1],
            }],
            vec![],
        )
        .unwrap();
        let m = Manipulator::planar_arm(
            vec![1.0],
            vec![0.0, 0.0],
            vec![(-3.1, 3.1)],
            vec![(0, 1.0)],
        )
        .unwrap();
        assert!(config_in_collision(&m, &env, &[0.0]));
        assert!(!config_in_collision(&m, &env, &[0.3]));
    }

    #[test]
    fn edge_checks() {
        let env = wall_env();
        let m = point_robot(&env);
        // Same free config: no collision.
        assert!(!edge_in_collision(&m, &env, &[0.2, 0.5], &[0.2, 0.5]));
        // Crossing the wall: the midpoint is provably inside it.
        assert!(edge_in_collision(&m, &env, &[0.2, 0.5], &[0.8, 0.5]));
        // Empty environment: any edge is free.
        let open = empty_env("open");
        let mo = point_robot(&open);
        assert!(!edge_in_collision(&mo, &open, &[0.1, 0.1], &[0.9, 0.9]));
    }

    #[test]
    fn start_equals_goal_is_immediate() {
        let env = empty_env("open");
        let m = point_robot(&env);
        for kind in [PlannerKind::RrtStar, PlannerKind::RrtConnect] {
            let req = PlanRequest::new(vec![0.4, 0.4], vec![0.4, 0.4], kind);
            let mut src = uniform(&env, 1);
            let res = plan(&req, &mut src, &m, &env).unwrap();
            assert!(res.success);
            assert_eq!(res.path, vec![vec![0.4, 0.4]]);
            assert!(res.time_to_solution.unwrap() < 0.05);
        }
    }

    #[test]
    fn start_in_collision_is_an_error() {
        let env = wall_env();
        let m = point_robot(&env);
        let req = PlanRequest::new(vec![0.5, 0.5], vec![0.2, 0.5], PlannerKind::RrtStar);
        let mut src = uniform(&env, 1);
        assert!(matches!(
            plan(&req, &mut src, &m, &env),
            Err(Error::StartInCollision)
        ));
        let req = PlanRequest::new(vec![0.2, 0.5], vec![0.5, 0.5], PlannerKind::RrtConnect);
        assert!(matches!(
            plan(&req, &mut src, &m, &env),
            Err(Error::GoalInCollision)
        ));
    }

    #[test]
    fn empty_env_near_straight_line() {
        let env = empty_env("open");
        let m = point_robot(&env);
        for kind in [PlannerKind::RrtStar, PlannerKind::RrtConnect] {
            let mut req = PlanRequest::new(vec![0.2, 0.5], vec![0.8, 0.5], kind);
            // Wider rewiring than the default so the anytime loop can
            // actually tighten the path toward the optimum.
            req.gamma = Some(1.5);
            req.time_budget = 8.0;
            req.max_iterations = Some(25_000);
            let mut src = uniform(&env, 7);
            let res = plan(&req, &mut src, &m, &env).unwrap();
            assert!(res.success, "{kind:?}");
            let cost = res.best_cost.unwrap();
            assert!(cost <= 1.2 * 0.6, "{kind:?} cost {cost} vs straight line 0.6");
            assert!(path_is_collision_free(
                &m,
                &env,
                &res.path,
                EDGE_RESOLUTION / 2.0
            ));
            assert_eq!(res.path.first().unwrap(), &vec![0.2, 0.5]);
            let last = res.path.last().unwrap();
            assert!(dist(last, &[0.8, 0.5]) <= req.goal_tolerance);
        }
    }

    #[test]
    fn unreachable_goal_fails_cleanly() {
        // A ring of boxes encloses the goal pocket.
        let env = Environment::new(
            "ring",
            Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            vec![
                Obstacle::Box {
                    min: vec![0.6, 0.6],
                    max: vec![0.9, 0.65],
                },
                Obstacle::Box {
                    min: vec![0.6, 0.85],
                    max: vec![0.9, 0.9],
                },
                Obstacle::Box {
                    min: vec![0.6, 0.6],
                    max: vec![0.65, 0.9],
                },
                Obstacle::Box {
                    min: vec![0.85, 0.6],
                    max: vec![0.9, 0.9],
                },
            ],
            vec![],
        )
        .unwrap();
        let m = point_robot(&env);
        let mut req = PlanRequest::new(vec![0.1, 0.1], vec![0.75, 0.75], PlannerKind::RrtStar);
        req.time_budget = 0.2;
        let mut src = uniform(&env, 3);
        let res = plan(&req, &mut src, &m, &env).unwrap();
        assert!(!res.success);
        assert!(res.path.is_empty());
        assert!(res.time_to_solution.is_none());
    }

    #[test]
    fn deterministic_given_seed_and_source() {
        let env = make_benchmark_env("clutter2d").unwrap();
        let m = point_robot(&env);
        let q = &env.queries[0];
        let run = |seed| {
            let mut req = PlanRequest::new(q.start.clone(), q.goal.clone(), PlannerKind::RrtStar);
            req.max_iterations = Some(3000);
            req.time_budget = 30.0;
            req.seed = seed;
            let mut src = uniform(&env, seed);
            plan(&req, &mut src, &m, &env).unwrap()
        };
        let (a, b) = (run(11), run(11));
        assert_eq!(a.path, b.path);
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.best_cost, b.best_cost);
        assert_eq!(a.sample_stats, b.sample_stats);
    }

    #[test]
    fn census_empty_env_is_fully_feasible() {
        let env = empty_env("open");
        let m = point_robot(&env);
        let mut src = uniform(&env, 5);
        let census = feasibility_census(&mut src, &m, &env, 2000);
        assert_eq!(census.feasible_pct, 100.0);
        assert_eq!(census.total, 2000);
        assert_eq!(census.prior.count, 2000);
        assert_eq!(census.morphed.count, 0);
    }

    #[test]
    fn census_tracks_pocket_volume() {
        // Occupied except two free pockets; feasibility tracks their area.
        let env = Environment::new(
            "pockets",
            Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            vec![
                Obstacle::Box {
                    min: vec![0.0, 0.2],
                    max: vec![1.0, 1.0],
                },
                Obstacle::Box {
                    min: vec![0.3, 0.0],
                    max: vec![0.7, 0.2],
                },
            ],
            vec![],
        )
        .unwrap();
        let m = point_robot(&env);
        let mut src = uniform(&env, 9);
        let census = feasibility_census(&mut src, &m, &env, 20_000);
        // Free area = 1 - (0.8 + 0.08) = 0.12.
        assert!(
            (census.feasible_pct - 12.0).abs() < 1.5,
            "{}",
            census.feasible_pct
        );
    }

    #[test]
    fn rrt_connect_solves_wall_gap() {
        let env = make_benchmark_env("divider2d").unwrap();
        let m = point_robot(&env);
        let q = &env.queries[0];
        let mut req = PlanRequest::new(q.start.clone(), q.goal.clone(), PlannerKind::RrtConnect);
        req.time_budget = 10.0;
        let mut src = uniform(&env, 12);
        let res = plan(&req, &mut src, &m, &env).unwrap();
        assert!(res.success);
        assert!(path_is_collision_free(
            &m,
            &env,
            &res.path,
            EDGE_RESOLUTION / 2.0
        ));
        assert_eq!(res.path.first().unwrap(), &q.start);
        assert_eq!(res.path.last().unwrap(), &q.goal);
    }
}
