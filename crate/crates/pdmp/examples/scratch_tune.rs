// Temporary tuning scaffold; removed before release.
use std::sync::Arc;
use std::time::Instant;

use pdmp::bench::{make_field, run_cell_seed, train_for_env, BenchConfig, Robot, TrainSettings, Variant};
use pdmp::derive_seed;
use pdmp::flow::{morph_batch, FieldGate, FlowSpec, NetField};
use pdmp::geometry::{make_benchmark_env, point_in_collision};
use pdmp::planner::PlannerKind;
use pdmp::sampler::PriorSampler;

fn main() {
    let env = make_benchmark_env("divider2d").unwrap();
    let arm = env.manipulator.clone().unwrap();

    // Arm net: small and boundary-aware.
    let arm_settings = TrainSettings {
        hidden: vec![12, 12],
        samples: 30_000,
        epochs: 150,
        learning_rate: 1e-2,
        boundary_margin: 0.12,
        ..TrainSettings::default()
    };
    let t0 = Instant::now();
    let (arm_net, arm_acc) = train_for_env(&env, &arm_settings, 100).unwrap();
    println!("arm net: {:?} acc {:.4}", t0.elapsed(), arm_acc);
    let arm_net = Arc::new(arm_net);
    let afield = make_field(&arm, Arc::clone(&arm_net), Some(FieldGate::default()));

    // Point net: bigger, no walls.
    let point_settings = TrainSettings {
        hidden: vec![24, 24],
        samples: 30_000,
        epochs: 250,
        learning_rate: 7e-3,
        boundary_margin: 0.0,
        ..TrainSettings::default()
    };
    let (pnet, pacc) = train_for_env(&env, &point_settings, 100).unwrap();
    println!("point net acc {:.4}", pacc);
    let pnet = Arc::new(pnet);

    // Throughput: full-core morph rates.
    let limits: Vec<(f64, f64)> = env.bounds.min.iter().zip(&env.bounds.max).map(|(a, b)| (*a, *b)).collect();
    let mut pflat = Vec::new();
    PriorSampler::new(limits.clone(), 7).fill(&mut pflat, 20_000);
    let pfield = NetField::gated(Arc::clone(&pnet), FieldGate::default());
    {
        let spec = FlowSpec { horizon_t: 0.75, steps: 15, lambda: 2.0, ..FlowSpec::default() };
        let t = Instant::now();
        let _ = morph_batch(&pfield, &pflat, &spec, 1).unwrap();
        println!("point morph K=15: {:.0} samples/s", 20_000.0 / t.elapsed().as_secs_f64());
    }
    let mut aflat = Vec::new();
    PriorSampler::new(arm.joint_limits().to_vec(), 5).fill(&mut aflat, 10_000);
    for steps in [15usize, 8] {
        let spec = FlowSpec { horizon_t: 0.75, steps, lambda: 2.0, ..FlowSpec::default() };
        let t = Instant::now();
        let _ = morph_batch(afield.as_ref(), &aflat, &spec, 1).unwrap();
        println!("arm morph K={steps}: {:.0} samples/s", 10_000.0 / t.elapsed().as_secs_f64());
    }

    // Point census uplift + grid coverage with the point net, K=10 and K=20.
    let feas = |pts: &[f64]| -> f64 {
        let n = pts.len() / 2;
        let c = pts
            .chunks(2)
            .filter(|p| env.bounds.contains(p) && !point_in_collision(&env, p))
            .count();
        100.0 * c as f64 / n as f64
    };
    for steps in [15usize] {
        let spec = FlowSpec { horizon_t: 0.75, steps, lambda: 2.0, ..FlowSpec::default() };
        let mut flat = Vec::new();
        PriorSampler::new(limits.clone(), 7).fill(&mut flat, 10_000);
        let uni = feas(&flat);
        let mut m = morph_batch(&pfield, &flat, &spec, 1).unwrap();
        for p in m.chunks_mut(2) {
            p[0] = p[0].clamp(0.0, 1.0);
            p[1] = p[1].clamp(0.0, 1.0);
        }
        let mut flat2 = Vec::new();
        PriorSampler::new(limits.clone(), 3).fill(&mut flat2, 100_000);
        let mut m2 = morph_batch(&pfield, &flat2, &spec, 1).unwrap();
        for p in m2.chunks_mut(2) {
            p[0] = p[0].clamp(0.0, 1.0);
            p[1] = p[1].clamp(0.0, 1.0);
        }
        let mut cells = vec![0u32; 256];
        for p in m2.chunks(2) {
            let i = ((p[0] * 16.0) as usize).min(15);
            let j = ((p[1] * 16.0) as usize).min(15);
            cells[j * 16 + i] += 1;
        }
        let mut free_cells = 0;
        let mut covered = 0;
        let mut min_count = u32::MAX;
        for j in 0..16 {
            for i in 0..16 {
                let mut any_free = false;
                for a in 0..6 {
                    for b in 0..6 {
                        let x = (i as f64 + (a as f64 + 0.5) / 6.0) / 16.0;
                        let y = (j as f64 + (b as f64 + 0.5) / 6.0) / 16.0;
                        if !point_in_collision(&env, &[x, y]) {
                            any_free = true;
                        }
                    }
                }
                if any_free {
                    free_cells += 1;
                    if cells[j * 16 + i] > 0 {
                        covered += 1;
                        min_count = min_count.min(cells[j * 16 + i]);
                    }
                }
            }
        }
        println!(
            "K={steps}: census uniform {uni:.1}% morphed {:.1}% | coverage {covered}/{free_cells} (min count {min_count})",
            feas(&m)
        );
    }

    // Paired planning runs on the arm problem, bench flow K=10.
    let mut cfg = BenchConfig {
        robot: Robot::Arm,
        flow: FlowSpec { horizon_t: 0.75, steps: 8, lambda: 2.0, ..FlowSpec::default() },
        ..BenchConfig::default()
    };
    cfg.sampler.workers = 3;
    for planner in [PlannerKind::RrtStar, PlannerKind::RrtConnect] {
        for variant in [Variant::Uniform, Variant::Pdmp] {
            let mut succ = 0;
            let mut times = Vec::new();
            let mut prior2nd = Vec::new();
            let mut iter_rates = Vec::new();
            for s in 0..10u64 {
                let q = arm.queries()[0].clone();
                let res = run_cell_seed(
                    &env, &arm, &q.start, &q.goal, planner, variant,
                    Some(&afield), &cfg, derive_seed(1000, s),
                )
                .unwrap();
                iter_rates.push((res.iterations as f64 / cfg.budget / 1000.0) as u64);
                if res.success {
                    succ += 1;
                    times.push((res.time_to_solution.unwrap() * 1000.0) as u64);
                }
                if variant == Variant::Pdmp {
                    if let Some(log) = &res.draw_log {
                        let half: Vec<_> = log.iter().filter(|e| e.t >= cfg.budget / 2.0).collect();
                        let prior = half.iter().filter(|e| e.source == pdmp::sampler::DrawSource::Prior).count();
                        prior2nd.push(format!("{:.1}", 100.0 * prior as f64 / half.len().max(1) as f64));
                    }
                }
                eprint!(".");
            }
            times.sort_unstable();
            println!(
                "\n{planner:?}/{variant:?}: success {succ}/10 tts(ms) {times:?} draws(k/s) {iter_rates:?}"
            );
            if !prior2nd.is_empty() {
                println!("   2nd-half prior %: {prior2nd:?}");
            }
        }
    }
}
