// Temporary flow-config scan; removed before release.
use std::sync::Arc;

use pdmp::bench::{train_for_env, TrainSettings};
use pdmp::flow::{morph_batch, FieldGate, FlowSpec, NetField};
use pdmp::geometry::{make_benchmark_env, point_in_collision};
use pdmp::sampler::PriorSampler;

fn main() {
    let env = make_benchmark_env("divider2d").unwrap();
    let settings = TrainSettings {
        hidden: vec![24, 24],
        samples: 30_000,
        epochs: 250,
        batch_size: 128,
        learning_rate: 7e-3,
        boundary_margin: 0.0,
    };
    let limits: Vec<(f64, f64)> = env
        .bounds
        .min
        .iter()
        .zip(&env.bounds.max)
        .map(|(a, b)| (*a, *b))
        .collect();

    let feas = |pts: &[f64]| -> f64 {
        let n = pts.len() / 2;
        let c = pts
            .chunks(2)
            .filter(|p| env.bounds.contains(p) && !point_in_collision(&env, p))
            .count();
        100.0 * c as f64 / n as f64
    };

    let mut base10k = Vec::new();
    PriorSampler::new(limits.clone(), 7).fill(&mut base10k, 10_000);
    let uni = feas(&base10k);
    println!("uniform feasible {uni:.1}%");

    let mut base100k = Vec::new();
    PriorSampler::new(limits.clone(), 3).fill(&mut base100k, 100_000);

    for seed in [100u64, 101, 102, 103, 104] {
        let (net, acc) = train_for_env(&env, &settings, seed).unwrap();
        let field = NetField::gated(Arc::new(net), FieldGate::default());
        println!("--- seed {seed} acc {acc:.4}");
        for (t, steps, lambda) in [
            (1.0, 20, 1.0),
            (1.0, 20, 2.0),
            (1.0, 20, 4.0),
            (0.75, 15, 2.0),
        ] {
            let spec = FlowSpec {
                horizon_t: t,
                steps,
                lambda,
                ..FlowSpec::default()
            };
            let mut m = morph_batch(&field, &base10k, &spec, 1).unwrap();
            for p in m.chunks_mut(2) {
                p[0] = p[0].clamp(0.0, 1.0);
                p[1] = p[1].clamp(0.0, 1.0);
            }
            let uplift = feas(&m) - uni;
            let mut m2 = morph_batch(&field, &base100k, &spec, 1).unwrap();
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
            let mut missing = Vec::new();
            for j in 0..16 {
                for i in 0..16 {
                    let mut any_free = false;
                    for a in 0..8 {
                        for b in 0..8 {
                            let x = (i as f64 + (a as f64 + 0.5) / 8.0) / 16.0;
                            let y = (j as f64 + (b as f64 + 0.5) / 8.0) / 16.0;
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
                        } else {
                            missing.push((i, j));
                        }
                    }
                }
            }
            let mut low: Vec<((usize, usize), u32)> = Vec::new();
            for j in 0..16 {
                for i in 0..16 {
                    let c = cells[j * 16 + i];
                    if c > 0 && c <= 5 {
                        low.push(((i, j), c));
                    }
                }
            }
            println!(
                "t={t} K={steps} lam={lambda}: uplift {uplift:+.1} | cover {covered}/{free_cells} min {min_count} missing {missing:?} low {low:?}"
            );
        }
    }
}
