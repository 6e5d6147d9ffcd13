// Temporary training diagnostics; removed before release.
use pdmp::bench::{train_for_env, TrainSettings};
use pdmp::geometry::make_benchmark_env;

fn main() {
    let env = make_benchmark_env("divider2d").unwrap();
    for (hidden, samples, epochs, bs, lr) in [
        (vec![24, 24], 30_000, 200, 128, 1e-2),
        (vec![24, 24], 30_000, 300, 256, 1e-2),
        (vec![32, 32], 30_000, 200, 256, 1e-2),
        (vec![24, 24], 30_000, 250, 128, 7e-3),
        (vec![32, 32], 30_000, 250, 128, 7e-3),
    ] {
        let settings = TrainSettings {
            hidden: hidden.clone(),
            samples,
            epochs,
            batch_size: bs,
            learning_rate: lr,
            boundary_margin: 0.0,
        };
        let mut accs = Vec::new();
        let t0 = std::time::Instant::now();
        for seed in [100u64, 101, 102, 103, 104] {
            let (_net, acc) = train_for_env(&env, &settings, seed).unwrap();
            accs.push(format!("{acc:.4}"));
        }
        println!(
            "hidden {hidden:?} n {samples} e {epochs} bs {bs} lr {lr}: accs {accs:?} ({:.1?}/5)",
            t0.elapsed()
        );
    }
}
