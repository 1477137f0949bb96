//! Bisects the benchmark noise level so that the single classifiers place,
//! on average, a target fraction of online queries within 5 cm.
//!
//! Usage: `cargo run --release --example calibrate_noise [target] [lo] [hi]`

use std::time::Instant;

use vlcloc::eval::{run_experiment, ExperimentPlan};
use vlcloc::Method;

fn single_classifier_accuracy(noise_std: f64) -> (f64, f64) {
    let mut plan = ExperimentPlan::benchmark();
    plan.channel.noise_std = noise_std;
    plan.methods = vec![Method::Knn, Method::Elm, Method::RandomForest];
    let results = run_experiment(&plan).expect("benchmark run").results;
    let fractions: Vec<f64> = results.summary().expect("summary").iter().map(|s| s.within_5cm).collect();
    let worst = fractions.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    (worst, mean)
}

fn main() {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let target = args.first().copied().unwrap_or(0.85);
    let mut lo = args.get(1).copied().unwrap_or(1e-3);
    let mut hi = args.get(2).copied().unwrap_or(2e-2);
    for _ in 0..8 {
        // bisect on a log scale since accuracy falls off over decades
        let mid = (lo * hi).sqrt();
        let start = Instant::now();
        let (worst, mean) = single_classifier_accuracy(mid);
        println!(
            "noise_std {mid:.4e}: within 5 cm mean {mean:.3} worst {worst:.3} ({:.1} s)",
            start.elapsed().as_secs_f64()
        );
        if mean > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    println!("calibrated noise_std ~ {:.3e}", (lo * hi).sqrt());
}
