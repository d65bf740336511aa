//! Scratch harness for observing training trajectories.

use edgeperf::accel::AcceleratorConfig;
use edgeperf::cost::{estimate, EstimateMode};
use edgeperf::enumerate::{enumerate_cells, EnumerationMode};
use edgeperf::gnn::{train, TrainConfig};
use edgeperf::network::{expand_network, NetworkSpec};

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "toy".into());
    let n: usize = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(100);
    let epochs: usize = std::env::args()
        .nth(3)
        .and_then(|s| s.parse().ok())
        .unwrap_or(120);
    let accel = std::env::args().nth(4).unwrap_or_else(|| "V1".into());

    let t0 = std::time::Instant::now();
    let cells = enumerate_cells(7, 9, EnumerationMode::Sample { count: n, seed: 33 }).unwrap();
    println!("sampled {n} cells in {:.1?}", t0.elapsed());

    let data: Vec<_> = if mode == "toy" {
        cells
            .into_iter()
            .map(|c| {
                let t = 1.0 + 0.5 * f64::from(c.op_counts().conv3x3);
                (c, t)
            })
            .collect()
    } else {
        let spec = NetworkSpec::default();
        let cfg = AcceleratorConfig::preset(&accel).unwrap();
        let t1 = std::time::Instant::now();
        let data: Vec<_> = cells
            .into_iter()
            .map(|c| {
                let net = expand_network(&c, &spec).unwrap();
                let est = estimate(&net, &cfg, EstimateMode::SteadyState);
                (c, est.latency_s * 1e3)
            })
            .collect();
        println!("labeled in {:.1?}", t1.elapsed());
        let lats: Vec<f64> = data.iter().map(|d| d.1).collect();
        let (min, max) = lats
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &l| (a.min(l), b.max(l)));
        println!("latency range: {min:.4} .. {max:.4} ms");
        data
    };

    let cfg = TrainConfig {
        epochs,
        seed: 0,
        ..TrainConfig::default()
    };
    let t2 = std::time::Instant::now();
    let out = train(&data, &cfg).unwrap();
    println!(
        "mode={mode} accel={accel} n={n} epochs={epochs}: best_epoch={} val={:.5} acc={:.4} spearman={:.4} pearson={:.4} ({:.1?})",
        out.best_epoch,
        out.best_val_loss,
        out.test.accuracy,
        out.test.spearman,
        out.test.pearson,
        t2.elapsed()
    );
}

