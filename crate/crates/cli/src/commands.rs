//! Subcommand implementations.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use edgeperf::accel::AcceleratorConfig;
use edgeperf::analysis;
use edgeperf::cell::CellGraph;
use edgeperf::cost::{estimate as cost_estimate, EstimateMode};
use edgeperf::enumerate::{enumerate_cells, EnumerationMode};
use edgeperf::gnn::{self, Checkpoint, TrainConfig};
use edgeperf::io::{
    read_cells, read_results_vec, write_cells, write_json, write_results, CellRecord, ResultRow,
};
use edgeperf::network::{expand_network, NetworkSpec};

pub fn generate(
    sample: Option<usize>,
    seed: u64,
    max_vertices: usize,
    max_edges: usize,
    out: &Path,
) -> Result<()> {
    let mode = match sample {
        Some(count) => EnumerationMode::Sample { count, seed },
        None => EnumerationMode::Full,
    };
    let cells = enumerate_cells(max_vertices, max_edges, mode)?;
    let count = cells.len();
    let records: Vec<CellRecord> = cells
        .into_par_iter()
        .map(CellRecord::from_cell)
        .collect::<edgeperf::Result<Vec<_>>>()?;
    write_cells(out, records)?;
    println!(
        "generated {count} cells -> {} (seed {seed}, limits {max_vertices}v/{max_edges}e)",
        out.display()
    );
    Ok(())
}

fn load_cells(path: &Path) -> Result<Vec<CellRecord>> {
    let records: Vec<CellRecord> = read_cells(path)
        .with_context(|| format!("opening {}", path.display()))?
        .collect::<edgeperf::Result<Vec<_>>>()?;
    if records.is_empty() {
        bail!("{}: no cells", path.display());
    }
    Ok(records)
}

pub fn estimate(
    cells_path: &Path,
    configs: &[AcceleratorConfig],
    mode: &str,
    out: &Path,
) -> Result<()> {
    let mode: EstimateMode = mode.parse()?;
    let records = load_cells(cells_path)?;
    let spec = NetworkSpec::default();

    // Cell-major order: one row per accelerator per cell, cells in
    // input order regardless of thread count.
    let rows: Vec<ResultRow> = records
        .par_iter()
        .map(|record| -> edgeperf::Result<Vec<ResultRow>> {
            let net = expand_network(&record.cell, &spec)?;
            Ok(configs
                .iter()
                .map(|cfg| {
                    let est = cost_estimate(&net, cfg, mode);
                    ResultRow::from_estimate(&record.hash, &cfg.name, &net, &est)
                })
                .collect())
        })
        .collect::<edgeperf::Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let n = rows.len();
    write_results(out, rows)?;
    println!(
        "estimated {n} rows ({} cells x {} accelerators) -> {}",
        records.len(),
        configs.len(),
        out.display()
    );
    Ok(())
}

/// Join result rows of one accelerator with their cell graphs.
fn join_dataset(
    records: &[CellRecord],
    results: &[ResultRow],
    accel: &str,
    metric: &str,
) -> Result<Vec<(CellGraph, f64)>> {
    let by_hash: HashMap<&str, &CellGraph> = records
        .iter()
        .map(|r| (r.hash.as_str(), &r.cell))
        .collect();
    let mut dataset = Vec::new();
    for row in results.iter().filter(|r| r.accel == accel) {
        let cell = by_hash.get(row.cell_hash.as_str()).with_context(|| {
            format!("results row {} has no cell in the cell file", row.cell_hash)
        })?;
        let target = match metric {
            "latency" => row.latency_ms,
            "energy" => row.energy_mj,
            other => bail!("unknown metric {other:?} (expected latency or energy)"),
        };
        dataset.push(((*cell).clone(), target));
    }
    if dataset.is_empty() {
        bail!("no rows for accelerator {accel:?} in the results file");
    }
    Ok(dataset)
}

pub struct TrainArgs {
    pub cells: PathBuf,
    pub results: PathBuf,
    pub accel: String,
    pub metric: String,
    pub epochs: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub message_passing_steps: usize,
    pub out: PathBuf,
    pub metrics_out: Option<PathBuf>,
}

fn metric_column(metric: &str) -> Result<&'static str> {
    match metric {
        "latency" => Ok("latency_ms"),
        "energy" => Ok("energy_mj"),
        other => bail!("unknown metric {other:?} (expected latency or energy)"),
    }
}

pub fn train(args: TrainArgs) -> Result<()> {
    let metric_col = metric_column(&args.metric)?;
    let records = load_cells(&args.cells)?;
    let results = read_results_vec(&args.results)?;
    let dataset = join_dataset(&records, &results, &args.accel, &args.metric)?;

    let cfg = TrainConfig {
        learning_rate: args.learning_rate,
        batch_size: args.batch_size,
        seed: args.seed,
        epochs: args.epochs,
        num_message_passing_steps: args.message_passing_steps,
        ..TrainConfig::default()
    };
    let outcome = gnn::train(&dataset, &cfg)?;

    let checkpoint = Checkpoint {
        model: outcome.model,
        config: outcome.config,
        metric: metric_col.to_string(),
        accel: args.accel.clone(),
    };
    write_json(&args.out, &checkpoint)?;

    let metrics = serde_json::json!({
        "accel": args.accel,
        "metric": metric_col,
        "seed": args.seed,
        "epochs": args.epochs,
        "best_epoch": outcome.best_epoch,
        "best_val_loss": outcome.best_val_loss,
        "train_size": outcome.train_size,
        "val_size": outcome.val_size,
        "test_size": outcome.test_size,
        "accuracy": outcome.test.accuracy,
        "accuracy_definition": "1 - mean absolute percentage error",
        "spearman": outcome.test.spearman,
        "pearson": outcome.test.pearson,
        "mse": outcome.test.mse,
    });
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    if let Some(path) = &args.metrics_out {
        write_json(path, &metrics)?;
    }
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let ckpt: Checkpoint = edgeperf::io::read_json(path)
        .with_context(|| format!("reading checkpoint {}", path.display()))?;
    ckpt.validate()?;
    Ok(ckpt)
}

pub fn predict(model_path: &Path, cells_path: &Path, out: &Path) -> Result<()> {
    let ckpt = load_checkpoint(model_path)?;
    let records = load_cells(cells_path)?;
    let norm = ckpt.normalization();

    let predictions: Vec<f64> = records
        .par_iter()
        .map(|r| ckpt.model.predict(&r.cell, &norm))
        .collect();

    let mut file = std::io::BufWriter::new(std::fs::File::create(out)?);
    writeln!(file, "cell_hash,predicted_{}", ckpt.metric)?;
    for (record, p) in records.iter().zip(&predictions) {
        writeln!(file, "{},{}", record.hash, ryu_fmt(*p))?;
    }
    file.flush()?;
    println!(
        "predicted {} for {} cells -> {}",
        ckpt.metric,
        records.len(),
        out.display()
    );
    Ok(())
}

fn ryu_fmt(x: f64) -> String {
    // 17 significant digits round-trip losslessly.
    format!("{x:.17e}")
}

pub fn evaluate(
    model_path: &Path,
    cells_path: &Path,
    results_path: &Path,
    out: Option<&Path>,
) -> Result<()> {
    let ckpt = load_checkpoint(model_path)?;
    let metric = if ckpt.metric == "latency_ms" {
        "latency"
    } else {
        "energy"
    };
    let records = load_cells(cells_path)?;
    let results = read_results_vec(results_path)?;
    let dataset = join_dataset(&records, &results, &ckpt.accel, metric)?;
    let metrics = gnn::evaluate_model(&ckpt.model, &ckpt.normalization(), &dataset)?;

    let doc = serde_json::json!({
        "accel": ckpt.accel,
        "metric": ckpt.metric,
        "count": metrics.count,
        "accuracy": metrics.accuracy,
        "accuracy_definition": "1 - mean absolute percentage error",
        "spearman": metrics.spearman,
        "pearson": metrics.pearson,
        "mse": metrics.mse,
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    if let Some(path) = out {
        write_json(path, &doc)?;
    }
    Ok(())
}

pub fn analyze(results_path: &Path, out_dir: &Path) -> Result<()> {
    let rows = read_results_vec(results_path)?;
    if rows.is_empty() {
        bail!("{}: no result rows", results_path.display());
    }
    std::fs::create_dir_all(out_dir)?;

    let mut accels: Vec<String> = rows.iter().map(|r| r.accel.clone()).collect();
    accels.sort();
    accels.dedup();

    let mut summary = String::new();

    // Per-accelerator structural trends, long format.
    let trends_path = out_dir.join("trends.csv");
    {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&trends_path)?);
        writeln!(
            w,
            "accel,key,group,count,min_latency_ms,mean_latency_ms,max_latency_ms"
        )?;
        for accel in &accels {
            let subset: Vec<ResultRow> =
                rows.iter().filter(|r| &r.accel == accel).cloned().collect();
            let report = analysis::trend_report(&subset)?;
            for trend in &report.trends {
                summary.push_str(&format!(
                    "[{accel}] latency vs {}: {:?} over {} groups\n",
                    trend.key,
                    trend.verdict,
                    trend.groups.len()
                ));
                for g in &trend.groups {
                    writeln!(
                        w,
                        "{accel},{},{},{},{},{},{}",
                        trend.key,
                        g.group,
                        g.count,
                        ryu_fmt(g.min_latency_ms),
                        ryu_fmt(g.mean_latency_ms),
                        ryu_fmt(g.max_latency_ms)
                    )?;
                }
            }
        }
        w.flush()?;
    }

    // Best-configuration buckets (requires rows for every accelerator).
    let buckets_path = out_dir.join("buckets.csv");
    {
        let report = analysis::best_config_buckets(&rows)?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(&buckets_path)?);
        writeln!(w, "winner,count,on_accel,mean_latency_ms,mean_energy_mj")?;
        for bucket in &report.buckets {
            for accel in &report.accels {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    bucket.winner,
                    bucket.count,
                    accel,
                    ryu_fmt(bucket.mean_latency_ms[accel]),
                    ryu_fmt(bucket.mean_energy_mj[accel])
                )?;
            }
            summary.push_str(&format!(
                "bucket {}: {} models fastest\n",
                bucket.winner, bucket.count
            ));
        }
        summary.push_str(&format!("latency ties: {}\n", report.ties));
        w.flush()?;
    }

    std::fs::write(out_dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    println!(
        "reports -> {} (trends.csv, buckets.csv, summary.txt)",
        out_dir.display()
    );
    Ok(())
}

pub fn swap(cells_path: &Path, results_path: &Path, accel: &str, out: &Path) -> Result<()> {
    let records = load_cells(cells_path)?;
    let results = read_results_vec(results_path)?;
    let dataset = join_dataset(&records, &results, accel, "latency")?;
    let matrix = analysis::swap_impact(&dataset)?;

    let mut w = std::io::BufWriter::new(std::fs::File::create(out)?);
    writeln!(
        w,
        "accel,original,replacement,mean_delta_ms,mean_pct_delta,count"
    )?;
    for (i, from) in analysis::SWAP_KINDS.iter().enumerate() {
        for (j, to) in analysis::SWAP_KINDS.iter().enumerate() {
            writeln!(
                w,
                "{accel},{from},{to},{},{},{}",
                ryu_fmt(matrix.mean_delta_ms[i][j]),
                ryu_fmt(matrix.mean_pct_delta[i][j]),
                matrix.counts[i][j]
            )?;
        }
    }
    w.flush()?;
    println!(
        "swap impact on {accel}: {} attempted, {} exact + {} fallback matches -> {}",
        matrix.attempted,
        matrix.exact_matches,
        matrix.fallback_matches,
        out.display()
    );
    Ok(())
}
