//! Command-line pipelines: cell generation, batch estimation, surrogate
//! training/prediction/evaluation, and batch-result analyses.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(
    name = "edgeperf",
    version,
    about = "Accelerator performance modeling over cell-based CNNs",
    propagate_version = true
)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct AccelArgs {
    /// Accelerator preset(s): V1, V2, V3.
    #[arg(long, num_args = 1.., default_values = ["V1", "V2", "V3"])]
    accel: Vec<String>,

    /// JSON file with a custom accelerator configuration (overrides --accel).
    #[arg(long)]
    accel_file: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate or sample unique cells into a newline-delimited JSON file.
    Generate {
        /// Sample this many unique cells instead of full enumeration.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 7)]
        max_vertices: usize,
        #[arg(long, default_value_t = 9)]
        max_edges: usize,
        #[arg(long)]
        out: PathBuf,
    },

    /// Estimate latency/energy of every cell on the chosen accelerators.
    Estimate {
        #[arg(long)]
        cells: PathBuf,
        #[command(flatten)]
        accel: AccelArgs,
        /// steady: parameters cached across inferences; cold: all streamed.
        #[arg(long, default_value = "steady")]
        mode: String,
        #[arg(long)]
        out: PathBuf,
    },

    /// Train a graph-network surrogate from a results file.
    Train {
        #[arg(long)]
        cells: PathBuf,
        #[arg(long)]
        results: PathBuf,
        /// Accelerator whose rows form the training targets.
        #[arg(long, default_value = "V1")]
        accel: String,
        /// Target metric: latency or energy.
        #[arg(long, default_value = "latency")]
        metric: String,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-3)]
        learning_rate: f64,
        #[arg(long, default_value_t = 7)]
        message_passing_steps: usize,
        /// Checkpoint output path (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Also write the evaluation metrics to this JSON file.
        #[arg(long)]
        metrics_out: Option<PathBuf>,
    },

    /// Predict the trained metric for every cell in a file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        cells: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },

    /// Evaluate a trained model against held-out results.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        cells: PathBuf,
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Trend and best-configuration-bucket reports from results.
    Analyze {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },

    /// Operation-swap latency impact matrix.
    Swap {
        #[arg(long)]
        cells: PathBuf,
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value = "V1")]
        accel: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: failed to configure {threads} threads: {e}");
            std::process::exit(1);
        }
    }
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate {
            sample,
            seed,
            max_vertices,
            max_edges,
            out,
        } => commands::generate(sample, seed, max_vertices, max_edges, &out),
        Command::Estimate {
            cells,
            accel,
            mode,
            out,
        } => {
            let configs = resolve_accels(&accel)?;
            commands::estimate(&cells, &configs, &mode, &out)
        }
        Command::Train {
            cells,
            results,
            accel,
            metric,
            epochs,
            seed,
            batch_size,
            learning_rate,
            message_passing_steps,
            out,
            metrics_out,
        } => commands::train(commands::TrainArgs {
            cells,
            results,
            accel,
            metric,
            epochs,
            seed,
            batch_size,
            learning_rate,
            message_passing_steps,
            out,
            metrics_out,
        }),
        Command::Predict { model, cells, out } => commands::predict(&model, &cells, &out),
        Command::Evaluate {
            model,
            cells,
            results,
            out,
        } => commands::evaluate(&model, &cells, &results, out.as_deref()),
        Command::Analyze { results, out_dir } => commands::analyze(&results, &out_dir),
        Command::Swap {
            cells,
            results,
            accel,
            out,
        } => commands::swap(&cells, &results, &accel, &out),
    }
}

fn resolve_accels(args: &AccelArgs) -> Result<Vec<edgeperf::AcceleratorConfig>> {
    if let Some(path) = &args.accel_file {
        let cfg: edgeperf::AcceleratorConfig = edgeperf::io::read_json(path)
            .with_context(|| format!("reading accelerator config {}", path.display()))?;
        cfg.validate()?;
        return Ok(vec![cfg]);
    }
    let mut configs = Vec::new();
    for name in &args.accel {
        configs.push(edgeperf::AcceleratorConfig::preset(name)?);
    }
    if configs.is_empty() {
        bail!("no accelerator selected");
    }
    Ok(configs)
}
