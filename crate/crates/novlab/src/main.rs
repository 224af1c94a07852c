//! Command-line front end: experiment runs, the rule-learner convergence
//! assay, metric aggregation, and a replay microbenchmark.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use novlab::gridworld::{Facing, GridConfig, Layout, Placement};
use novlab::harness::{self, ExperimentConfig};
use novlab::replay::{lambda_return, SumTree};

/// Environment variable that overrides the configured output directory.
const OUTPUT_DIR_ENV: &str = "NOVLAB_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "novlab", version, about = "Novelty-adaptation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run(RunArgs),
    /// Train a rule model under a random policy and report its accuracy
    /// curve.
    Assay(AssayArgs),
    /// Aggregate metrics from an output directory of JSONL logs.
    Metrics(MetricsArgs),
    /// Microbenchmark sum-tree and lambda-return throughput.
    BenchReplay(BenchArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AssayArgs {
    /// Assay config (TOML); defaults describe an empty 8x8 grid.
    config: Option<PathBuf>,
    /// Where to write the accuracy curve (JSON). Prints to stdout when
    /// absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Directory holding run logs.
    dir: PathBuf,
    /// Where to write the metrics document (defaults to
    /// `<dir>/metrics.json`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Sum-tree capacity.
    #[arg(long, default_value_t = 4096)]
    items: usize,
    /// Operations per measurement.
    #[arg(long, default_value_t = 1_000_000)]
    iters: u64,
}

fn default_assay_steps() -> u32 {
    5000
}
fn default_eval_every() -> u32 {
    100
}
fn default_eval_len() -> u32 {
    1000
}
fn default_assay_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

/// Config for the `assay` subcommand.
#[derive(Debug, Deserialize)]
struct AssayConfig {
    #[serde(default = "default_assay_steps")]
    total_steps: u32,
    #[serde(default = "default_eval_every")]
    eval_every: u32,
    #[serde(default = "default_eval_len")]
    eval_len: u32,
    #[serde(default = "default_assay_seeds")]
    seeds: Vec<u64>,
    /// Optional explicit grid; the default is an empty 8x8 room with a goal
    /// in the far corner.
    grid: Option<GridConfig>,
}

impl Default for AssayConfig {
    fn default() -> Self {
        AssayConfig {
            total_steps: default_assay_steps(),
            eval_every: default_eval_every(),
            eval_len: default_eval_len(),
            seeds: default_assay_seeds(),
            grid: None,
        }
    }
}

fn empty_room() -> GridConfig {
    GridConfig::new(
        8,
        8,
        Layout {
            agent_start: (0, 0),
            agent_facing: Facing::East,
            objects: vec![Placement::goal(7, 7)],
        },
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Assay(args) => cmd_assay(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::BenchReplay(args) => cmd_bench(args),
    }
}

fn cmd_run(args: RunArgs) -> Result<(), String> {
    let mut config =
        ExperimentConfig::from_toml_file(&args.config).map_err(|e| e.to_string())?;
    if let Some(dir) = args.output_dir {
        config.output_dir = dir;
    }
    if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        config.output_dir = PathBuf::from(dir);
    }
    let started = Instant::now();
    let summary = harness::run(&config).map_err(|e| e.to_string())?;
    println!(
        "novelty {}: {} runs in {:.1}s",
        summary.novelty,
        summary.runs.len(),
        started.elapsed().as_secs_f64()
    );
    for run in &summary.runs {
        println!(
            "  {} seed {}: {} episodes, {} env steps, converged={}, fired={} -> {}",
            run.arm,
            run.seed,
            run.episodes,
            run.env_steps,
            run.converged,
            run.detector_fired,
            run.log
        );
    }
    Ok(())
}

fn cmd_assay(args: AssayArgs) -> Result<(), String> {
    let config: AssayConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("could not read {}: {e}", path.display()))?;
            toml::from_str(&text).map_err(|e| format!("bad assay config: {e}"))?
        }
        None => AssayConfig::default(),
    };
    let grid = config.grid.clone().unwrap_or_else(empty_room);
    let mut curves = Vec::new();
    for &seed in &config.seeds {
        let curve = harness::assay_rule_convergence(
            &grid,
            config.total_steps,
            config.eval_every,
            config.eval_len,
            seed,
        )
        .map_err(|e| e.to_string())?;
        curves.push((seed, curve));
    }
    let doc = serde_json::json!({
        "total_steps": config.total_steps,
        "eval_every": config.eval_every,
        "eval_len": config.eval_len,
        "curves": curves
            .iter()
            .map(|(seed, curve)| serde_json::json!({ "seed": seed, "points": curve }))
            .collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&doc).expect("assay document serializes");
    match args.out {
        Some(path) => std::fs::write(&path, text)
            .map_err(|e| format!("could not write {}: {e}", path.display()))?,
        None => println!("{text}"),
    }
    // Human-readable tail: the final accuracy per seed.
    for (seed, curve) in &curves {
        if let Some((step, acc)) = curve.last() {
            eprintln!("seed {seed}: accuracy {acc:.4} after {step} steps");
        }
    }
    Ok(())
}

fn cmd_metrics(args: MetricsArgs) -> Result<(), String> {
    let doc = harness::compute_metrics(&args.dir).map_err(|e| e.to_string())?;
    let out = args.out.unwrap_or_else(|| args.dir.join("metrics.json"));
    let text = serde_json::to_string_pretty(&doc).expect("metrics document serializes");
    std::fs::write(&out, &text).map_err(|e| format!("could not write {}: {e}", out.display()))?;
    println!("wrote {}", out.display());
    for experiment in &doc.experiments {
        for arm in &experiment.arms {
            println!(
                "{} / {}: {} converged ({} excluded), adaptive-efficiency median {:?}, resilience {:.3}",
                experiment.novelty,
                arm.arm,
                arm.converged_runs,
                arm.excluded_unconverged,
                arm.adaptive_efficiency.median,
                arm.resilience.mean,
            );
        }
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), String> {
    let mut tree = SumTree::new(args.items);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for i in 0..args.items {
        tree.update(i, rng.gen_range(0.1..10.0)).expect("in range");
    }

    let started = Instant::now();
    for _ in 0..args.iters {
        let i = rng.gen_range(0..args.items);
        tree.update(i, rng.gen_range(0.1..10.0)).expect("in range");
    }
    let update_rate = args.iters as f64 / started.elapsed().as_secs_f64();

    let started = Instant::now();
    let mut acc = 0usize;
    for _ in 0..args.iters {
        let u = rng.gen::<f64>() * tree.total();
        acc = acc.wrapping_add(tree.sample(u).expect("non-empty"));
    }
    let sample_rate = args.iters as f64 / started.elapsed().as_secs_f64();

    let rewards: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let values: Vec<f64> = (0..17).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let discounts = vec![0.97; 16];
    let started = Instant::now();
    let runs = args.iters / 16;
    let mut sink = 0.0;
    for _ in 0..runs {
        sink += lambda_return(&rewards, &values, &discounts, 0.95).expect("valid")[0];
    }
    let lambda_rate = runs as f64 / started.elapsed().as_secs_f64();

    println!("sum-tree capacity {}: ", args.items);
    println!("  updates: {:.1}M/s", update_rate / 1e6);
    println!("  samples: {:.1}M/s (checksum {acc})", sample_rate / 1e6);
    println!(
        "  16-step lambda-returns: {:.2}M/s (checksum {sink:.3})",
        lambda_rate / 1e6
    );
    Ok(())
}
