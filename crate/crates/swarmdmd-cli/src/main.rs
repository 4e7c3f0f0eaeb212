//! Command-line interface: `simulate`, `fit`, `rollout`, `score`, `run`,
//! and `suite`, with exit codes 0 (success), 1 (config error), 2 (runtime
//! error), 3 (partial suite failure).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use swarmdmd_cli::config::{Experiment, RawConfig};
use swarmdmd_cli::experiment::{resolve_out_dir, run_experiment, run_suite, Stage, SuiteJob};
use swarmdmd_cli::io::{save_summary, summary_text, SuiteRow};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "swarmdmd",
    version,
    about = "Swarm simulation, interaction-model identification, and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the simulation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's output_dir, else out/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the retained SVD rank.
    #[arg(long)]
    rank: Option<usize>,
    /// Override the survival-time error threshold.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct SuiteArgs {
    /// Experiment configs, one per row (repeatable).
    #[arg(long = "config", required = true, num_args = 1..)]
    configs: Vec<PathBuf>,
    /// Suite output directory; per-experiment outputs land in subdirectories.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override every experiment's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override every experiment's rank.
    #[arg(long)]
    rank: Option<usize>,
    /// Override every experiment's threshold.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate (and preprocess) the ground-truth trajectory.
    Simulate(RunArgs),
    /// Simulate, then fit and save the interaction model.
    Fit(RunArgs),
    /// Simulate, fit, and propagate the learned model.
    Rollout(RunArgs),
    /// Full pipeline through metrics and summary tables.
    Score(RunArgs),
    /// Full pipeline including charts.
    Run(RunArgs),
    /// Run several experiments and merge their summaries into one table.
    Suite(SuiteArgs),
}

fn apply_overrides(
    raw: &mut RawConfig,
    seed: Option<u64>,
    rank: Option<usize>,
    threshold: Option<f64>,
) {
    if let Some(seed) = seed {
        raw.params.get_or_insert_with(Default::default).seed = Some(seed);
    }
    if let Some(rank) = rank {
        raw.rank = Some(rank);
    }
    if let Some(threshold) = threshold {
        raw.threshold = Some(threshold);
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "experiment".to_string())
}

fn load_experiment(args: &RunArgs) -> Result<Experiment, String> {
    let mut raw = RawConfig::from_path(&args.config).map_err(|e| e.to_string())?;
    apply_overrides(&mut raw, args.seed, args.rank, args.threshold);
    raw.resolve(&file_stem(&args.config))
        .map_err(|e| e.to_string())
}

fn run_single(args: RunArgs, stage: Stage) -> ExitCode {
    let exp = match load_experiment(&args) {
        Ok(exp) => exp,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let out_dir = resolve_out_dir(args.out, &exp);
    match run_experiment(&exp, &out_dir, stage) {
        Ok(summary) => {
            if let Some(row) = summary {
                print!("{}", summary_text(&[SuiteRow::Ok(row)]));
            }
            println!("wrote {}", out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn run_suite_command(args: SuiteArgs) -> ExitCode {
    let out_dir = args.out.unwrap_or_else(|| PathBuf::from("out/suite"));
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("error: {}: {e}", out_dir.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    let mut names: Vec<String> = Vec::new();
    let jobs: Vec<SuiteJob> = args
        .configs
        .iter()
        .map(|path| {
            let experiment = RawConfig::from_path(path)
                .map_err(|e| e.to_string())
                .and_then(|mut raw| {
                    apply_overrides(&mut raw, args.seed, args.rank, args.threshold);
                    raw.resolve(&file_stem(path)).map_err(|e| e.to_string())
                });
            let base = match &experiment {
                Ok(exp) => exp.name.clone(),
                Err(_) => file_stem(path),
            };
            // Subdirectory names must be unique per row.
            let mut name = base.clone();
            let mut k = 2;
            while names.contains(&name) {
                name = format!("{base}_{k}");
                k += 1;
            }
            names.push(name.clone());
            SuiteJob { name, experiment }
        })
        .collect();

    let rows = run_suite(&jobs, &out_dir);
    if let Err(e) = save_summary(&rows, &out_dir, "suite_summary") {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_RUNTIME);
    }
    print!("{}", summary_text(&rows));
    println!("wrote {}", out_dir.display());
    if rows.iter().any(|r| matches!(r, SuiteRow::Failed { .. })) {
        ExitCode::from(EXIT_PARTIAL)
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Simulate(args) => run_single(args, Stage::Simulate),
        Command::Fit(args) => run_single(args, Stage::Fit),
        Command::Rollout(args) => run_single(args, Stage::Rollout),
        Command::Score(args) => run_single(args, Stage::Score),
        Command::Run(args) => run_single(args, Stage::Full),
        Command::Suite(args) => run_suite_command(args),
    }
}
