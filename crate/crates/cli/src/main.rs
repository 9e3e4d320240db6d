//! `curionav` command-line entry point.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 missing or unreadable input,
//! 3 snapshot corrupt or not matching the network, 4 malformed data.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "curionav",
    version,
    about = "Curiosity-driven mapless navigation: train, evaluate and plot",
    after_help = "Exit codes: 0 ok, 1 runtime failure, 2 input missing, 3 snapshot mismatch or corrupt, 4 malformed data.\n\
                  Maps are file paths, or `bundled:<name>` for map1..map4, empty_room and corridor."
)]
struct Cli {
    /// Threads for parallel evaluation and the default training worker count.
    #[arg(long, global = true, env = "CURIONAV_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an agent and write metrics, snapshots and a run manifest.
    Train(TrainArgs),
    /// Evaluate a snapshot on fixed 300-episode suites.
    Eval(EvalArgs),
    /// Render metrics CSVs as reward and step curves (SVG).
    Plot(PlotArgs),
    /// Inspect floorplans.
    #[command(subcommand)]
    Maps(MapsCommand),
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Run config (TOML). Omitted keys take their defaults.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in exploration preset instead of a file: a3c-, entropy, icm, icm+entropy.
    #[arg(long)]
    preset: Option<String>,
    /// Training floorplan.
    #[arg(long)]
    map: String,
    /// Run directory; created if needed.
    #[arg(long)]
    out: PathBuf,
    /// Override `trainer.total_iterations` (environment steps over all workers).
    #[arg(long)]
    iterations: Option<u64>,
    /// Override `trainer.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override `trainer.workers` (takes precedence over --threads).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Parameter snapshot written by `train`.
    #[arg(long)]
    snapshot: PathBuf,
    /// Evaluation floorplan; repeat for several maps.
    #[arg(long = "map", required = true)]
    maps: Vec<String>,
    /// Seed of the episode suites.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for `episodes.csv` and `summary.csv`.
    #[arg(long)]
    out: PathBuf,
    /// Configuration name written to the CSVs.
    #[arg(long, default_value = "snapshot")]
    label: String,
    /// Sample actions from the policy instead of taking the argmax.
    #[arg(long)]
    sample: bool,
    #[arg(long, default_value_t = curionav::eval::SUITE_EPISODES)]
    episodes: usize,
    #[arg(long, default_value_t = curionav::eval::EVAL_MAX_STEPS)]
    max_steps: usize,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Metrics CSVs, optionally as `LABEL=PATH`; runs sharing a label are
    /// drawn as one mean curve with a min/max band. The default label is the
    /// name of the CSV's directory.
    #[arg(required = true)]
    csvs: Vec<String>,
    /// Output SVG file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum MapsCommand {
    /// Parse and check maps, including that start/goal pairs can be sampled.
    Validate {
        #[arg(required = true)]
        maps: Vec<String>,
    },
    /// Print an ASCII rendering of a map.
    Render {
        map: String,
        #[arg(long, default_value_t = 72)]
        columns: usize,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(threads) = cli.threads {
        commands::set_threads(threads)?;
    }
    match cli.command {
        Command::Train(a) => commands::train(commands::TrainRequest {
            config: a.config,
            preset: a.preset,
            map: a.map,
            out: a.out,
            iterations: a.iterations,
            seed: a.seed,
            workers: a.workers.or(cli.threads),
        }),
        Command::Eval(a) => commands::eval(commands::EvalRequest {
            snapshot: a.snapshot,
            maps: a.maps,
            seed: a.seed,
            out: a.out,
            label: a.label,
            greedy: !a.sample,
            episodes: a.episodes,
            max_steps: a.max_steps,
        }),
        Command::Plot(a) => commands::plot(&a.csvs, &a.out),
        Command::Maps(MapsCommand::Validate { maps }) => commands::validate_maps(&maps),
        Command::Maps(MapsCommand::Render { map, columns }) => commands::render_map(&map, columns),
    }
}

/// The error chain joined by `: `, skipping causes whose text an outer
/// message already includes.
fn describe(error: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in error.chain() {
        let part = cause.to_string();
        if !text.contains(&part) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&part);
        }
    }
    text
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", describe(&failure.error));
            ExitCode::from(failure.code)
        }
    }
}
