//! `smas`: simulate, fit, compare and study semi-Markov Arnason-Schwarz
//! models from the command line.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "smas", version, about = "Semi-Markov Arnason-Schwarz capture-recapture-recovery models")]
struct Cli {
    /// Suppress reports on standard output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one dataset from the values in a config.
    Simulate(SimulateArgs),
    /// Fit one model to a history file.
    Fit(FitArgs),
    /// Fit several models and rank them by AIC.
    Select(SelectArgs),
    /// Replicate simulation study: bias and spread per parameter.
    Study(StudyArgs),
    /// Write the expanded matrices of a config as row-major CSV.
    Dump(DumpArgs),
}

/// Overrides for the fitting options in the config.
#[derive(Args, Clone, Default)]
pub struct FitFlags {
    /// Number of optimiser starts.
    #[arg(long)]
    starts: Option<usize>,
    /// Truncation tolerance for aggregate sizes.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Largest aggregate size.
    #[arg(long = "max-agg")]
    max_agg: Option<usize>,
    /// Seed for start jitter (and simulation where relevant).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Entry {
    All,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum EntryAgeArg {
    Fresh,
    Equilibrium,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Individuals to retain.
    #[arg(long)]
    n: usize,
    /// Occasions; defaults to the config's.
    #[arg(long)]
    t: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Replicate index within the seed.
    #[arg(long, default_value_t = 0)]
    replicate: usize,
    #[arg(long, value_enum, default_value = "all")]
    entry: Entry,
    #[arg(long = "entry-age", value_enum, default_value = "equilibrium")]
    entry_age: EntryAgeArg,
    /// History file to write; the truth goes next to it as `<out>.truth.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct FitArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// JSON result; the text report and dwell CSV are written alongside.
    #[arg(long)]
    out: PathBuf,
    /// Largest dwell time in the interval tables.
    #[arg(long = "r-max", default_value_t = 20)]
    r_max: usize,
    #[command(flatten)]
    flags: FitFlags,
}

#[derive(Args)]
pub struct SelectArgs {
    /// Candidate configs (repeat the flag).
    #[arg(long, required = true, num_args = 1..)]
    config: Vec<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// Text table; the CSV goes to `<out>.csv`.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: FitFlags,
}

#[derive(Args)]
pub struct StudyArgs {
    /// Truth config; also the first fitted map.
    #[arg(long)]
    config: PathBuf,
    /// Further maps to fit; without any, the first-order version of the truth
    /// is added.
    #[arg(long = "map")]
    maps: Vec<PathBuf>,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    replicates: usize,
    #[arg(long, value_enum, default_value = "all")]
    entry: Entry,
    #[arg(long = "entry-age", value_enum, default_value = "equilibrium")]
    entry_age: EntryAgeArg,
    /// CSV summary; the text table goes to `<out>.txt`.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: FitFlags,
}

#[derive(Args)]
pub struct DumpArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    t: Option<usize>,
    /// Transition from this occasion to the next (1-based).
    #[arg(long, default_value_t = 1)]
    occasion: usize,
    /// Observation at the occasion.
    #[arg(long, default_value = "0")]
    from: String,
    /// Observation at the next occasion.
    #[arg(long, default_value = "0")]
    to: String,
    /// Transition matrix CSV; the observation diagonal for `--to` goes to
    /// `<out>.q.csv` and the stationary vector to `<out>.stationary.csv`.
    #[arg(long)]
    out: PathBuf,
}

fn configure_threads() {
    if let Some(n) = std::env::var("SMAS_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let outcome = match &cli.command {
        Command::Simulate(a) => commands::simulate(a, cli.quiet),
        Command::Fit(a) => commands::fit(a, cli.quiet),
        Command::Select(a) => commands::select(a, cli.quiet),
        Command::Study(a) => commands::study(a, cli.quiet),
        Command::Dump(a) => commands::dump(a, cli.quiet),
    };
    match outcome {
        Ok(commands::Status::Done) => ExitCode::SUCCESS,
        Ok(commands::Status::NotConverged) => {
            eprintln!("smas: optimiser did not converge; results written with converged = false");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("smas: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
