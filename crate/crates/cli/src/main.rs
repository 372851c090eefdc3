use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Lineup-based player ratings with a box-score subspace prior.
#[derive(Debug, Parser)]
#[command(name = "spr", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for every random choice (synthetic data, CV folds).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Directory that receives the command's output files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    /// Print nothing but errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    /// Worker threads for cross-validation; defaults to all cores.
    #[arg(long, global = true, env = "SPR_JOBS")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic season and write its CSV files.
    Simulate(SimulateArgs),
    /// Fit one estimator and write a model bundle.
    Fit(FitArgs),
    /// Choose the penalty by K-fold cross-validation over games.
    Cv(CvArgs),
    /// Predict held-out game margins and summarize the errors.
    Evaluate(EvaluateArgs),
    /// Backtest the threshold betting rule against point spreads.
    Bet(BetArgs),
    /// Top players, underrated/overrated lists and box-score weights.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 60)]
    pub players: usize,
    #[arg(long, default_value_t = 10)]
    pub stats: usize,
    #[arg(long, default_value_t = 600)]
    pub games: usize,
    #[arg(long, default_value_t = 10)]
    pub stints_per_game: usize,
    /// Players whose rating sits off the box-score subspace.
    #[arg(long, default_value_t = 6)]
    pub spikes: usize,
    /// Per-possession noise standard deviation of stint margins.
    #[arg(long, default_value_t = 1.0)]
    pub noise_sd: f64,
    /// Players per side dressed for each game.
    #[arg(long, default_value_t = 5)]
    pub rotation: usize,
}

/// Input files. Each defaults to its standard name inside `--data`.
#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    #[arg(long, default_value = ".")]
    pub data: PathBuf,
    #[arg(long)]
    pub players: Option<PathBuf>,
    #[arg(long)]
    pub stints: Option<PathBuf>,
    #[arg(long)]
    pub box_scores: Option<PathBuf>,
}

/// Train/test split by game order. Without either flag every game is used
/// for both.
#[derive(Debug, Args, Clone)]
pub struct SplitArgs {
    /// Train on the first N games; the rest are the test set.
    #[arg(long, conflicts_with = "train_ids")]
    pub train_games: Option<usize>,
    /// Train on these game ids (comma separated); the rest are the test set.
    #[arg(long, value_delimiter = ',')]
    pub train_ids: Option<Vec<u64>>,
}

#[derive(Debug, Args, Clone)]
pub struct BoxArgs {
    /// Use raw box-score columns instead of z-scores.
    #[arg(long)]
    pub no_standardize: bool,
    /// Append all pairwise products of box-score columns.
    #[arg(long)]
    pub poly2: bool,
}

#[derive(Debug, Args, Clone)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 10_000)]
    pub max_sweeps: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub rel_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Estimator {
    Dummy,
    Wls,
    Ridge,
    Spr,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_enum, default_value_t = Estimator::Spr)]
    pub estimator: Estimator,
    /// lambda1 = 2^a.
    #[arg(long, default_value_t = -10, allow_negative_numbers = true)]
    pub lambda1_exp: i32,
    /// lambda2 = 2^b.
    #[arg(long, default_value_t = -3, allow_negative_numbers = true)]
    pub lambda2_exp: i32,
    /// Ridge penalty 2^a.
    #[arg(long, default_value_t = -6, allow_negative_numbers = true)]
    pub ridge_exp: i32,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub box_args: BoxArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    /// `spr` searches (a, b); `ridge` searches a only.
    #[arg(long, value_enum, default_value_t = Estimator::Spr)]
    pub estimator: Estimator,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = -10, allow_negative_numbers = true)]
    pub a_min: i32,
    #[arg(long, default_value_t = 9, allow_negative_numbers = true)]
    pub a_max: i32,
    #[arg(long, default_value_t = -10, allow_negative_numbers = true)]
    pub b_min: i32,
    #[arg(long, default_value_t = 9, allow_negative_numbers = true)]
    pub b_max: i32,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub box_args: BoxArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Model bundle directories; repeat for several models.
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub bin_width: f64,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub split: SplitArgs,
}

#[derive(Debug, Args)]
pub struct BetArgs {
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    /// Bet only when |prediction - line| exceeds this many points.
    #[arg(long, default_value_t = 3.0, conflicts_with = "robust")]
    pub delta: f64,
    /// Use the stricter threshold of 5 points.
    #[arg(long)]
    pub robust: bool,
    /// Win percentage needed to profit after the vig.
    #[arg(long, default_value_t = 52.5)]
    pub break_even: f64,
    /// Point spreads; defaults to `lines.csv` inside `--data`.
    #[arg(long)]
    pub lines: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub split: SplitArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// An SPR model bundle.
    #[arg(long)]
    pub model: PathBuf,
    /// Minimum possessions on the floor to appear in the tables.
    #[arg(long, default_value_t = 10.0)]
    pub min_weight: f64,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub split: SplitArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
