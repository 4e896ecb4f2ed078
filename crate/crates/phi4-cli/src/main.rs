//! `phi4`: command-line front end for the quartic field-theory market model.
//!
//! Exit codes: 0 success, 1 internal failure, 2 usage/input error,
//! 3 numerical divergence during training.

mod commands;
mod config;
mod io_util;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "phi4", version, about = "Quartic scalar-field market model toolkit")]
struct Cli {
    /// Worker threads (0 = all available cores). Outputs are identical for
    /// any thread count.
    #[arg(long, short = 't', global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum IngestFormat {
    /// One CSV with date,ticker,close columns.
    Long,
    /// One CSV per ticker with date,close columns.
    Wide,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SubsetRuleArg {
    /// Alphabetical nested prefixes.
    Nested,
    /// Seeded random nested subsets averaged over draws.
    Random,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ValidateLevel {
    Quick,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest price CSVs and write an aligned log-return panel.
    Ingest {
        /// Input CSV file (long) or directory / comma-separated files (wide).
        #[arg(long)]
        input: String,
        #[arg(long, value_enum, default_value_t = IngestFormat::Long)]
        format: IngestFormat,
        /// Output panel CSV.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "date")]
        date_col: String,
        #[arg(long, default_value = "ticker")]
        ticker_col: String,
        #[arg(long, default_value = "close")]
        close_col: String,
        /// RNG seed (overrides the config file; default 0).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train couplings on a panel and write a checkpoint.
    Train {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// RNG seed (overrides the config file; default 0).
        #[arg(long)]
        seed: Option<u64>,
        /// Output checkpoint JSON.
        #[arg(long)]
        out: PathBuf,
        /// Output per-epoch history CSV (default: <out>.history.csv).
        #[arg(long)]
        history: Option<PathBuf>,
        /// Rescale each stock to unit root-mean-square before training
        /// (scales are recorded in the checkpoint metadata).
        #[arg(long)]
        standardize: bool,
    },
    /// Market mean and kurtosis series for the original, model-sampled and
    /// binarized panels.
    Stats {
        #[arg(long)]
        panel: PathBuf,
        /// Trained checkpoint for the model-sampled series; without it a
        /// model is trained on the panel first (using --config settings).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// RNG seed (overrides the config file; default 0).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also emit the binarized series.
        #[arg(long)]
        binarize: bool,
        /// Rolling window for both the moving average and the kurtosis.
        #[arg(long, default_value_t = 250)]
        window: usize,
        /// Pool per-stock returns in each window instead of using the
        /// market-mean series.
        #[arg(long)]
        pooled: bool,
    },
    /// Train at several volumes and fit coupling-mean power laws.
    Scaling {
        #[arg(long)]
        panel: PathBuf,
        /// Comma-separated volumes, e.g. 16,32,48,64.
        #[arg(long)]
        volumes: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// RNG seed (overrides the config file; default 0).
        #[arg(long)]
        seed: Option<u64>,
        /// Output points CSV.
        #[arg(long)]
        out: PathBuf,
        /// Output fit-summary CSV (default: <out>.summary.csv).
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SubsetRuleArg::Nested)]
        subset_rule: SubsetRuleArg,
        /// Random-rule draws to average over.
        #[arg(long, default_value_t = 1)]
        draws: usize,
    },
    /// Impute one stock's return from the others, day by day.
    Impute {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        panel: PathBuf,
        /// Ticker to impute (must be in the checkpoint).
        #[arg(long)]
        target: String,
        /// Number of trailing panel days to impute.
        #[arg(long, default_value_t = 21)]
        eval_days: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        /// RNG seed (overrides the config file; default 0).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Output MAE summary CSV (default: <out>.summary.csv).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Walk-forward one-day-ahead forecasts from a stock's own history.
    Forecast {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        ticker: String,
        #[arg(long, default_value_t = 21)]
        eval_days: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        /// RNG seed (overrides the config file; default 0).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Model dimension override (target day + preceding days).
        #[arg(long)]
        window: Option<usize>,
        /// Trailing training span override in days.
        #[arg(long)]
        train_window: Option<usize>,
        /// Retrain cadence override (1 = daily).
        #[arg(long)]
        cadence: Option<usize>,
        /// Rolling window of the like-for-like linear-regression baseline
        /// column (0 disables the column).
        #[arg(long, default_value_t = 200)]
        baseline_window: usize,
    },
    /// Draw configurations from a checkpointed model, optionally with some
    /// stocks clamped to observed values.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of recorded configurations.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Clamped observations, e.g. "AAA=0.01,BBB=-0.02" (raw return units).
        #[arg(long)]
        clamp: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// RNG seed (overrides the config file; default 0).
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV: one row per sample, one column per site.
        #[arg(long)]
        out: PathBuf,
    },
    /// Rolling linear-regression baseline MAE over window sizes.
    Baseline {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        ticker: String,
        /// Comma-separated window sizes, e.g. 25,50,100,200,300,400.
        #[arg(long, default_value = "25,50,100,200,300,400")]
        windows: String,
        /// Number of past-return regressors.
        #[arg(long, default_value_t = 1)]
        lags: usize,
        #[arg(long, default_value_t = 21)]
        eval_days: usize,
        #[arg(long)]
        out: PathBuf,
        /// RNG seed (overrides the config file; default 0).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the quadrature-oracle self-checks.
    Validate {
        #[arg(long, value_enum, default_value_t = ValidateLevel::Quick)]
        level: ValidateLevel,
        /// RNG seed (overrides the config file; default 0).
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn exit_code_for(err: &phi4_core::Error) -> u8 {
    use phi4_core::Error::*;
    match err {
        TrainingDiverged { .. } => 3,
        DimensionMismatch { .. }
        | NonFinite { .. }
        | SiteOutOfRange { .. }
        | InvalidCoupling(_)
        | InvalidConfig(_)
        | EmptyInput(_)
        | AllSitesClamped
        | CsvParse { .. }
        | DuplicateKey { .. }
        | NonPositivePrice { .. }
        | UnknownTicker(_)
        | InsufficientHistory { .. }
        | MixedSignFit(_)
        | ZeroSigma(_)
        | CheckpointFormat(_)
        | Io(_)
        | Json(_)
        | Csv(_) => 2,
        QuadratureTooLarge { .. } | QuadratureBoundary { .. } | ScalingAborted { .. } => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();

    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot build thread pool: {e}");
            return ExitCode::from(1);
        }
    };

    let result = pool.install(|| commands::run(cli.command));
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
