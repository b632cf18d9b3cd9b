//! `survkit`: synthesize cohorts, train models, predict, score and ensemble.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

use survkit::model_file::ModelKind;

#[derive(Parser)]
#[command(name = "survkit", version, about = "Survival prognosis challenge toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort (CSV plus schema and truth sidecars).
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Split a dataset into training and test files.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// Training fraction.
        #[arg(long, default_value_t = 0.7)]
        fraction: f64,
        /// Continuous feature to order by; file order when omitted.
        #[arg(long)]
        key: Option<String>,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
    },
    /// Extract the outcome file used for scoring.
    Truth {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model; baseline-suite writes one model file per baseline into `--out`.
    Train {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// TOML hyperparameters for the chosen model.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write predictions for a dataset.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Checked against the schema stored in the model file.
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score one prediction file: intervals, permutation tests, risk groups, calibration.
    Evaluate {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        n_boot: usize,
        #[arg(long, default_value_t = 1_000)]
        n_perm: usize,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, default_value_t = 10)]
        calibration_bins: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Directory for plot-ready Kaplan-Meier and calibration CSVs.
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Rank every prediction file in a directory and test the leader against the rest.
    Leaderboard {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 1_000)]
        n_boot: usize,
        #[arg(long, default_value_t = 0.05)]
        q: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// AUROC of the top-m average for each m.
        #[arg(long)]
        partial_out: Option<PathBuf>,
    },
    /// Average prediction files.
    Ensemble {
        #[arg(long, num_args = 1.., required = true)]
        preds: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Spearman correlation of each member's predictions with tumour volume.
    Audit {
        #[arg(long, num_args = 1.., required = true)]
        preds: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModelArg {
    Mtlr,
    DeepMtlr,
    Cox,
    Logistic,
    Fuzzy,
    BaselineSuite,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Mtlr => ModelKind::Mtlr,
            ModelArg::DeepMtlr => ModelKind::DeepMtlr,
            ModelArg::Cox => ModelKind::Cox,
            ModelArg::Logistic => ModelKind::Logistic,
            ModelArg::Fuzzy => ModelKind::Fuzzy,
            ModelArg::BaselineSuite => ModelKind::BaselineSuite,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.code())
        }
    }
}
