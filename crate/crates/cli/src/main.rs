//! `qhedge`: price calls, simulate markets and train, evaluate and compare
//! hedging networks from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qhedge::deephedge::NegativePathPolicy;
use qhedge::market::Scheme;
use qhedge::pricing::PriceMethod;

use config::{ModelKind, RunConfig, CONFIG_KEYS};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Core(qhedge::Error),
}

impl From<qhedge::Error> for CliError {
    fn from(e: qhedge::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numeric(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    /// 2 for bad input or an unsupported combination, 3 for numeric failure.
    pub fn exit_code(&self) -> u8 {
        use qhedge::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Core(e) => match e {
                E::InvalidParameter(_)
                | E::EmptyMixture
                | E::GridTooCoarse(_)
                | E::ShapeMismatch(_)
                | E::ZeroVolatility
                | E::MeasureUnavailable { .. }
                | E::UnsupportedModel(_)
                | E::CheckpointMismatch(_)
                | E::Parse(_)
                | E::Io(_) => 2,
                E::MomentUndefined(_)
                | E::NotScalar(_)
                | E::TapeConsumed
                | E::LogArgumentNonpositive { .. }
                | E::NonpositiveValue { .. }
                | E::DivisionByZeroWealth(_)
                | E::TruncationNotConverged { .. }
                | E::NonFiniteLoss { .. } => 3,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qhedge", version, about, after_long_help = CONFIG_KEYS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Price the call and print the result as JSON.
    #[command(after_long_help = CONFIG_KEYS)]
    Price {
        #[command(flatten)]
        common: Common,
        /// analytic | series | mc | crosscheck
        #[arg(long)]
        route: Option<PriceMethod>,
        /// Monte Carlo draws.
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        j_max: Option<usize>,
        /// Also write the JSON to this file.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Simulate stock and constant-fraction wealth paths to paths.csv.
    #[command(after_long_help = CONFIG_KEYS)]
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        x0: Option<f64>,
        #[arg(long)]
        pi: Option<f64>,
        #[arg(long)]
        scheme: Option<Scheme>,
        /// Also write the raw increments to increments.qhin.
        #[arg(long)]
        write_increments: bool,
    },
    /// Train a hedging network; writes loss_curve.csv and a checkpoint.
    #[command(after_long_help = CONFIG_KEYS)]
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Evaluate a checkpoint on fresh paths.
    #[command(after_long_help = CONFIG_KEYS)]
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        scheme: Option<Scheme>,
    },
    /// Terminal hedging errors of the learned and reference hedges; writes residuals.csv.
    #[command(after_long_help = CONFIG_KEYS)]
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        scheme: Option<Scheme>,
        /// Include the feedback-form hedge.
        #[arg(long)]
        feedback: bool,
    },
    /// Train one network per (T, R) cell; writes sweep.csv and the checkpoints.
    #[command(after_long_help = CONFIG_KEYS)]
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainFlags,
        /// For example "T=0.5,1,2;R=40,80,160".
        #[arg(long)]
        grid: Option<String>,
        /// Cells trained in parallel.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    /// Falls back to the config file, then $QHEDGE_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    strike: Option<f64>,
    #[arg(long)]
    maturity: Option<f64>,
    /// Time steps R.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    scheme: Option<Scheme>,
    /// discard-batch | log-scheme
    #[arg(long)]
    policy: Option<NegativePathPolicy>,
    /// Gradient-norm ceiling; 0 disables clipping.
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    eval_size: Option<usize>,
    #[arg(long)]
    probe_every: Option<usize>,
}

fn overlay<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

impl Common {
    fn resolve(self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(kind) = self.model {
            if kind != cfg.model.kind {
                // parameters written for another model type do not carry over
                cfg.model = config::ModelSection { kind, ..Default::default() };
            }
        }
        overlay(&mut cfg.seed, self.seed);
        overlay(&mut cfg.out_dir, self.out);
        overlay(&mut cfg.claim.strike, self.strike);
        overlay(&mut cfg.claim.maturity, self.maturity);
        overlay(&mut cfg.grid.steps, self.steps);
        Ok(cfg)
    }
}

impl TrainFlags {
    fn apply(self, cfg: &mut RunConfig) {
        let t = &mut cfg.train;
        overlay(&mut t.epochs, self.epochs);
        overlay(&mut t.batch, self.batch);
        overlay(&mut t.hidden, self.hidden);
        overlay(&mut t.lr, self.lr);
        overlay(&mut t.scheme, self.scheme);
        overlay(&mut t.negative_path_policy, self.policy);
        overlay(&mut t.clip, self.clip);
        overlay(&mut t.eval_size, self.eval_size);
        overlay(&mut t.probe_every, self.probe_every);
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Price { common, route, paths, j_max, output } => {
            let mut cfg = common.resolve()?;
            overlay(&mut cfg.price.route, route);
            overlay(&mut cfg.price.paths, paths);
            overlay(&mut cfg.price.j_max, j_max);
            commands::price(&cfg, output.as_deref())
        }
        Command::Simulate { common, paths, x0, pi, scheme, write_increments } => {
            let mut cfg = common.resolve()?;
            overlay(&mut cfg.simulate.paths, paths);
            overlay(&mut cfg.simulate.x0, x0);
            overlay(&mut cfg.simulate.pi, pi);
            overlay(&mut cfg.train.scheme, scheme);
            if write_increments {
                cfg.simulate.write_increments = Some(true);
            }
            commands::simulate(&cfg)
        }
        Command::Train { common, train } => {
            let mut cfg = common.resolve()?;
            train.apply(&mut cfg);
            commands::train(&cfg)
        }
        Command::Evaluate { common, checkpoint, paths, scheme } => {
            let mut cfg = common.resolve()?;
            overlay(&mut cfg.eval.checkpoint, checkpoint);
            overlay(&mut cfg.eval.paths, paths);
            overlay(&mut cfg.train.scheme, scheme);
            commands::evaluate(&cfg)
        }
        Command::Compare { common, checkpoint, paths, scheme, feedback } => {
            let mut cfg = common.resolve()?;
            overlay(&mut cfg.eval.checkpoint, checkpoint);
            overlay(&mut cfg.eval.compare_paths, paths);
            overlay(&mut cfg.train.scheme, scheme);
            if feedback {
                cfg.eval.feedback = Some(true);
            }
            commands::compare(&cfg)
        }
        Command::Sweep { common, train, grid, jobs } => {
            let mut cfg = common.resolve()?;
            train.apply(&mut cfg);
            overlay(&mut cfg.sweep.grid, grid);
            overlay(&mut cfg.jobs, jobs);
            commands::sweep(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qhedge: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
