//! `resmatch` command-line driver.

mod commands;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use resmatch::pipeline::Stage;
use resmatch::Error;

#[derive(Parser, Debug)]
#[command(name = "resmatch", version, about = "Stereo matching with constant-highway networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration flags shared by every command.
#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Run configuration (flat TOML, see configs/desk.toml).
    #[arg(long)]
    pub config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override one configuration key, e.g. `--set alpha=0.8`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// Like [`RunArgs`] but the configuration file is optional.
#[derive(Args, Debug, Clone)]
pub struct OptRunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageArg {
    Volume,
    Postprocess,
    Gdn,
    Refine,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Stage {
        match s {
            StageArg::Volume => Stage::Volume,
            StageArg::Postprocess => Stage::Postprocess,
            StageArg::Gdn => Stage::Gdn,
            StageArg::Refine => Stage::Refine,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render synthetic scenes to pair directories (left.png, right.png, gt.png, occ.png).
    Generate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "val")]
        split: Split,
        /// Number of scenes; defaults to the configured split size.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train the matching-cost network.
    TrainMatcher {
        #[command(flatten)]
        run: RunArgs,
        /// Output directory for the checkpoint and logs.
        #[arg(long)]
        out: PathBuf,
        /// Directory of pair directories; synthetic scenes when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train the global disparity network on post-processed volumes.
    TrainGdn {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        matcher: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Predict a disparity map for one rectified pair.
    Predict {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        matcher: PathBuf,
        /// Needed from the gdn stage on.
        #[arg(long)]
        gdn: Option<PathBuf>,
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Last stage to run.
        #[arg(long, value_enum, default_value = "refine")]
        stage: StageArg,
    },
    /// 3-px (or 2-px) error of predicted disparities against ground truth.
    Eval {
        #[command(flatten)]
        run: OptRunArgs,
        /// `<id>.png` files or `<id>/disparity.png` prediction directories.
        #[arg(long)]
        pred: PathBuf,
        /// `<id>.png|pfm` files or pair directories with `gt.png|pfm`.
        #[arg(long)]
        gt: PathBuf,
        /// CSV report path.
        #[arg(long)]
        out: PathBuf,
        /// Use the 2-px threshold instead of 3 px.
        #[arg(long)]
        two_px: bool,
    },
    /// Sparsification AUC of every confidence measure.
    ConfidenceEval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        matcher: PathBuf,
        #[arg(long)]
        gdn: PathBuf,
        /// Directory of pair directories; synthetic validation scenes when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// CSV report path.
        #[arg(long)]
        out: PathBuf,
        /// Directory for per-image sparsification curves.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Per-component prediction timing.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        /// Freshly initialized networks are timed when absent.
        #[arg(long)]
        matcher: Option<PathBuf>,
        #[arg(long)]
        gdn: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        runs: usize,
        /// CSV report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// λ values and skip mass per outer block from a matcher checkpoint.
    LambdaReport {
        #[command(flatten)]
        run: OptRunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// CSV path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::State(_) => 2,
        Error::Numeric(_) => 4,
        Error::Input(_) | Error::Format(_) | Error::Io(_) | Error::Image(_) => 3,
    }
}

fn run(cli: Cli) -> resmatch::Result<()> {
    use commands::*;
    match cli.command {
        Command::Generate { run, out, split, count } => generate(&run, &out, split, count),
        Command::TrainMatcher { run, out, data } => train_matcher_cmd(&run, &out, data.as_deref()),
        Command::TrainGdn {
            run,
            matcher,
            out,
            data,
        } => train_gdn_cmd(&run, &matcher, &out, data.as_deref()),
        Command::Predict {
            run,
            matcher,
            gdn,
            left,
            right,
            out,
            stage,
        } => predict(&run, &matcher, gdn.as_deref(), &left, &right, &out, stage.into()),
        Command::Eval {
            run,
            pred,
            gt,
            out,
            two_px,
        } => eval(&run, &pred, &gt, &out, two_px),
        Command::ConfidenceEval {
            run,
            matcher,
            gdn,
            data,
            out,
            curves,
        } => confidence_eval(&run, &matcher, &gdn, data.as_deref(), &out, curves.as_deref()),
        Command::Bench {
            run,
            matcher,
            gdn,
            runs,
            out,
        } => bench(&run, matcher.as_deref(), gdn.as_deref(), runs, out.as_deref()),
        Command::LambdaReport { run, checkpoint, out } => lambda_report_cmd(&run, &checkpoint, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Config(_) | Error::State(_)) {
                eprintln!("see `resmatch help` for usage");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
