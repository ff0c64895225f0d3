//! `linescan`: command-line access to each pipeline stage and to the
//! end-to-end evaluation.
//!
//! Exit codes: 0 on success, 2 for unusable input (arguments, config,
//! files), 3 when the pipeline itself fails.

mod commands;
mod config_args;
mod overlay;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use linescan::evaluation::Split;

use commands::{ClassifyArgs, CliError, EvaluateArgs};
use config_args::ConfigArgs;

#[derive(Debug, Parser)]
#[command(name = "linescan", version, about = "Overhead-line defect recognition on device ROIs")]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// SLIC superpixels of a whole image: id PNG plus JSON sidecar.
    Superpixels {
        image: PathBuf,
        #[arg(long, visible_alias = "out")]
        out_dir: PathBuf,
    },
    /// Per-ROI network segmentation label maps.
    Segment {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Per-ROI region hierarchy, one PNG per layer.
    Hierarchy {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Classify every annotated ROI.
    Classify {
        #[arg(long)]
        annotations: PathBuf,
        /// Directory holding the standard library manifest.
        #[arg(long)]
        standards: PathBuf,
        /// Writes reports.json (and overlays) here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Also write an annotated copy of each image.
        #[arg(long, requires = "out_dir")]
        overlay: bool,
        /// Print the reports as JSON instead of one line per ROI.
        #[arg(long)]
        json: bool,
    },
    /// Misjudgment, omission and correct rates over a labelled manifest.
    Evaluate {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        standards: PathBuf,
        /// Writes evaluation.json and evaluation.txt here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Entries classified in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// all, train or test; the split is drawn with the seed.
        #[arg(long, default_value = "all")]
        split: Split,
        /// Print the full report as JSON instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Write the synthetic scene suite and its standard library.
    GenFixtures {
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = cli.config.resolve()?;
    match &cli.command {
        Command::Superpixels { image, out_dir } => commands::superpixels(image, out_dir, &cfg),
        Command::Segment { annotations, out_dir } => commands::segment_rois(annotations, out_dir, &cfg),
        Command::Hierarchy { annotations, out_dir } => commands::hierarchy_rois(annotations, out_dir, &cfg),
        Command::Classify {
            annotations,
            standards,
            out_dir,
            overlay,
            json,
        } => commands::classify_rois(
            &ClassifyArgs {
                annotations,
                standards,
                out_dir: out_dir.as_deref(),
                overlay: *overlay,
                json: *json,
            },
            &cfg,
        ),
        Command::Evaluate {
            annotations,
            standards,
            out_dir,
            jobs,
            split,
            json,
        } => commands::evaluate(
            &EvaluateArgs {
                annotations,
                standards,
                out_dir: out_dir.as_deref(),
                jobs: *jobs,
                split: *split,
                json: *json,
            },
            &cfg,
        ),
        Command::GenFixtures { out_dir } => commands::gen_fixtures(out_dir, cfg.seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
