//! `banff`: batch scoring, evaluation, synthesis, sensitivity analysis and
//! rendering for Banff g / ptc / v grading.
//!
//! Exit codes: 0 success, 2 invalid input, 1 internal failure.

mod commands;
mod config;
mod error;
mod io;

use std::panic;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::SceneSources;
use config::{FlagOverrides, RunConfig};
use error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "banff", version, about = "Rule-based Banff lesion grading (g, ptc, v)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: current directory).
    #[arg(long, global = true)]
    out_dir: Option<String>,
    /// Minimum detection confidence counted.
    #[arg(long, global = true)]
    min_confidence: Option<f64>,
    /// Comma-separated cell classes counted for every indicator.
    #[arg(long, global = true)]
    classes: Option<String>,
    /// Same-class suppression radius in pixels, or `off`.
    #[arg(long, global = true)]
    dedup_radius: Option<String>,
}

#[derive(Debug, Args)]
struct Inputs {
    /// Scene file written by `synth` (repeatable).
    #[arg(long)]
    scene: Vec<PathBuf>,
    /// Structure GeoJSON (repeatable, pairs with --detections in order).
    #[arg(long)]
    structures: Vec<PathBuf>,
    /// Detection point document (repeatable).
    #[arg(long)]
    detections: Vec<PathBuf>,
}

impl Inputs {
    fn sources(&self) -> SceneSources {
        SceneSources {
            scenes: self.scene.clone(),
            structures: self.structures.clone(),
            detections: self.detections.clone(),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Grade sections and write `<section>.score.json`.
    Score {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        common: Common,
    },
    /// Compare score reports with expert grades listed in a manifest.
    Evaluate {
        /// CSV of `report,ground_truth` path pairs.
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Generate synthetic scenes with known grades.
    Synth {
        /// Scene spec JSON: one object or an array (repeatable).
        #[arg(long, required = true)]
        spec: Vec<PathBuf>,
        /// Overrides spec seeds; the k-th spec gets `seed + k`.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Perturb and rescore a scene many times.
    Sensitivity {
        #[command(flatten)]
        inputs: Inputs,
        /// Perturbation spec JSON (default: no perturbation).
        #[arg(long)]
        perturbation: Option<PathBuf>,
        /// Overrides the perturbation seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
        /// Comma-separated dropout probabilities; writes `<section>.sweep.csv`.
        #[arg(long)]
        fn_prob_sweep: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Draw a scene, with per-instance counts when a report is given.
    Render {
        #[command(flatten)]
        inputs: Inputs,
        /// Score report for count labels (repeatable, matched by section).
        #[arg(long)]
        report: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(common: &Common, seed: Option<u64>, trials: Option<u64>) -> CliResult<RunConfig> {
    let flags = FlagOverrides {
        min_confidence: common.min_confidence,
        classes: common.classes.clone(),
        dedup_radius: common.dedup_radius.clone(),
        seed,
        trials,
        out_dir: common.out_dir.clone(),
    };
    RunConfig::resolve(common.config.as_deref(), &flags)
}

fn run(cli: Cli) -> CliResult<Vec<PathBuf>> {
    match cli.command {
        Command::Score { inputs, common } => commands::score(&inputs.sources(), &resolve(&common, None, None)?),
        Command::Evaluate { manifest, common } => commands::evaluate(&manifest, &resolve(&common, None, None)?),
        Command::Synth { spec, seed, common } => commands::synth(&spec, &resolve(&common, seed, None)?),
        Command::Sensitivity {
            inputs,
            perturbation,
            seed,
            trials,
            fn_prob_sweep,
            common,
        } => commands::sensitivity(
            &inputs.sources(),
            perturbation.as_deref(),
            fn_prob_sweep.as_deref(),
            &resolve(&common, seed, trials)?,
        ),
        Command::Render { inputs, report, common } => {
            commands::render(&inputs.sources(), &report, &resolve(&common, None, None)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match panic::catch_unwind(|| run(cli)) {
        Ok(Ok(written)) => {
            for p in written {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Ok(Err(e)) => {
            eprintln!("banff: error: {e}");
            e.exit_code()
        }
        Err(_) => {
            eprintln!("banff: internal error");
            ExitCode::from(1)
        }
    }
}
