mod commands;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::exit::Code;

/// Vision-based race driving: train a PPO agent from pixels, evaluate it
/// against a quasi-steady-state lap, and inspect the results.
#[derive(Debug, Parser)]
#[command(name = "gripline", version, after_help = EXIT_CODES)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  runtime failure
  2  usage error (unknown flag or bad value)
  3  malformed config or input file
  4  missing or unreadable checkpoint
  5  invalid track file
  6  i/o error
  7  verification failed";

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy; resumes when the run directory holds a checkpoint.
    Train(TrainArgs),
    /// Drive one deterministic episode with a trained policy.
    Eval(EvalArgs),
    /// Quasi-steady-state speed profile and reference lap time.
    Baseline(BaselineArgs),
    /// Render the telemetry figure (SVG) for an episode CSV.
    Plot(PlotArgs),
    /// Print track geometry statistics.
    TrackInfo(TrackInfoArgs),
    /// Write observation frames as binary PGM images.
    RenderDump(RenderDumpArgs),
    /// Run the acceptance checks and report one line per criterion.
    Verify(VerifyArgs),
}

/// Config selection shared by the commands that build an environment.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// TOML config file, or the manifest.json of an earlier run.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override a config field by dotted name, e.g. ppo.max_steps=20000.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Random seed (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Track: `oval`, `bundled` or a track file (overrides the config).
    #[arg(long)]
    pub track: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Run directory [default: runs/<track>-seed<seed>].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Only print evaluation lines.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Policy file, or a run directory (its manifest supplies the config).
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Output directory [default: <run>/eval or runs/eval].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Step cap of the episode [default: the config's eval_max_steps].
    #[arg(long)]
    pub max_steps: Option<u32>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Friction coefficient [default: the vehicle's mu].
    #[arg(long)]
    pub mu: Option<f64>,
    /// Periodic flying lap instead of a standing start over the finish distance.
    #[arg(long)]
    pub flying: bool,
    /// Output directory [default: runs/baseline-<track>].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Episode telemetry CSV.
    #[arg(long, value_name = "FILE")]
    pub telemetry: PathBuf,
    /// Learning curve CSV for the first panel.
    #[arg(long, value_name = "FILE")]
    pub curve: Option<PathBuf>,
    /// Track for the map panel: `oval`, `bundled` or a track file.
    #[arg(long)]
    pub track: Option<String>,
    /// Friction coefficient for the GG circle.
    #[arg(long, default_value_t = 1.1)]
    pub mu: f64,
    /// Output directory [default: next to the telemetry file].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrackInfoArgs {
    /// `oval`, `bundled` or a track file.
    #[arg(default_value = "bundled")]
    pub track: String,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct RenderDumpArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Environment steps to render after reset.
    #[arg(long, default_value_t = 8)]
    pub frames: u32,
    /// Constant raw steering action.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub steer: f64,
    /// Constant raw throttle/brake action.
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub throttle: f64,
    /// Output directory [default: runs/frames-<track>].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Also run the training-backed criteria (hours on first use; finished
    /// runs are reused).
    #[arg(long)]
    pub long: bool,
    /// Directory for the training runs of the long criteria.
    #[arg(long, value_name = "DIR", default_value = "target/acceptance")]
    pub runs: PathBuf,
    /// Write the full report here as well.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                Code::Usage.into()
            } else {
                Code::Ok.into()
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => Code::Ok.into(),
        Err(e) => {
            eprintln!("gripline: {e}");
            e.code.into()
        }
    }
}
