mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use v2x_core::Error;

/// IEEE 802.11p channel-estimation simulator: dataset generation, TCN
/// training and BER/NMSE sweeps.
#[derive(Debug, Parser)]
#[command(name = "v2x", version)]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed.
    #[arg(long, global = true, env = "V2X_SEED")]
    pub seed: Option<u64>,
    /// Maximum worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true)]
    pub log_level: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate frames and write the train/val/test dataset.
    Generate(GenerateArgs),
    /// Train the TCN on a generated dataset.
    Train(TrainArgs),
    /// Evaluate estimators over an SNR grid.
    Sweep(SweepArgs),
    /// Convert a results CSV into per-estimator gnuplot data files.
    PlotData(PlotDataArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Total number of frames.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Train,val,test frame counts, e.g. `6,2,2`.
    #[arg(long, value_delimiter = ',')]
    pub split: Option<Vec<usize>>,
    /// Training SNR in dB.
    #[arg(long)]
    pub snr: Option<f64>,
    /// Tap profile (TOML); defaults to the bundled profile.
    #[arg(long)]
    pub profile: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for the checkpoint and loss history.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Epochs between learning-rate decays.
    #[arg(long)]
    pub step: Option<usize>,
    /// Learning-rate decay factor.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated estimator ids (ls, dpa, sta, cdp, trfi, dpa-ta, tcn,
    /// tcn-dpa, tcn-dpa-ta).
    #[arg(long, value_delimiter = ',')]
    pub estimators: Option<Vec<String>>,
    /// Comma-separated SNR points in dB.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub snr: Option<Vec<f64>>,
    /// Frames per SNR point.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Trained checkpoint, required for the tcn* estimators.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Temporal-averaging weight for the -ta estimators.
    #[arg(long)]
    pub ta_alpha: Option<f64>,
    /// Results CSV.
    #[arg(long, default_value = "results.csv")]
    pub out: PathBuf,
    /// Also write gnuplot data files into this directory.
    #[arg(long)]
    pub plot_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotDataArgs {
    /// Results CSV written by `sweep`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 2,
        Some(Error::Io { .. } | Error::Format { .. }) => 3,
        Some(Error::Diverged { .. }) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
