use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Result;
use log::LevelFilter;
use serde::Serialize;
use v2x_core::channel::ChannelModel;
use v2x_core::dataset::{generate_dataset, load_split, DatasetManifest, Split, DATASET_FORMAT_VERSION, MANIFEST_FILE};
use v2x_core::estimators::{EstimatorId, TaConfig};
use v2x_core::eval::{read_csv, run_sweep, write_csv, write_plot_data, SweepPlan, SweepSetup};
use v2x_core::phy::{Constellation, FrameSpec};
use v2x_core::pipeline::TcnPipeline;
use v2x_core::tcn::{save_checkpoint, train, TcnConfig, TcnModel, TrainConfig, CHECKPOINT_VERSION};
use v2x_core::Error;

use crate::config::{write_meta, FileConfig};
use crate::{Cli, Command, GenerateArgs, PlotDataArgs, SweepArgs, TrainArgs};

/// Version of the CSV outputs (results and loss history).
const CSV_FORMAT_VERSION: u32 = 1;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.csv";

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

fn io_err(path: &Path, source: std::io::Error) -> anyhow::Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
    .into()
}

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let level = cli.log_level.clone().or(file.log_level.clone()).unwrap_or_else(|| "info".into());
    let level: LevelFilter = level
        .parse()
        .map_err(|_| config_err(format!("unknown log level {level:?}")))?;
    let _ = env_logger::Builder::new().filter_level(level).try_init();

    if let Some(n) = cli.threads.or(file.threads) {
        if n == 0 {
            return Err(config_err("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_err(e.to_string()))?;
    }
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    match cli.command {
        Command::Generate(args) => generate(args, &file, seed),
        Command::Train(args) => train_cmd(args, &file, seed),
        Command::Sweep(args) => sweep(args, &file, seed),
        Command::PlotData(args) => plot_data(args),
    }
}

fn load_profile(path: Option<&PathBuf>) -> Result<ChannelModel> {
    Ok(match path {
        Some(p) => ChannelModel::load_profile(p)?,
        None => ChannelModel::vtv_sdww_illustrative(),
    })
}

fn generate(args: GenerateArgs, file: &FileConfig, seed: u64) -> Result<()> {
    let f = &file.generate;
    let frames = args.frames.or(f.frames);
    let split = match args.split {
        Some(v) => match v[..] {
            [a, b, c] => Some([a, b, c]),
            _ => return Err(config_err("--split takes exactly three counts: train,val,test")),
        },
        None => f.split,
    };
    let mut manifest = match (frames, split) {
        (Some(n), Some(s)) if s.iter().sum::<usize>() != n => {
            return Err(config_err(format!(
                "split {}+{}+{} does not add up to {n} frames",
                s[0], s[1], s[2]
            )))
        }
        (_, Some(s)) => DatasetManifest::with_split(s[0], s[1], s[2], seed),
        (Some(n), None) => DatasetManifest::with_total(n, seed),
        (None, None) => DatasetManifest { seed, ..DatasetManifest::default() },
    };
    if let Some(snr) = args.snr.or(f.snr_db) {
        manifest.train_snr_db = snr;
    }
    let model = load_profile(args.profile.as_ref().or(f.profile.as_ref()))?;
    manifest.profile = model.name.clone();

    generate_dataset(&manifest, &args.out, &FrameSpec::ieee80211p(), &Constellation::qam16(), &model)?;
    write_meta(&args.out.join(MANIFEST_FILE), "generate", seed, DATASET_FORMAT_VERSION, &manifest)?;
    for split in Split::ALL {
        println!("{} {}", split.name(), manifest.range(split).len());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct TrainRun {
    train: TrainConfig,
    model: TcnConfig,
    dataset: DatasetManifest,
}

fn train_cmd(args: TrainArgs, file: &FileConfig, seed: u64) -> Result<()> {
    let f = &file.train;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        learning_rate: args.lr.or(f.lr).unwrap_or(defaults.learning_rate),
        epochs: args.epochs.or(f.epochs).unwrap_or(defaults.epochs),
        step_size: args.step.or(f.step).unwrap_or(defaults.step_size),
        gamma: args.gamma.or(f.gamma).unwrap_or(defaults.gamma),
        batch_size: args.batch.or(f.batch).unwrap_or(defaults.batch_size),
        dropout: args.dropout.or(f.dropout).unwrap_or(defaults.dropout),
        seed,
    };
    cfg.validate()?;
    let spec = FrameSpec::ieee80211p();
    let dataset = DatasetManifest::load(&args.data.join(MANIFEST_FILE))?;
    let train_set = load_split(&args.data, Split::Train, &spec)?;
    let val_set = load_split(&args.data, Split::Val, &spec)?;
    let model_cfg = TcnConfig {
        dropout: cfg.dropout,
        ..TcnConfig::default()
    };
    let model = TcnModel::from_seed(model_cfg.clone(), seed)?;
    let outcome = train(model, &train_set, &val_set, &cfg)?;

    fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let run = TrainRun {
        train: cfg,
        model: model_cfg,
        dataset,
    };
    let ckpt = args.out.join(CHECKPOINT_FILE);
    save_checkpoint(&outcome.model, &ckpt)?;
    write_meta(&ckpt, "train", seed, CHECKPOINT_VERSION, &run)?;

    let mut csv = String::from("epoch,lr,train_loss,val_loss\n");
    for r in &outcome.history {
        csv.push_str(&format!("{},{:e},{:e},{:e}\n", r.epoch, r.lr, r.train_loss, r.val_loss));
    }
    let history = args.out.join(HISTORY_FILE);
    fs::write(&history, csv).map_err(|e| io_err(&history, e))?;
    write_meta(&history, "train", seed, CSV_FORMAT_VERSION, &run)?;
    println!(
        "best epoch {} val loss {:e} -> {}",
        outcome.best_epoch,
        outcome.best_val_loss,
        ckpt.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepRun {
    plan: SweepPlan,
    ta: TaConfig,
    profile: String,
}

fn sweep(args: SweepArgs, file: &FileConfig, seed: u64) -> Result<()> {
    let f = &file.sweep;
    let defaults = SweepPlan::default();
    let estimators = match args.estimators.or(f.estimators.clone()) {
        Some(names) => names
            .iter()
            .map(|n| n.trim().parse::<EstimatorId>())
            .collect::<Result<Vec<_>, _>>()?,
        None => defaults.estimators,
    };
    let plan = SweepPlan {
        snr_grid_db: args.snr.or(f.snr.clone()).unwrap_or(defaults.snr_grid_db),
        estimators,
        frames_per_point: args.frames.or(f.frames).unwrap_or(defaults.frames_per_point),
        seed,
    };
    plan.validate()?;
    let ta = TaConfig {
        alpha: args.ta_alpha.or(f.ta_alpha).unwrap_or(TaConfig::default().alpha),
    };
    ta.validate()?;
    let channel = load_profile(args.profile.as_ref().or(f.profile.as_ref()))?;

    let pipeline = match plan.estimators.iter().find(|e| e.needs_model()) {
        None => None,
        Some(id) => {
            let path = args
                .checkpoint
                .or(f.checkpoint.clone())
                .ok_or_else(|| config_err(format!("estimator {id} needs --checkpoint")))?;
            if !path.exists() {
                return Err(config_err(format!(
                    "estimator {id} needs a checkpoint, but {} does not exist",
                    path.display()
                )));
            }
            Some(TcnPipeline::new(v2x_core::tcn::load_checkpoint(&path)?, ta))
        }
    };
    let mut setup = SweepSetup::new(channel, pipeline);
    setup.ta = ta;
    let records = run_sweep(&plan, &setup)?;

    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    write_csv(&records, &args.out)?;
    let run = SweepRun {
        plan,
        ta,
        profile: setup.channel.name.clone(),
    };
    write_meta(&args.out, "sweep", seed, CSV_FORMAT_VERSION, &run)?;
    if let Some(dir) = args.plot_dir {
        write_plot_data(&records, &dir)?;
    }
    println!("{} records -> {}", records.len(), args.out.display());
    Ok(())
}

fn plot_data(args: PlotDataArgs) -> Result<()> {
    let records = read_csv(&args.input)?;
    for path in write_plot_data(&records, &args.out)? {
        println!("{}", path.display());
    }
    Ok(())
}
