mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use respenc::checkpoint::{self, CheckpointError};
use respenc::cost::{architecture_table, cost_report, render_architectures, render_components, render_windows, window_table};
use respenc::fusion::FusionRegistry;
use respenc::model::{ModelConfig, ModelError, Preprocess, RespModel};
use respenc::signal::io::{load_dataset, write_dataset, Dataset, Split};
use respenc::signal::{synth_dataset, window_count, SignalError};
use respenc::training::{evaluate, train, Adam, TrainError};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "respenc", version, about = "Respiration-based pain classification pipeline")]
struct Cli {
    /// More log output (-v: per-epoch lines).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic three-class dataset and its manifest.
    Synth(SynthArgs),
    /// Train a model and write metrics, checkpoints and a frozen config.
    Train(TrainArgs),
    /// Score a checkpoint on one split of a dataset.
    Eval(EvalArgs),
    /// Print parameter and FLOP tables.
    Profile(ProfileArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Training recordings per class.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    per_class: u32,
    #[arg(long, default_value_t = 0)]
    val_per_class: u32,
    #[arg(long, default_value_t = 0)]
    test_per_class: u32,
    #[arg(long, default_value_t = 3407)]
    seed: u64,
    /// Recording length in seconds.
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = 100.0)]
    sample_rate: f64,
}

/// Flags shared by the commands that read a run configuration.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset manifest; overrides `data.manifest`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    window_seconds: Option<f64>,
    #[arg(long)]
    fusion: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// train, val or test.
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Padded input length in samples.
    #[arg(long, default_value_t = 1150)]
    input_length: usize,
}

/// Failure with its exit code.
#[derive(Debug)]
enum CliError {
    /// Bad configuration or flags: exit 2.
    Config(String),
    /// Unreadable or unusable data: exit 3.
    Data(String),
    /// Training diverged or a checkpoint is unusable: exit 4.
    Numerical(String),
    /// Output could not be written: exit 1.
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Numerical(m) | CliError::Io(m) => m,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Signal(_) => CliError::Data(e.to_string()),
            ModelError::Numerics(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(_) | TrainError::Augment(_) | TrainError::EpochOutOfRange { .. } => {
                CliError::Config(e.to_string())
            }
            TrainError::EmptySplit(_) | TrainError::MissingClass(_) | TrainError::Signal(_) => CliError::Data(e.to_string()),
            TrainError::NonFinite { .. } | TrainError::Numerics(_) => CliError::Numerical(e.to_string()),
            TrainError::Model(m) => m.into(),
            TrainError::Hook(m) => CliError::Io(m),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Numerical(format!("checkpoint: {e}"))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let splits = [
        (Split::Train, args.per_class, args.seed),
        (Split::Val, args.val_per_class, args.seed.wrapping_add(1)),
        (Split::Test, args.test_per_class, args.seed.wrapping_add(2)),
    ];
    let mut records = Vec::new();
    for (split, n, seed) in splits {
        if n > 0 {
            let recs = synth_dataset(n as usize, args.duration, args.sample_rate, seed);
            records.extend(recs.into_iter().map(|r| (r, split)));
        }
    }
    let manifest = write_dataset(&args.out, &records).map_err(|e| CliError::Io(e.to_string()))?;
    println!("wrote {} recordings and {}", records.len(), manifest.display());
    Ok(())
}

/// Loads the config file, if any, and applies command-line overrides.
fn resolve_config(run: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &run.config {
        Some(path) => RunConfig::load(path).map_err(CliError::Config)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &run.data {
        cfg.data.manifest = Some(d.clone());
    }
    if let Some(o) = &run.out {
        cfg.out_dir = Some(o.clone());
    }
    if let Some(s) = run.seed {
        cfg.train.seed = s;
    }
    if let Some(t) = run.window_seconds {
        cfg.train.window_seconds = t;
    }
    if let Some(f) = &run.fusion {
        cfg.train.fusion = f.clone();
    }
    Ok(cfg)
}

fn validate_config(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.train.validate()?;
    cfg.encoder.validate().map_err(|e| CliError::Config(e.to_string()))?;
    cfg.preprocess().validate().map_err(|e| CliError::Config(e.to_string()))?;
    let registry = FusionRegistry::builtin();
    if !registry.contains(&cfg.train.fusion) {
        let known: Vec<_> = registry.names().collect();
        return Err(CliError::Config(format!(
            "unknown fusion variant {:?}; known variants: {}",
            cfg.train.fusion,
            known.join(", ")
        )));
    }
    Ok(())
}

fn load_data(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let manifest = cfg
        .data
        .manifest
        .as_ref()
        .ok_or_else(|| CliError::Config("no dataset manifest: pass --data or set data.manifest".into()))?;
    load_dataset(manifest, cfg.data.sample_rate_hz).map_err(|e| match e {
        SignalError::Io { .. } | SignalError::Parse { .. } => CliError::Data(e.to_string()),
        other => CliError::Data(format!("{}: {other}", manifest.display())),
    })
}

fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let cfg = resolve_config(&args.run)?;
    validate_config(&cfg)?;
    let out = cfg
        .out_dir
        .clone()
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set out_dir".into()))?;
    let data = load_data(&cfg)?;
    if data.val.is_empty() {
        return Err(CliError::Data("the manifest has no val recordings".into()));
    }

    create_dir(&out)?;
    write_file(&out.join("config.toml"), &cfg.to_toml())?;

    let preprocess = cfg.preprocess();
    let n_windows = preprocess.n_windows().map_err(|e| CliError::Config(e.to_string()))?;
    let model_cfg = ModelConfig::new(cfg.encoder.clone(), &cfg.train.fusion, n_windows);
    let mut model = RespModel::new(model_cfg, cfg.train.seed)?;
    log::info!(
        "training {} parameters for {} epochs; optimizer {}",
        model.store.num_scalars(),
        cfg.train.epochs,
        Adam::new(&model.store).describe()
    );

    let metrics_path = out.join("metrics.tsv");
    let mut metrics = fs::File::create(&metrics_path).map_err(|e| CliError::Io(format!("{}: {e}", metrics_path.display())))?;
    let every = cfg.train.checkpoint_every;
    let outcome = train(
        &mut model,
        &preprocess,
        &data.train,
        &data.val,
        &cfg.train,
        &mut |record, model| {
            let line = record.tsv_line();
            log::debug!("{line}");
            writeln!(metrics, "{line}").map_err(|e| TrainError::Hook(format!("{}: {e}", metrics_path.display())))?;
            if every > 0 && (record.epoch + 1) % every == 0 {
                let path = out.join(format!("epoch_{:05}.ckpt", record.epoch + 1));
                checkpoint::save(&path, model, &preprocess).map_err(|e| TrainError::Hook(e.to_string()))?;
            }
            Ok(())
        },
    )?;
    metrics.flush().map_err(|e| CliError::Io(e.to_string()))?;

    checkpoint::save(&out.join("final.ckpt"), &model, &preprocess)?;
    let final_params = std::mem::replace(&mut model.store, outcome.best_params.clone());
    checkpoint::save(&out.join("best.ckpt"), &model, &preprocess)?;
    model.store = final_params;

    let last = outcome.history.last().expect("at least one epoch");
    let best = &outcome.history[outcome.best_epoch];
    let summary = format!(
        "optimizer\t{}\nseed\t{}\nfinal_epoch\t{}\nfinal_val_macro_accuracy\t{:.6}\nfinal_val_macro_f1\t{:.6}\nbest_epoch\t{}\nbest_val_macro_accuracy\t{:.6}\nbest_val_macro_f1\t{:.6}\n",
        Adam::new(&model.store).describe(),
        cfg.train.seed,
        last.epoch,
        last.val.macro_accuracy,
        last.val.macro_f1,
        best.epoch,
        best.val.macro_accuracy,
        best.val.macro_f1,
    );
    write_file(&out.join("summary.tsv"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let split: Split = args.split.parse().map_err(|e: SignalError| CliError::Config(e.to_string()))?;
    let ckpt = checkpoint::load(&args.checkpoint)?;
    let model_cfg = ckpt.model.config().clone();

    let mut cfg = match &args.run.config {
        Some(path) => RunConfig::load(path).map_err(CliError::Config)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &args.run.data {
        cfg.data.manifest = Some(d.clone());
    }
    cfg.data.sample_rate_hz = ckpt.preprocess.sample_rate_hz;

    // The checkpoint fixes the pipeline; explicit settings must agree with it.
    let requested_window = args
        .run
        .window_seconds
        .or(args.run.config.as_ref().map(|_| cfg.train.window_seconds));
    if let Some(t) = requested_window {
        let probe = Preprocess {
            window_seconds: t,
            ..ckpt.preprocess.clone()
        };
        let n = probe.n_windows().map_err(|e| CliError::Config(e.to_string()))?;
        if n != model_cfg.n_windows {
            return Err(CliError::Config(format!(
                "window count mismatch: {t} s windows give {n} windows, the checkpoint was trained with {} ({} s)",
                model_cfg.n_windows, ckpt.preprocess.window_seconds
            )));
        }
    }
    let requested_fusion = args
        .run
        .fusion
        .clone()
        .or(args.run.config.as_ref().map(|_| cfg.train.fusion.clone()));
    if let Some(f) = requested_fusion {
        if f != model_cfg.fusion {
            return Err(CliError::Config(format!(
                "fusion mismatch: requested {f:?}, the checkpoint uses {:?}",
                model_cfg.fusion
            )));
        }
    }

    let data = load_data(&cfg)?;
    let records = data.split(split);
    if records.is_empty() {
        return Err(CliError::Data(format!("the manifest has no {split} recordings")));
    }
    let report = evaluate(&ckpt.model, &ckpt.preprocess, records)?;

    let out = match &args.run.out {
        Some(o) => o.clone(),
        None => args.checkpoint.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf),
    };
    create_dir(&out)?;
    write_file(&out.join(format!("confusion_{split}.tsv")), &report.confusion_tsv())?;
    println!("split\t{split}\nrecordings\t{}\n{report}", records.len());
    print!("{}", report.confusion_tsv());
    Ok(())
}

fn cmd_profile(args: &ProfileArgs) -> Result<(), CliError> {
    let cfg = resolve_config(&args.run)?;
    validate_config(&cfg)?;
    let fs_hz = cfg.data.sample_rate_hz;
    let window_len = cfg.preprocess().window_len().map_err(|e| CliError::Config(e.to_string()))?;
    let cost = |e: respenc::cost::CostError| CliError::Config(e.to_string());

    let arch = architecture_table(&cfg.encoder, &cfg.train.fusion, window_len).map_err(cost)?;
    print!("{}", render_architectures(&arch, window_len));
    println!();

    let model = ModelConfig::new(cfg.encoder.clone(), &cfg.train.fusion, window_count(args.input_length, window_len));
    let report = cost_report(&model, args.input_length, window_len).map_err(cost)?;
    print!("{}", render_components(&report));
    println!();

    let mut fusions = vec!["add".to_string()];
    if cfg.train.fusion != "add" {
        fusions.push(cfg.train.fusion.clone());
    }
    for fusion in fusions {
        let rows = window_table(&cfg.encoder, &fusion, args.input_length, fs_hz).map_err(cost)?;
        print!("{}", render_windows(&rows));
        println!();
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Info,
        1 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Profile(a) => cmd_profile(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
