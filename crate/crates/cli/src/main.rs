//! `contramatch`: generate synthetic matching data, pre-train a matcher,
//! evaluate it against baselines and inspect the learned augmentation pool.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use contramatch::dataset::{self, Dataset, Split};
use contramatch::eval::{evaluate, evaluate_with, random_match, spectral_match, EvalReport};
use contramatch::model::{Checkpoint, CheckpointError};
use contramatch::train::{train, TrainError};
use contramatch::{MatchError, SamplerKind, Setting};
use thiserror::Error;

use config::{sibling, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<dataset::DatasetError> for CliError {
    fn from(e: dataset::DatasetError) -> Self {
        match e {
            dataset::DatasetError::Synthetic(s) => CliError::Config(s.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Data(format!("model: {e}"))
    }
}

impl From<MatchError> for CliError {
    fn from(e: MatchError) -> Self {
        match e {
            MatchError::EmptyIntersection | MatchError::Graph(_) => CliError::Data(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(_) | TrainError::Pool(_) => CliError::Config(e.to_string()),
            TrainError::EmptyDataset | TrainError::FeatureWidth { .. } | TrainError::Graph(_) => {
                CliError::Data(e.to_string())
            }
            other => CliError::Numeric(other.to_string()),
        }
    }
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display()))),
        None => Ok(()),
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    ensure_parent(path)?;
    fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Debug, Parser)]
#[command(name = "contramatch", version, about = "Self-supervised graph matching")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SamplerArg {
    Uniform,
    Bias,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SettingArg {
    Intsec,
    Unfilt,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BaselineArg {
    /// Spectral matching on node features and structure.
    Sm,
    /// Uniformly random assignment.
    Random,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Val,
    Test,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Gen {
        /// Run configuration (TOML); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Pre-train a matcher on the dataset's unlabeled graphs.
    Train {
        /// Dataset file (falls back to `paths.data`).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Run configuration (TOML); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint to write (falls back to `paths.model`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-epoch CSV log (falls back to `paths.log`).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Augmentation sampler; overrides `train.bias.sampler`.
        #[arg(long, value_enum)]
        sampler: Option<SamplerArg>,
        /// Pool snapshot CSV (default: next to the checkpoint).
        #[arg(long)]
        pool: Option<PathBuf>,
    },
    /// Evaluate a checkpoint or a baseline on labeled pairs.
    Eval {
        /// Dataset file (falls back to `paths.data`).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint; not needed with `--baseline`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// `intsec` scores inliers only; `unfilt` keeps outliers.
        #[arg(long, value_enum)]
        setting: SettingArg,
        /// Per-pair CSV report; a JSON summary is written next to it.
        #[arg(long)]
        out: PathBuf,
        /// Evaluate a learning-free baseline instead of a checkpoint.
        #[arg(long, value_enum)]
        baseline: Option<BaselineArg>,
        /// Which labeled split to score.
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Run configuration (TOML); supplies `paths` and spectral settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Dump a checkpoint's augmentation pool sorted by weight.
    InspectPool {
        /// Checkpoint to read.
        #[arg(long)]
        model: PathBuf,
        /// CSV file to write.
        #[arg(long)]
        out: PathBuf,
    },
}

fn required(
    flag: Option<PathBuf>,
    fallback: &Option<PathBuf>,
    flag_name: &str,
    key: &str,
) -> Result<PathBuf, CliError> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| CliError::Config(format!("--{flag_name} not given and no paths.{key} in config")))
}

fn cmd_gen(config: Option<PathBuf>, out: PathBuf) -> Result<(), CliError> {
    let cfg = RunConfig::load_or_default(config.as_deref())?;
    let ds = dataset::generate(&cfg.data)?;
    ensure_parent(&out)?;
    dataset::save_dataset(&ds, &out)?;
    cfg.echo_next_to(&out)?;
    print_summary(&ds);
    Ok(())
}

fn print_summary(ds: &Dataset) {
    let train = ds.train_graphs();
    let nodes = train.iter().map(|g| g.num_nodes()).chain(
        ds.classes
            .iter()
            .flat_map(|c| c.pairs.iter())
            .flat_map(|p| [p.pair.source.num_nodes(), p.pair.target.num_nodes()]),
    );
    let (lo, hi) = nodes.fold((usize::MAX, 0), |(lo, hi), n| (lo.min(n), hi.max(n)));
    println!("classes: {}", ds.classes.len());
    println!("train graphs: {}", train.len());
    println!("val pairs: {}", ds.pairs(Split::Val).len());
    println!("test pairs: {}", ds.pairs(Split::Test).len());
    if lo <= hi {
        println!("nodes per graph: {lo}..={hi}");
    }
}

fn cmd_train(
    data: Option<PathBuf>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    log_path: Option<PathBuf>,
    sampler: Option<SamplerArg>,
    pool_path: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut cfg = RunConfig::load_or_default(config.as_deref())?;
    let data = required(data, &cfg.paths.data, "data", "data")?;
    let out = required(out, &cfg.paths.model, "out", "model")?;
    let log_path = required(log_path, &cfg.paths.log, "log", "log")?;
    if let Some(s) = sampler {
        cfg.train.bias.sampler = match s {
            SamplerArg::Uniform => SamplerKind::Uniform,
            SamplerArg::Bias => SamplerKind::Bias,
        };
    }
    let ds = dataset::load_dataset(&data)?;
    let outcome = train(&ds.train_graphs(), &ds.pairs(Split::Val), &cfg.train)?;
    ensure_parent(&out)?;
    Checkpoint::new(outcome.model, outcome.pool.clone()).save(&out)?;
    write_file(&log_path, &outcome.log.to_csv())?;
    let pool_path = pool_path.unwrap_or_else(|| sibling(&out, "pool.csv"));
    write_file(&pool_path, &pool_csv(&outcome.pool))?;
    cfg.echo_next_to(&out)?;
    println!(
        "epochs: {}, best epoch: {}, best val F1: {:.4}",
        outcome.log.epochs.len(),
        outcome.log.best_epoch,
        outcome.log.best_val_f1
    );
    Ok(())
}

fn pool_csv(pool: &contramatch::Pool) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "first", "second", "weight", "phi", "count"])
        .expect("in-memory write");
    for row in pool.snapshot() {
        w.write_record([
            row.index.to_string(),
            serde_json::to_string(&row.first).expect("spec serializes"),
            serde_json::to_string(&row.second).expect("spec serializes"),
            row.weight.to_string(),
            row.phi.map(|p| p.to_string()).unwrap_or_default(),
            row.count.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    data: Option<PathBuf>,
    model: Option<PathBuf>,
    setting: SettingArg,
    out: PathBuf,
    baseline: Option<BaselineArg>,
    split: SplitArg,
    config: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = RunConfig::load_or_default(config.as_deref())?;
    let data = required(data, &cfg.paths.data, "data", "data")?;
    let setting = match setting {
        SettingArg::Intsec => Setting::Intersection,
        SettingArg::Unfilt => Setting::Unfiltered,
    };
    let split = match split {
        SplitArg::Val => Split::Val,
        SplitArg::Test => Split::Test,
    };
    let ds = dataset::load_dataset(&data)?;
    let pairs = ds.pairs(split);
    let report: EvalReport = match baseline {
        Some(BaselineArg::Sm) => evaluate_with(&pairs, setting, "spectral", |p| {
            spectral_match(p, setting, &cfg.spectral)
        })?,
        Some(BaselineArg::Random) => {
            evaluate_with(&pairs, setting, "random", |p| random_match(p, setting, cfg.train.seed))?
        }
        None => {
            let model = required(model, &cfg.paths.model, "model", "model")?;
            let ck: Checkpoint = Checkpoint::load(&model)?;
            evaluate(&ck.model, &pairs, setting)?
        }
    };
    write_file(&out, &report.to_csv())?;
    write_file(&sibling(&out, "json"), &report.to_json())?;
    cfg.echo_next_to(&out)?;
    println!(
        "{} on {} pairs: F1 {:.4} +- {:.4}",
        report.method,
        report.pairs.len(),
        report.mean,
        report.std
    );
    Ok(())
}

fn cmd_inspect_pool(model: PathBuf, out: PathBuf) -> Result<(), CliError> {
    let ck: Checkpoint = Checkpoint::load(&model)?;
    write_file(&out, &pool_csv(&ck.pool))?;
    println!("{} entries, entropy {:.4}", ck.pool.len(), ck.pool.entropy());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Gen { config, out } => cmd_gen(config, out),
        Command::Train {
            data,
            config,
            out,
            log,
            sampler,
            pool,
        } => cmd_train(data, config, out, log, sampler, pool),
        Command::Eval {
            data,
            model,
            setting,
            out,
            baseline,
            split,
            config,
        } => cmd_eval(data, model, setting, out, baseline, split, config),
        Command::InspectPool { model, out } => cmd_inspect_pool(model, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
