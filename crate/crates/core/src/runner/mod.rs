//! Run orchestration, the command line, and run-directory artifacts.
//!
//! Run directory layout under `<project_dir>/<exp_name>/<run_name>/`:
//! `manifest.json`, `config.conf`, `vocab.txt`, `events.jsonl`, `log.txt`,
//! `ckpt/<phase>/{latest,best}.ckpt`, `preds/<task>_<split>.{tsv,jsonl}`,
//! and `completed.json` once every stage has finished.

pub mod cli;
pub mod events;
mod logging;
mod manifest;
pub mod plot;
pub mod preds;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use thiserror::Error;

use crate::codec::{sha256_hex, write_atomic};
use crate::confparse::{merge, parse_config_file, parse_overrides, render, validate, ConfigError, ConfigSchema, ConfigTree, ConfigValue, RunConfig, Source};
use crate::corpus::{load_examples, CorpusError, Split, TaskDescriptor, TaskRegistry};
use crate::model::{ClassifierKind, EncoderSpec, InputModule, ModelAssembly, ModelError, TransferParadigm};
use crate::pipeline::{build_vocab_for_tasks, preprocess, IndexedDataset, PipelineError, PreprocessOptions, Vocabulary};
use crate::tensor::{OptimHyper, OptimizerKind, RunRng};
use crate::trainer::{
    predict, split_metrics, target_phase, train_phase, CheckpointDir, PhaseContext, PhaseOutcome, PhaseSettings, PhaseTask, PlateauConfig,
    SamplingMethod, Slot, TrainError, INTERMEDIATE_PHASE,
};
use events::{EventLog, MetricEvent};
pub use logging::init_logging;
pub use manifest::{Completion, RunManifest, SCHEMA_VERSION};
use preds::{format_predictions, PredictionMode};

pub const EVAL_PHASE: &str = "eval";
pub const ENV_DATA_DIR: &str = "PHASEKIT_DATA_DIR";
pub const ENV_PROJECT_DIR: &str = "PHASEKIT_PROJECT_DIR";
pub const ENV_CACHE_DIR: &str = "PHASEKIT_CACHE_DIR";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid setting {key}: {message}")]
    Setting { key: String, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Predictions(#[from] preds::LengthMismatch),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("run directory {} already exists (use --force to replace it or --resume to continue it)", .0.display())]
    RunExists(PathBuf),
    #[error("run directory {} is locked by another process", .0.display())]
    Locked(PathBuf),
    #[error("config differs from the one recorded in {}: {found} vs {expected}", path.display())]
    ManifestMismatch { path: PathBuf, expected: String, found: String },
}

impl RunError {
    /// 2 for configuration errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Setting { .. } => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

/// Config layer for the environment variables that set default roots.
pub fn environment_layer(lookup: impl Fn(&str) -> Option<String>) -> ConfigTree {
    let mut tree = ConfigTree::new();
    for (var, key) in [(ENV_DATA_DIR, "data_dir"), (ENV_PROJECT_DIR, "project_dir"), (ENV_CACHE_DIR, "cache_dir")] {
        if let Some(v) = lookup(var).filter(|v| !v.is_empty()) {
            tree = merge(&tree, &ConfigTree::single(&[key.to_string()], ConfigValue::String(v), Source::Environment));
        }
    }
    tree
}

/// Composes config files left to right over `base`, applies the overrides
/// fragment last, and validates the result.
pub fn compose_config(base: ConfigTree, files: &[PathBuf], overrides: Option<&str>) -> Result<RunConfig, ConfigError> {
    let mut tree = base;
    for file in files {
        tree = merge(&tree, &parse_config_file(file)?);
    }
    if let Some(fragment) = overrides {
        tree = merge(&tree, &parse_overrides(fragment)?);
    }
    validate(&tree, &ConfigSchema::standard())
}

/// Hex SHA-256 of the rendered resolved config.
pub fn config_hash(cfg: &RunConfig) -> String {
    sha256_hex(render(&cfg.tree).as_bytes())
}

pub fn run_dir(cfg: &RunConfig) -> PathBuf {
    cfg.project_dir.join(&cfg.exp_name).join(&cfg.run_name)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Replace an existing run directory.
    pub force: bool,
    /// Continue an existing run from its checkpoints.
    pub resume: bool,
    /// Stop with an interruption error after this step of this phase.
    pub interrupt: Option<(String, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub phases: Vec<(String, PhaseOutcome)>,
    /// Evaluation metrics per target task, keyed `<split>_<metric>`.
    pub eval: IndexMap<String, BTreeMap<String, f64>>,
}

/// Removes the lock file when the run ends, however it ends.
struct RunLock(PathBuf);

impl RunLock {
    fn acquire(dir: &Path) -> Result<Self, RunError> {
        let path = dir.join(".lock");
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(RunError::Locked(dir.to_path_buf())),
            Err(e) => Err(RunError::Io { path, source: e }),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

fn setting<T: std::str::FromStr<Err = String>>(key: &str, value: &str) -> Result<T, RunError> {
    value.parse().map_err(|message| RunError::Setting { key: key.to_string(), message })
}

pub fn encoder_spec(cfg: &RunConfig) -> Result<EncoderSpec, RunError> {
    let input_module = match cfg.input_module.as_str() {
        "embedding_file" | "glove" => InputModule::EmbeddingFile(cfg.embeddings_file.clone().ok_or_else(|| RunError::Setting {
            key: "embeddings_file".into(),
            message: format!("required when input_module = {}", cfg.input_module),
        })?),
        _ => InputModule::Scratch,
    };
    Ok(EncoderSpec {
        input_module,
        embedding_dim: cfg.embedding_dim,
        sent_enc: setting("sent_enc", &cfg.sent_enc)?,
        hidden_dim: cfg.hidden_dim,
        bidirectional: cfg.bidirectional,
        pooling: setting("pooling", &cfg.pooling)?,
        dropout: cfg.dropout,
    })
}

pub fn classifier_kind(cfg: &RunConfig) -> Result<ClassifierKind, RunError> {
    Ok(match setting::<ClassifierKind>("classifier", &cfg.classifier)? {
        ClassifierKind::Mlp { .. } => ClassifierKind::Mlp { hidden: cfg.classifier_hid_dim },
        kind => kind,
    })
}

fn clamp_u32(v: u64) -> u32 {
    v.min(u32::MAX as u64) as u32
}

/// Phase settings from the global options; `task` applies that task's
/// override block to lr, patience, and val_interval.
pub fn phase_settings(cfg: &RunConfig, task: Option<&str>) -> Result<PhaseSettings, RunError> {
    let ov = task.and_then(|t| cfg.task_overrides.get(t)).cloned().unwrap_or_default();
    let optimizer = match cfg.optimizer.as_str() {
        "sgd" => OptimizerKind::Sgd,
        _ => OptimizerKind::AdamW,
    };
    Ok(PhaseSettings {
        optimizer,
        hyper: OptimHyper { weight_decay: cfg.weight_decay, warmup_steps: cfg.warmup_steps, ..OptimHyper::default() },
        lr: ov.lr.unwrap_or(cfg.lr),
        plateau: PlateauConfig {
            patience: clamp_u32(ov.patience.unwrap_or(cfg.patience)),
            lr_patience: clamp_u32(cfg.lr_patience),
            lr_decay_factor: cfg.lr_decay_factor,
            min_lr: cfg.min_lr,
            max_vals: clamp_u32(cfg.max_vals),
        },
        val_interval: ov.val_interval.unwrap_or(cfg.val_interval),
        accumulation_steps: cfg.accumulation_steps.max(1) as usize,
        sampling: setting::<SamplingMethod>("sampling_method", &cfg.sampling_method)?,
        max_steps: None,
    })
}

fn task_batch_size(cfg: &RunConfig, task: &str) -> usize {
    cfg.task_overrides.get(task).and_then(|o| o.batch_size).map_or(cfg.batch_size, |b| b as usize)
}

fn task_max_epochs(cfg: &RunConfig, task: &str) -> u32 {
    clamp_u32(cfg.task_overrides.get(task).and_then(|o| o.max_epochs).unwrap_or(cfg.max_epochs))
}

fn write_file(path: &Path, text: &str) -> Result<(), RunError> {
    write_atomic(path, text.as_bytes()).map_err(io_err(path))
}

/// Prepares the run directory: collision policy, lock, manifest, config.
fn open_run_dir(cfg: &RunConfig, opts: &RunOptions, hash: &str) -> Result<(PathBuf, RunLock), RunError> {
    let dir = run_dir(cfg);
    let occupied = dir.is_dir() && std::fs::read_dir(&dir).map_err(io_err(&dir))?.next().is_some();
    if occupied && !opts.resume {
        if !opts.force {
            return Err(RunError::RunExists(dir));
        }
        if dir.join(".lock").exists() {
            return Err(RunError::Locked(dir));
        }
        std::fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
    }
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let lock = RunLock::acquire(&dir)?;
    let manifest_path = dir.join("manifest.json");
    if manifest_path.is_file() {
        let existing = RunManifest::read(&manifest_path)?;
        if existing.config_hash != hash {
            return Err(RunError::ManifestMismatch { path: manifest_path, expected: existing.config_hash, found: hash.to_string() });
        }
    } else {
        let manifest = RunManifest::new(cfg, hash);
        write_file(&manifest_path, &manifest.to_json())?;
    }
    write_file(&dir.join("config.conf"), &render(&cfg.tree))?;
    Ok((dir, lock))
}

struct TaskData {
    train: IndexedDataset,
    val: IndexedDataset,
}

/// Runs every enabled stage of the experiment described by `cfg`.
pub fn run_experiment(cfg: &RunConfig, opts: &RunOptions) -> Result<RunSummary, RunError> {
    let hash = config_hash(cfg);
    let (dir, _lock) = open_run_dir(cfg, opts, &hash)?;
    let _log = logging::attach(&dir.join("log.txt")).map_err(io_err(&dir.join("log.txt")))?;
    log::info!("run {} / {} in {} (config {})", cfg.exp_name, cfg.run_name, dir.display(), &hash[..12]);

    let registry = TaskRegistry::from_config(&cfg.tasks, &cfg.data_dir)?;
    let pretrain: Vec<&TaskDescriptor> =
        if cfg.do_pretrain { cfg.pretrain_tasks.iter().map(|n| registry.get(n)).collect::<Result<_, _>>()? } else { Vec::new() };
    let targets: Vec<&TaskDescriptor> = if cfg.do_target_task_training || cfg.do_full_eval {
        cfg.target_tasks.iter().map(|n| registry.get(n)).collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };
    let mut all: Vec<&TaskDescriptor> = Vec::new();
    for d in pretrain.iter().chain(&targets) {
        if !all.iter().any(|x| x.name == d.name) {
            all.push(d);
        }
    }

    let vocab = build_vocab_for_tasks(all.iter().copied(), cfg.max_vocab_size)?;
    write_file(&dir.join("vocab.txt"), &vocab.to_text())?;
    log::info!("vocabulary of {} tokens over {} tasks", vocab.len(), all.len());

    let cache_dir = cfg.cache_dir.clone().unwrap_or_else(|| cfg.project_dir.join(&cfg.exp_name).join("cache"));
    let popts = PreprocessOptions::new(cfg.max_seq_len, Some(cache_dir));
    let mut data: IndexMap<String, TaskData> = IndexMap::new();
    for d in &all {
        let (train, s1) = preprocess(d, Split::Train, &vocab, &popts)?;
        let (val, s2) = preprocess(d, Split::Val, &vocab, &popts)?;
        log::info!("{}: {} train / {} val examples (cache {s1:?}/{s2:?})", d.name, train.examples.len(), val.examples.len());
        data.insert(d.name.clone(), TaskData { train, val });
    }

    let spec = encoder_spec(cfg)?;
    let base = ModelAssembly::build(&spec, &vocab, &all, classifier_kind(cfg)?, &mut RunRng::with_stream(cfg.seed, 0))?;
    log::info!("model: {} encoder and {} head parameters", base.params.count_scalars(crate::model::ENCODER_PREFIX), base.head_param_count());

    let events_path = dir.join("events.jsonl");
    let mut events = EventLog::open(&events_path).map_err(io_err(&events_path))?;
    if !opts.resume {
        events.truncate_to(0).map_err(io_err(&events_path))?;
    }
    let mut summary = RunSummary { run_dir: dir.clone(), phases: Vec::new(), eval: IndexMap::new() };
    let mut events_base = 0;
    let interrupt_for = |phase: &str| opts.interrupt.as_ref().filter(|(p, _)| p == phase).map(|(_, s)| *s);

    let mut base = base;
    if cfg.do_pretrain {
        let tasks: Vec<PhaseTask<'_>> = pretrain
            .iter()
            .map(|d| PhaseTask {
                desc: d,
                train: &data[&d.name].train,
                val: &data[&d.name].val,
                batch_size: task_batch_size(cfg, &d.name),
                max_epochs: task_max_epochs(cfg, &d.name),
            })
            .collect();
        let mut ctx = PhaseContext {
            phase: INTERMEDIATE_PHASE.into(),
            ckpt: CheckpointDir::for_phase(&dir, INTERMEDIATE_PHASE),
            seed: cfg.seed,
            stream: 1,
            config_hash: hash.clone(),
            events: &mut events,
            resume: opts.resume,
            events_base,
            interrupt_at: interrupt_for(INTERMEDIATE_PHASE),
        };
        let outcome = train_phase(&mut base, &tasks, &phase_settings(cfg, None)?, &mut ctx)?;
        events_base = outcome.events_written;
        summary.phases.push((INTERMEDIATE_PHASE.to_string(), outcome));
    }

    let paradigm: TransferParadigm = setting("transfer_paradigm", &cfg.transfer_paradigm)?;
    if cfg.do_target_task_training {
        for (i, d) in targets.iter().enumerate() {
            let phase = target_phase(&d.name);
            let mut model = base.clone();
            model.set_paradigm(paradigm);
            let task = PhaseTask {
                desc: d,
                train: &data[&d.name].train,
                val: &data[&d.name].val,
                batch_size: task_batch_size(cfg, &d.name),
                max_epochs: task_max_epochs(cfg, &d.name),
            };
            let mut ctx = PhaseContext {
                phase: phase.clone(),
                ckpt: CheckpointDir::for_phase(&dir, &phase),
                seed: cfg.seed,
                stream: 2 + i as u64,
                config_hash: hash.clone(),
                events: &mut events,
                resume: opts.resume,
                events_base,
                interrupt_at: interrupt_for(&phase),
            };
            let outcome = train_phase(&mut model, &[task], &phase_settings(cfg, Some(&d.name))?, &mut ctx)?;
            events_base = outcome.events_written;
            summary.phases.push((phase, outcome));
        }
    }

    if cfg.do_full_eval {
        events.truncate_to(events_base).map_err(io_err(&events_path))?;
        let mode = if cfg.write_strict_glue_format { PredictionMode::Strict } else { PredictionMode::Raw };
        for d in &targets {
            let metrics = evaluate_task(cfg, &dir, &base, d, &vocab, &popts, &data[&d.name], mode, &mut events)?;
            summary.eval.insert(d.name.clone(), metrics);
        }
    }

    let completion = Completion::now();
    write_file(&dir.join("completed.json"), &completion.to_json())?;
    log::info!("run complete");
    Ok(summary)
}

/// Best checkpoint for evaluating `task`: its target phase, else the
/// intermediate phase.
fn evaluation_checkpoint(cfg: &RunConfig, dir: &Path, task: &str) -> Result<crate::trainer::Checkpoint, RunError> {
    let target = CheckpointDir::for_phase(dir, &target_phase(task));
    if cfg.do_target_task_training {
        return Ok(target.load(Slot::Best)?);
    }
    let inter = CheckpointDir::for_phase(dir, INTERMEDIATE_PHASE);
    if cfg.do_pretrain {
        return Ok(inter.load(Slot::Best)?);
    }
    Err(TrainError::MissingCheckpoint(target.path(Slot::Best)).into())
}

#[allow(clippy::too_many_arguments)]
fn evaluate_task(
    cfg: &RunConfig,
    dir: &Path,
    base: &ModelAssembly,
    desc: &TaskDescriptor,
    vocab: &Vocabulary,
    popts: &PreprocessOptions,
    data: &TaskData,
    mode: PredictionMode,
    events: &mut EventLog,
) -> Result<BTreeMap<String, f64>, RunError> {
    let ckpt = evaluation_checkpoint(cfg, dir, &desc.name)?;
    let step = ckpt.state.tracker.best_step.unwrap_or(ckpt.state.global_step);
    let model = ModelAssembly { arch: base.arch.clone(), params: ckpt.params, paradigm: base.paradigm };
    let batch_size = task_batch_size(cfg, &desc.name);
    let mut metrics = BTreeMap::new();
    let mut new_events = Vec::new();

    let mut splits = vec![Split::Val];
    for name in &cfg.write_preds {
        let split: Split = name.parse().map_err(|message| RunError::Setting { key: "write_preds".into(), message })?;
        if !splits.contains(&split) {
            splits.push(split);
        }
    }
    for split in splits {
        let test_set;
        let set = match split {
            Split::Train => &data.train,
            Split::Val => &data.val,
            Split::Test => {
                test_set = preprocess(desc, Split::Test, vocab, popts)?.0;
                &test_set
            }
        };
        let preds = predict(&model, desc, set, batch_size)?;
        if let Some(report) = split_metrics(desc, set, &preds)? {
            for (name, value) in report.values {
                let key = format!("{split}_{name}");
                new_events.push(MetricEvent::new(EVAL_PHASE, step, &desc.name, &key, value));
                metrics.insert(key, value);
            }
        }
        if cfg.write_preds.iter().any(|s| s.parse::<Split>().ok() == Some(split)) {
            let raw = load_examples(desc, split)?;
            let text = format_predictions(desc, &raw, &preds.outcomes, &preds.scores, mode)?;
            let path = dir.join("preds").join(format!("{}_{}.{}", desc.name, split, mode.extension()));
            write_file(&path, &text)?;
        }
    }
    let events_path = events.path().to_path_buf();
    events.emit(&mut new_events).map_err(io_err(&events_path))?;
    log::info!("{} evaluated: {}", desc.name, metrics.iter().map(|(k, v)| format!("{k}={v:.4}")).collect::<Vec<_>>().join(", "));
    Ok(metrics)
}
