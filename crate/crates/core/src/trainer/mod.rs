//! Training phases: multitask sampling, gradient accumulation, periodic
//! validation with early stopping and plateau decay, and resumable
//! checkpoints.

mod checkpoint;
mod plateau;
mod sampler;

use std::path::PathBuf;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::codec::DecodeError;
use crate::corpus::{compute_metrics, CorpusError, MetricReport, Outcome, TaskDescriptor};
use crate::model::{gold_outcome, Batch, ModelAssembly, ModelError};
use crate::pipeline::IndexedDataset;
use crate::runner::events::{EventLog, MetricEvent, AGGREGATE};
use crate::tensor::{Graph, OptimHyper, OptimizerKind, OptimizerState, RunRng, TensorError};

pub use checkpoint::{checkpoint_bytes, Checkpoint, CheckpointDir, CursorState, Slot, TrainerState, CHECKPOINT_FORMAT_VERSION};
pub use plateau::{PlateauConfig, PlateauTracker, StopReason, Verdict};
pub use sampler::{sampling_weights, SamplingMethod, TaskSampler, TaskSize};

pub const INTERMEDIATE_PHASE: &str = "intermediate";

pub fn target_phase(task: &str) -> String {
    format!("target:{task}")
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt checkpoint {}: {source}", path.display())]
    Decode {
        path: PathBuf,
        #[source]
        source: DecodeError,
    },
    #[error("non-finite loss on task {task} at step {step}")]
    NonFiniteLoss { task: String, step: u64 },
    #[error("no tasks to train")]
    EmptyTaskSet,
    #[error("checkpoint was written under config {found}, current config is {expected}")]
    ConfigMismatch { expected: String, found: String },
    #[error("missing checkpoint {}", .0.display())]
    MissingCheckpoint(PathBuf),
    #[error("{split} split of task {task} has examples without targets")]
    Unlabelled { task: String, split: String },
    #[error("interrupted in phase {phase} after step {step}")]
    Interrupted { phase: String, step: u64 },
}

/// One task taking part in a phase.
#[derive(Debug, Clone, Copy)]
pub struct PhaseTask<'a> {
    pub desc: &'a TaskDescriptor,
    pub train: &'a IndexedDataset,
    pub val: &'a IndexedDataset,
    pub batch_size: usize,
    /// Cap on full passes over the training split.
    pub max_epochs: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSettings {
    pub optimizer: OptimizerKind,
    pub hyper: OptimHyper,
    pub lr: f64,
    pub plateau: PlateauConfig,
    /// Optimizer steps between validations.
    pub val_interval: u64,
    pub accumulation_steps: usize,
    pub sampling: SamplingMethod,
    pub max_steps: Option<u64>,
}

/// Where a phase writes and how it is seeded.
pub struct PhaseContext<'a> {
    pub phase: String,
    pub ckpt: CheckpointDir,
    pub seed: u64,
    pub stream: u64,
    pub config_hash: String,
    pub events: &'a mut EventLog,
    /// Continue from the phase's latest checkpoint when one exists.
    pub resume: bool,
    /// Events preceding this phase. A phase that starts without a checkpoint
    /// drops anything written after them.
    pub events_base: u64,
    /// Abort with [`TrainError::Interrupted`] right after this step.
    pub interrupt_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOutcome {
    pub best_metric: Option<f64>,
    pub best_step: Option<u64>,
    pub steps: u64,
    pub validations: u32,
    pub stop_reason: Option<StopReason>,
    /// Events in the run's stream when the phase finished.
    pub events_written: u64,
}

impl PhaseOutcome {
    fn from_state(state: &TrainerState) -> Self {
        PhaseOutcome {
            best_metric: state.tracker.best,
            best_step: state.tracker.best_step,
            steps: state.global_step,
            validations: state.tracker.val_count,
            stop_reason: state.stop_reason,
            events_written: state.events_written,
        }
    }
}

/// Model outputs over a whole split, in example order.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub outcomes: Vec<Outcome>,
    pub scores: Vec<Vec<f64>>,
}

/// Runs `model` without dropout over `data` in batches of `batch_size`.
pub fn predict(model: &ModelAssembly, desc: &TaskDescriptor, data: &IndexedDataset, batch_size: usize) -> Result<Predictions, TrainError> {
    let mut rng = RunRng::seed(0);
    let mut out = Predictions { outcomes: Vec::with_capacity(data.examples.len()), scores: Vec::with_capacity(data.examples.len()) };
    for chunk in data.examples.chunks(batch_size.max(1)) {
        let refs: Vec<_> = chunk.iter().collect();
        let batch = Batch::new(&refs)?;
        let mut g = Graph::new(false);
        let res = model.forward(&mut g, desc, &batch, &mut rng)?;
        out.outcomes.extend(res.predictions);
        out.scores.extend(res.scores);
    }
    Ok(out)
}

/// Metrics of `preds` against the split's targets; `None` when any target
/// is missing.
pub fn split_metrics(desc: &TaskDescriptor, data: &IndexedDataset, preds: &Predictions) -> Result<Option<MetricReport>, TrainError> {
    let golds: Option<Vec<Outcome>> = data.examples.iter().map(|e| e.target.as_ref().map(gold_outcome)).collect();
    match golds {
        Some(golds) => Ok(Some(compute_metrics(desc, &preds.outcomes, &golds)?)),
        None => Ok(None),
    }
}

/// One optimizer step over `micro` batches: each loss is scaled by `1/k`,
/// gradients accumulate, then a single update is applied. Returns the
/// unscaled micro-batch losses.
pub fn accumulate_step(
    model: &mut ModelAssembly,
    optimizer: &mut OptimizerState,
    micro: &[(&TaskDescriptor, &Batch)],
    k: usize,
    rng: &mut RunRng,
) -> Result<Vec<f64>, TrainError> {
    let scale = 1.0 / k.max(1) as f64;
    let mut losses = Vec::with_capacity(micro.len());
    model.params.zero_grads();
    for (desc, batch) in micro {
        let mut g = Graph::new(true);
        let out = model.forward(&mut g, desc, batch, rng)?;
        let loss = out.loss.ok_or_else(|| TrainError::Unlabelled { task: desc.name.clone(), split: "train".into() })?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(TrainError::NonFiniteLoss { task: desc.name.clone(), step: optimizer.step + 1 });
        }
        let scaled = g.scale(loss, scale);
        g.backward(scaled, &mut model.params)?;
        losses.push(value);
    }
    optimizer.step(&mut model.params)?;
    model.params.zero_grads();
    Ok(losses)
}

/// Next batch of example indices; reshuffles at the start of every pass.
fn next_batch(cursor: &mut CursorState, n: usize, batch_size: usize, rng: &mut RunRng) -> Vec<usize> {
    if cursor.order.is_empty() {
        cursor.order = (0..n as u32).collect();
        cursor.order.shuffle(rng);
        cursor.pos = 0;
    }
    let end = (cursor.pos + batch_size.max(1)).min(n);
    let idx = cursor.order[cursor.pos..end].iter().map(|&i| i as usize).collect();
    cursor.pos = end;
    if cursor.pos >= n {
        cursor.epoch += 1;
        cursor.pos = 0;
        cursor.order.clear();
    }
    idx
}

fn fresh_state(phase: &str, n: usize, tracker: PlateauTracker, rng: &RunRng) -> TrainerState {
    TrainerState {
        phase: phase.to_string(),
        global_step: 0,
        task_steps: vec![0; n],
        cursors: vec![CursorState::default(); n],
        tracker,
        last_val_step: None,
        rng: rng.snapshot(),
        loss_sums: vec![0.0; n],
        loss_counts: vec![0; n],
        events_written: 0,
        finished: false,
        stop_reason: None,
    }
}

struct Loop<'a, 'b> {
    tasks: &'a [PhaseTask<'a>],
    ctx: &'a mut PhaseContext<'b>,
    state: TrainerState,
    optimizer: OptimizerState,
}

impl Loop<'_, '_> {
    fn events_err(&self, source: std::io::Error) -> TrainError {
        TrainError::Io { path: self.ctx.events.path().to_path_buf(), source }
    }

    fn bytes(&self, model: &ModelAssembly) -> Vec<u8> {
        checkpoint_bytes(&self.ctx.config_hash, &self.state, &model.params, &self.optimizer)
    }

    /// Validates on every task, logs events, updates the plateau tracker,
    /// and writes checkpoints (best first, then latest).
    fn validate(&mut self, model: &ModelAssembly, rng: &RunRng) -> Result<Verdict, TrainError> {
        let step = self.state.global_step;
        let phase = self.ctx.phase.clone();
        let mut events = Vec::new();
        let mut primaries = Vec::with_capacity(self.tasks.len());
        for (i, task) in self.tasks.iter().enumerate() {
            let preds = predict(model, task.desc, task.val, task.batch_size)?;
            let report = split_metrics(task.desc, task.val, &preds)?
                .ok_or_else(|| TrainError::Unlabelled { task: task.desc.name.clone(), split: "val".into() })?;
            for (metric, &value) in &report.values {
                events.push(MetricEvent::new(&phase, step, &task.desc.name, metric, value));
            }
            primaries.push(report.primary_value());
            if self.state.loss_counts[i] > 0 {
                let mean = self.state.loss_sums[i] / self.state.loss_counts[i] as f64;
                events.push(MetricEvent::new(&phase, step, &task.desc.name, "train_loss", mean));
            }
            self.state.loss_sums[i] = 0.0;
            self.state.loss_counts[i] = 0;
        }
        let aggregate = primaries.iter().sum::<f64>() / primaries.len() as f64;
        events.push(MetricEvent::new(&phase, step, AGGREGATE, "primary_mean", aggregate));
        events.push(MetricEvent::new(&phase, step, AGGREGATE, "lr", self.optimizer.lr));
        let verdict = self.state.tracker.observe(aggregate, step);
        self.optimizer.lr = self.state.tracker.lr;
        self.state.last_val_step = Some(step);
        self.state.stop_reason = verdict.stop;
        self.ctx.events.emit(&mut events).map_err(|e| self.events_err(e))?;
        self.state.events_written = self.ctx.events.count();
        self.state.rng = rng.snapshot();
        log::info!(
            "{phase} step {step}: aggregate {aggregate:.4}{}{}",
            if verdict.improved { " (best)" } else { "" },
            if verdict.lr_decayed { format!(", lr -> {:.3e}", self.optimizer.lr) } else { String::new() }
        );
        let bytes = self.bytes(model);
        if verdict.improved {
            self.ctx.ckpt.save_bytes(Slot::Best, &bytes)?;
        }
        self.ctx.ckpt.save_bytes(Slot::Latest, &bytes)?;
        Ok(verdict)
    }
}

/// Trains `model` on `tasks` until a stopping rule fires, then loads the
/// best validated parameters into `model`.
pub fn train_phase(
    model: &mut ModelAssembly,
    tasks: &[PhaseTask<'_>],
    settings: &PhaseSettings,
    ctx: &mut PhaseContext<'_>,
) -> Result<PhaseOutcome, TrainError> {
    let sizes: Vec<TaskSize> = tasks.iter().map(|t| TaskSize { examples: t.train.examples.len(), batch_size: t.batch_size }).collect();
    let sampler = TaskSampler::new(settings.sampling, &sizes)?;
    let k = settings.accumulation_steps.max(1);

    let (state, optimizer) = if ctx.resume && ctx.ckpt.exists(Slot::Latest) {
        let ckpt = ctx.ckpt.load(Slot::Latest)?;
        if ckpt.config_hash != ctx.config_hash {
            return Err(TrainError::ConfigMismatch { expected: ctx.config_hash.clone(), found: ckpt.config_hash });
        }
        if ckpt.state.phase != ctx.phase || ckpt.state.cursors.len() != tasks.len() {
            return Err(TrainError::Decode {
                path: ctx.ckpt.path(Slot::Latest),
                source: DecodeError::Invalid(format!("checkpoint belongs to phase {}", ckpt.state.phase)),
            });
        }
        if !ckpt.state.finished {
            log::info!("resuming {} from step {}", ctx.phase, ckpt.state.global_step);
            ctx.events.truncate_to(ckpt.state.events_written).map_err(|source| TrainError::Io { path: ctx.events.path().to_path_buf(), source })?;
        }
        model.params = ckpt.params;
        model.set_paradigm(model.paradigm);
        (ckpt.state, ckpt.optimizer)
    } else {
        ctx.events.truncate_to(ctx.events_base).map_err(|source| TrainError::Io { path: ctx.events.path().to_path_buf(), source })?;
        let rng = RunRng::with_stream(ctx.seed, ctx.stream);
        let tracker = PlateauTracker::new(settings.plateau, settings.lr);
        let optimizer = OptimizerState::new(settings.optimizer, settings.lr, settings.hyper)?;
        (fresh_state(&ctx.phase, tasks.len(), tracker, &rng), optimizer)
    };

    let mut lp = Loop { tasks, ctx, state, optimizer };
    if !lp.state.finished {
        let mut rng = RunRng::restore(&lp.state.rng);
        let mut stop = None;
        while stop.is_none() {
            if settings.max_steps.is_some_and(|m| lp.state.global_step >= m) {
                stop = Some(StopReason::MaxSteps);
                break;
            }
            let mut picks = Vec::with_capacity(k);
            for _ in 0..k {
                let active: Vec<bool> =
                    tasks.iter().zip(&lp.state.cursors).map(|(t, c)| c.epoch < t.max_epochs && !t.train.examples.is_empty()).collect();
                let Some(t) = sampler.draw(&mut rng, &active) else { break };
                let idx = next_batch(&mut lp.state.cursors[t], tasks[t].train.examples.len(), tasks[t].batch_size, &mut rng);
                let examples: Vec<_> = idx.iter().map(|&i| &tasks[t].train.examples[i]).collect();
                picks.push((t, Batch::new(&examples)?));
            }
            if picks.is_empty() {
                stop = Some(StopReason::EpochsExhausted);
                break;
            }
            let micro: Vec<_> = picks.iter().map(|(t, b)| (tasks[*t].desc, b)).collect();
            let losses = accumulate_step(model, &mut lp.optimizer, &micro, k, &mut rng)?;
            lp.state.global_step += 1;
            for ((t, _), loss) in picks.iter().zip(losses) {
                lp.state.task_steps[*t] += 1;
                lp.state.loss_sums[*t] += loss;
                lp.state.loss_counts[*t] += 1;
            }
            if lp.ctx.interrupt_at == Some(lp.state.global_step) {
                return Err(TrainError::Interrupted { phase: lp.ctx.phase.clone(), step: lp.state.global_step });
            }
            if lp.state.global_step % settings.val_interval.max(1) == 0 {
                stop = lp.validate(model, &rng)?.stop;
            }
        }
        if lp.state.last_val_step != Some(lp.state.global_step) {
            lp.validate(model, &rng)?;
        }
        lp.state.stop_reason = stop;
        lp.state.finished = true;
        lp.state.rng = rng.snapshot();
        lp.state.events_written = lp.ctx.events.count();
        log::info!("{} finished after {} steps: {}", lp.ctx.phase, lp.state.global_step, stop.map_or("done".into(), |s| s.to_string()));
        let bytes = lp.bytes(model);
        if !lp.ctx.ckpt.exists(Slot::Best) {
            lp.ctx.ckpt.save_bytes(Slot::Best, &bytes)?;
        }
        lp.ctx.ckpt.save_bytes(Slot::Latest, &bytes)?;
    }
    let best = lp.ctx.ckpt.load(Slot::Best)?;
    model.params = best.params;
    model.set_paradigm(model.paradigm);
    Ok(PhaseOutcome::from_state(&lp.state))
}
