//! Sealed training checkpoints: parameters, optimizer state, and loop state.

use std::path::{Path, PathBuf};

use super::plateau::{PlateauConfig, PlateauTracker, StopReason};
use super::TrainError;
use crate::codec::{self, DecodeError, Reader, Writer};
use crate::tensor::{OptimizerState, ParamStore, RngSnapshot};

const MAGIC: &[u8; 8] = b"PKCKPT\0\0";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Position of one task's batch cycling.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CursorState {
    /// Completed passes over the training split.
    pub epoch: u32,
    pub pos: usize,
    /// Example order of the current pass; empty before it starts.
    pub order: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    /// `intermediate` or `target:<task>`.
    pub phase: String,
    pub global_step: u64,
    pub task_steps: Vec<u64>,
    pub cursors: Vec<CursorState>,
    pub tracker: PlateauTracker,
    pub last_val_step: Option<u64>,
    pub rng: RngSnapshot,
    /// Training loss sums and batch counts since the last validation.
    pub loss_sums: Vec<f64>,
    pub loss_counts: Vec<u64>,
    /// Events in the run's stream when this state was saved.
    pub events_written: u64,
    pub finished: bool,
    pub stop_reason: Option<StopReason>,
}

impl TrainerState {
    fn encode(&self, w: &mut Writer) {
        w.str(&self.phase);
        w.u64(self.global_step);
        w.len(self.task_steps.len());
        for &s in &self.task_steps {
            w.u64(s);
        }
        w.len(self.cursors.len());
        for c in &self.cursors {
            w.u32(c.epoch);
            w.len(c.pos);
            w.u32s(&c.order);
        }
        let t = &self.tracker;
        w.u32(t.config.patience);
        w.u32(t.config.lr_patience);
        w.f64(t.config.lr_decay_factor);
        w.f64(t.config.min_lr);
        w.u32(t.config.max_vals);
        w.f64(t.lr);
        w.opt(t.best, Writer::f64);
        w.opt(t.best_step, Writer::u64);
        w.u32(t.patience_count);
        w.u32(t.lr_patience_count);
        w.u32(t.val_count);
        w.opt(self.last_val_step, Writer::u64);
        w.bytes(&self.rng.seed);
        w.u64(self.rng.stream);
        w.u128(self.rng.word_pos);
        w.f64s(&self.loss_sums);
        w.len(self.loss_counts.len());
        for &c in &self.loss_counts {
            w.u64(c);
        }
        w.u64(self.events_written);
        w.u8(self.finished as u8);
        w.opt(self.stop_reason.map(StopReason::code), Writer::u8);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let phase = r.str()?;
        let global_step = r.u64()?;
        let n = r.len()?;
        let task_steps = (0..n).map(|_| r.u64()).collect::<Result<_, _>>()?;
        let n = r.len()?;
        let mut cursors = Vec::with_capacity(n);
        for _ in 0..n {
            cursors.push(CursorState { epoch: r.u32()?, pos: r.len()?, order: r.u32s()? });
        }
        let config = PlateauConfig {
            patience: r.u32()?,
            lr_patience: r.u32()?,
            lr_decay_factor: r.f64()?,
            min_lr: r.f64()?,
            max_vals: r.u32()?,
        };
        let mut tracker = PlateauTracker::new(config, r.f64()?);
        tracker.best = r.opt(Reader::f64)?;
        tracker.best_step = r.opt(Reader::u64)?;
        tracker.patience_count = r.u32()?;
        tracker.lr_patience_count = r.u32()?;
        tracker.val_count = r.u32()?;
        let last_val_step = r.opt(Reader::u64)?;
        let seed: [u8; 32] = r.bytes()?.try_into().map_err(|_| DecodeError::Invalid("rng seed must be 32 bytes".into()))?;
        let rng = RngSnapshot { seed, stream: r.u64()?, word_pos: r.u128()? };
        let loss_sums = r.f64s()?;
        let n = r.len()?;
        let loss_counts = (0..n).map(|_| r.u64()).collect::<Result<_, _>>()?;
        let events_written = r.u64()?;
        let finished = r.u8()? != 0;
        let stop_reason = match r.opt(Reader::u8)? {
            None => None,
            Some(code) => Some(StopReason::from_code(code).ok_or_else(|| DecodeError::Invalid(format!("stop reason {code}")))?),
        };
        Ok(TrainerState {
            phase,
            global_step,
            task_steps,
            cursors,
            tracker,
            last_val_step,
            rng,
            loss_sums,
            loss_counts,
            events_written,
            finished,
            stop_reason,
        })
    }
}

/// Everything needed to continue a phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Hash of the resolved configuration that produced the run.
    pub config_hash: String,
    pub state: TrainerState,
    pub params: ParamStore,
    pub optimizer: OptimizerState,
}

/// Serialized checkpoint built from borrowed parts.
pub fn checkpoint_bytes(config_hash: &str, state: &TrainerState, params: &ParamStore, optimizer: &OptimizerState) -> Vec<u8> {
    let mut w = Writer::new();
    w.str(config_hash);
    state.encode(&mut w);
    params.encode(&mut w);
    optimizer.encode(&mut w);
    codec::seal(MAGIC, CHECKPOINT_FORMAT_VERSION, &w.into_bytes())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        checkpoint_bytes(&self.config_hash, &self.state, &self.params, &self.optimizer)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let payload = codec::unseal(bytes, MAGIC, CHECKPOINT_FORMAT_VERSION)?;
        let mut r = Reader::new(payload);
        let config_hash = r.str()?;
        let state = TrainerState::decode(&mut r)?;
        let params = ParamStore::decode(&mut r)?;
        let optimizer = OptimizerState::decode(&mut r)?;
        r.finish()?;
        Ok(Checkpoint { config_hash, state, params, optimizer })
    }
}

/// `latest` and `best` checkpoint files of one phase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointDir {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Latest,
    Best,
}

impl CheckpointDir {
    /// `<run_dir>/ckpt/<phase dir>`; target phases use `target_<task>`.
    pub fn for_phase(run_dir: &Path, phase: &str) -> Self {
        CheckpointDir { dir: run_dir.join("ckpt").join(phase.replace(':', "_")) }
    }

    pub fn path(&self, slot: Slot) -> PathBuf {
        self.dir.join(match slot {
            Slot::Latest => "latest.ckpt",
            Slot::Best => "best.ckpt",
        })
    }

    pub fn exists(&self, slot: Slot) -> bool {
        self.path(slot).is_file()
    }

    /// Writes the checkpoint and its `.sha256` sidecar, each atomically.
    pub fn save_bytes(&self, slot: Slot, bytes: &[u8]) -> Result<(), TrainError> {
        let path = self.path(slot);
        let io = |source| TrainError::Io { path: path.clone(), source };
        codec::write_atomic(&path, bytes).map_err(io)?;
        let mut sidecar = path.clone().into_os_string();
        sidecar.push(".sha256");
        let sidecar = PathBuf::from(sidecar);
        codec::write_atomic(&sidecar, format!("{}\n", codec::sha256_hex(bytes)).as_bytes())
            .map_err(|source| TrainError::Io { path: sidecar.clone(), source })
    }

    pub fn save(&self, slot: Slot, ckpt: &Checkpoint) -> Result<(), TrainError> {
        self.save_bytes(slot, &ckpt.to_bytes())
    }

    pub fn load(&self, slot: Slot) -> Result<Checkpoint, TrainError> {
        let path = self.path(slot);
        if !path.is_file() {
            return Err(TrainError::MissingCheckpoint(path));
        }
        let bytes = std::fs::read(&path).map_err(|source| TrainError::Io { path: path.clone(), source })?;
        Checkpoint::from_bytes(&bytes).map_err(|source| TrainError::Decode { path, source })
    }
}
