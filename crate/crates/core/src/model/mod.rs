//! Sentence encoders, task heads, and the assembly that ties one shared
//! encoder to many heads.

mod batch;
mod encoder;
mod heads;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use indexmap::IndexMap;
use thiserror::Error;

use crate::corpus::{Outcome, TaskDescriptor};
use crate::pipeline::Vocabulary;
use crate::tensor::{Graph, ParamStore, RunRng, TensorError, Var};

pub use batch::{gold_outcome, Batch};
pub use heads::{ClassifierKind, HeadKind, HeadSpec};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{}:{line}: expected {expected} values, found {found}", path.display())]
    EmbeddingDim { path: PathBuf, line: usize, expected: usize, found: usize },
    #[error("cannot read embedding file {}: {source}", path.display())]
    EmbeddingIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    EmbeddingParse { path: PathBuf, line: usize, message: String },
    #[error("head {key} is shared by incompatible tasks: {first} vs {second}")]
    IncompatibleHead { key: String, first: String, second: String },
    #[error("task {0} has no head in this model")]
    UnknownTask(String),
    #[error("invalid encoder spec: {0}")]
    InvalidSpec(String),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("target does not fit task {0}")]
    TargetKind(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputModule {
    /// Uniform ±0.05 embeddings trained from scratch.
    Scratch,
    /// `token v1 ... vd` text file; rows for tokens missing from it are random.
    EmbeddingFile(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SentEnc {
    None,
    BowFf,
    Rnn,
}

impl FromStr for SentEnc {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" | "null" => Ok(SentEnc::None),
            "bow_ff" | "bow" => Ok(SentEnc::BowFf),
            "rnn" => Ok(SentEnc::Rnn),
            other => Err(format!("unknown sent_enc {other:?} (expected none, bow_ff, rnn)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Mean,
    Max,
    First,
}

impl FromStr for Pooling {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "max" => Ok(Pooling::Max),
            "first" => Ok(Pooling::First),
            other => Err(format!("unknown pooling {other:?} (expected mean, max, first)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferParadigm {
    Finetune,
    Frozen,
}

impl FromStr for TransferParadigm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "finetune" => Ok(TransferParadigm::Finetune),
            "frozen" => Ok(TransferParadigm::Frozen),
            other => Err(format!("unknown transfer_paradigm {other:?} (expected finetune, frozen)")),
        }
    }
}

impl fmt::Display for TransferParadigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransferParadigm::Finetune => "finetune",
            TransferParadigm::Frozen => "frozen",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    pub input_module: InputModule,
    pub embedding_dim: usize,
    pub sent_enc: SentEnc,
    pub hidden_dim: usize,
    pub bidirectional: bool,
    pub pooling: Pooling,
    /// Applied to embeddings and to encoder outputs in train mode.
    pub dropout: f64,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec {
            input_module: InputModule::Scratch,
            embedding_dim: 32,
            sent_enc: SentEnc::None,
            hidden_dim: 32,
            bidirectional: true,
            pooling: Pooling::Mean,
            dropout: 0.0,
        }
    }
}

impl EncoderSpec {
    pub fn output_dim(&self) -> usize {
        match self.sent_enc {
            SentEnc::None => self.embedding_dim,
            SentEnc::BowFf => self.hidden_dim,
            SentEnc::Rnn if self.bidirectional => 2 * self.hidden_dim,
            SentEnc::Rnn => self.hidden_dim,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.embedding_dim == 0 {
            return Err(ModelError::InvalidSpec("embedding_dim must be at least 1".into()));
        }
        if self.sent_enc != SentEnc::None && self.hidden_dim == 0 {
            return Err(ModelError::InvalidSpec("hidden_dim must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidSpec(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Architecture: encoder spec plus heads, without parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub encoder: EncoderSpec,
    pub vocab_size: usize,
    pub heads: IndexMap<String, HeadSpec>,
    /// Task name to head key.
    pub task_heads: IndexMap<String, String>,
}

/// A shared encoder with one head per distinct head key, and the parameter
/// values. Cloning is a deep copy.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelAssembly {
    pub arch: Architecture,
    pub params: ParamStore,
    pub paradigm: TransferParadigm,
}

/// Predictions for a batch, plus the loss when every example has a target.
pub struct TaskOutput {
    pub loss: Option<Var>,
    pub predictions: Vec<Outcome>,
    /// Per example: class or choice probabilities, the regression value, or
    /// for tagging the probability of each predicted tag.
    pub scores: Vec<Vec<f64>>,
}

pub const ENCODER_PREFIX: &str = "encoder.";
pub const HEAD_PREFIX: &str = "head.";

impl ModelAssembly {
    /// Builds the encoder and one head per distinct head key of `tasks`.
    pub fn build(
        spec: &EncoderSpec,
        vocab: &Vocabulary,
        tasks: &[&TaskDescriptor],
        classifier: ClassifierKind,
        rng: &mut RunRng,
    ) -> Result<Self, ModelError> {
        spec.validate()?;
        let mut params = ParamStore::new();
        encoder::init_encoder(spec, vocab, &mut params, rng)?;
        let mut arch = Architecture {
            encoder: spec.clone(),
            vocab_size: vocab.len(),
            heads: IndexMap::new(),
            task_heads: IndexMap::new(),
        };
        heads::build_heads(&mut arch, tasks, classifier, &mut params, rng)?;
        Ok(ModelAssembly { arch, params, paradigm: TransferParadigm::Finetune })
    }

    /// Frozen excludes encoder parameters from gradients and updates; heads
    /// stay trainable.
    pub fn set_paradigm(&mut self, paradigm: TransferParadigm) {
        self.paradigm = paradigm;
        self.params.set_requires_grad(|name| paradigm == TransferParadigm::Finetune || !name.starts_with(ENCODER_PREFIX));
    }

    pub fn head_param_count(&self) -> usize {
        self.params.count_scalars(HEAD_PREFIX)
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        task: &TaskDescriptor,
        batch: &Batch,
        rng: &mut RunRng,
    ) -> Result<TaskOutput, ModelError> {
        forward_with(&self.arch, &self.params, g, task, batch, rng)
    }
}

/// Forward pass against an explicit parameter store.
pub fn forward_with(
    arch: &Architecture,
    store: &ParamStore,
    g: &mut Graph,
    task: &TaskDescriptor,
    batch: &Batch,
    rng: &mut RunRng,
) -> Result<TaskOutput, ModelError> {
    let key = arch.task_heads.get(&task.name).ok_or_else(|| ModelError::UnknownTask(task.name.clone()))?;
    let head = &arch.heads[key];
    heads::run_head(arch, head, store, g, task, batch, rng)
}

pub use encoder::{encode_sentences, encode_tokens};
