//! Tokenization, vocabulary construction, indexing, and the preprocessing
//! cache.

mod cache;
mod vocab;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::codec::sha256_hex;
use crate::corpus::{load_examples, CorpusError, RawExample, Split, Target, TaskDescriptor, TaskType};

pub use cache::{cache_load, cache_store, CacheStatus};
pub use vocab::{build_vocab, build_vocab_for_tasks, Vocabulary, CLS, PAD, SEP, SPECIAL_TOKENS, UNK};

/// Revision of the tokenization rule below. Part of every cache fingerprint.
pub const TOKENIZER_VERSION: u32 = 1;

/// Revision of the cached dataset layout. Part of every cache fingerprint.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no tokens in any training split")]
    EmptyCorpus,
    #[error("max_seq_len must be at least 3, got {0}")]
    MaxSeqLen(usize),
    #[error("task {task}: unknown label {label:?}")]
    UnknownLabel { task: String, label: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Lowercases, splits on whitespace, and splits each chunk into maximal
/// alphanumeric runs with every other character as its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut out = Vec::new();
    let mut run = String::new();
    for c in lower.chars() {
        if c.is_alphanumeric() {
            run.push(c);
            continue;
        }
        if !run.is_empty() {
            out.push(std::mem::take(&mut run));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !run.is_empty() {
        out.push(run);
    }
    out
}

/// Tagging input is pre-tokenized: one token per whitespace-separated word,
/// lowercased, so tags stay aligned.
pub fn tagging_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Token sequences of every text field of an example, as the indexer sees them.
pub fn example_tokens(task_type: TaskType, ex: &RawExample) -> Vec<Vec<String>> {
    if task_type == TaskType::Tagging {
        return vec![tagging_tokens(&ex.text_a)];
    }
    let mut fields = vec![tokenize(&ex.text_a)];
    if let Some(b) = &ex.text_b {
        fields.push(tokenize(b));
    }
    if let Some(choices) = &ex.choices {
        fields.extend(choices.iter().map(|c| tokenize(c)));
    }
    fields
}

#[derive(Debug, Clone, PartialEq)]
pub enum IndexedTarget {
    Label(u32),
    Value(f64),
    Choice(u32),
    Tags(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexedExample {
    /// One sequence for single and pair inputs, one per choice for multiple
    /// choice. Each starts with CLS and ends with SEP.
    pub sequences: Vec<Vec<u32>>,
    pub target: Option<IndexedTarget>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexedDataset {
    pub task: String,
    pub split: Split,
    pub fingerprint: String,
    pub max_seq_len: usize,
    pub examples: Vec<IndexedExample>,
}

/// `[CLS] a [SEP] (b [SEP])`, cut from the right to `max_len` with the final
/// SEP kept. Returns the sequence and how many tokens of `a` survived.
fn assemble(vocab: &Vocabulary, a: &[String], b: Option<&[String]>, max_len: usize) -> (Vec<u32>, usize) {
    let mut seq = Vec::with_capacity(a.len() + b.map_or(0, <[_]>::len) + 3);
    seq.push(CLS);
    seq.extend(a.iter().map(|t| vocab.index_of(t)));
    seq.push(SEP);
    if let Some(b) = b {
        seq.extend(b.iter().map(|t| vocab.index_of(t)));
        seq.push(SEP);
    }
    if seq.len() > max_len {
        seq.truncate(max_len - 1);
        seq.push(SEP);
    }
    let kept_a = a.len().min(max_len - 2);
    (seq, kept_a)
}

pub fn index_examples(
    desc: &TaskDescriptor,
    examples: &[RawExample],
    vocab: &Vocabulary,
    max_seq_len: usize,
) -> Result<Vec<IndexedExample>, PipelineError> {
    if max_seq_len < 3 {
        return Err(PipelineError::MaxSeqLen(max_seq_len));
    }
    let label = |l: &str| {
        desc.label_index(l)
            .map(|i| i as u32)
            .ok_or_else(|| PipelineError::UnknownLabel { task: desc.name.clone(), label: l.to_string() })
    };
    examples
        .iter()
        .map(|ex| {
            let fields = example_tokens(desc.task_type, ex);
            let (sequences, kept) = match desc.task_type {
                TaskType::MultipleChoice => {
                    let seqs = fields[1..].iter().map(|c| assemble(vocab, &fields[0], Some(c), max_seq_len).0).collect();
                    (seqs, 0)
                }
                _ => {
                    let (seq, kept) = assemble(vocab, &fields[0], fields.get(1).map(Vec::as_slice), max_seq_len);
                    (vec![seq], kept)
                }
            };
            let target = match &ex.target {
                None => None,
                Some(Target::Label(l)) => Some(IndexedTarget::Label(label(l)?)),
                Some(Target::Value(v)) => Some(IndexedTarget::Value(*v)),
                Some(Target::Choice(c)) => Some(IndexedTarget::Choice(*c as u32)),
                Some(Target::Tags(tags)) => {
                    Some(IndexedTarget::Tags(tags[..kept].iter().map(|t| label(t)).collect::<Result<_, _>>()?))
                }
            };
            Ok(IndexedExample { sequences, target })
        })
        .collect()
}

/// Everything a cached dataset depends on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FingerprintInputs {
    pub task: String,
    pub task_type: TaskType,
    pub split: Split,
    pub raw_hash: String,
    pub tokenizer_version: u32,
    pub vocab_hash: String,
    pub max_seq_len: usize,
    pub labels: Vec<String>,
    pub format_version: u32,
}

impl FingerprintInputs {
    pub fn describe(&self) -> String {
        format!(
            "task = {}\ntask_type = {}\nsplit = {}\nraw_hash = {}\ntokenizer_version = {}\nvocab_hash = {}\nmax_seq_len = {}\nlabels = {}\nformat_version = {}\n",
            self.task,
            self.task_type,
            self.split,
            self.raw_hash,
            self.tokenizer_version,
            self.vocab_hash,
            self.max_seq_len,
            self.labels.join(","),
            self.format_version
        )
    }

    pub fn fingerprint(&self) -> String {
        sha256_hex(self.describe().as_bytes())
    }
}

#[derive(Debug, Clone)]
pub struct PreprocessOptions {
    pub max_seq_len: usize,
    pub tokenizer_version: u32,
    pub cache_dir: Option<PathBuf>,
}

impl PreprocessOptions {
    pub fn new(max_seq_len: usize, cache_dir: Option<PathBuf>) -> Self {
        PreprocessOptions { max_seq_len, tokenizer_version: TOKENIZER_VERSION, cache_dir }
    }
}

fn read_raw(path: &Path) -> Result<Vec<u8>, PipelineError> {
    if !path.is_file() {
        return Err(CorpusError::MissingFile(path.to_path_buf()).into());
    }
    std::fs::read(path).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })
}

/// Loads, tokenizes, and indexes one split, consulting the cache when one is
/// configured. The result is identical whether or not the cache is hit.
pub fn preprocess(
    desc: &TaskDescriptor,
    split: Split,
    vocab: &Vocabulary,
    opts: &PreprocessOptions,
) -> Result<(IndexedDataset, CacheStatus), PipelineError> {
    let raw = read_raw(desc.data_paths.get(split))?;
    let inputs = FingerprintInputs {
        task: desc.name.clone(),
        task_type: desc.task_type,
        split,
        raw_hash: sha256_hex(&raw),
        tokenizer_version: opts.tokenizer_version,
        vocab_hash: vocab.hash(),
        max_seq_len: opts.max_seq_len,
        labels: desc.labels.clone(),
        format_version: FORMAT_VERSION,
    };
    let fingerprint = inputs.fingerprint();
    if let Some(dir) = &opts.cache_dir {
        if let Some(ds) = cache_load(&fingerprint, dir) {
            return Ok((ds, CacheStatus::Hit));
        }
    }
    let examples = load_examples(desc, split)?;
    let dataset = IndexedDataset {
        task: desc.name.clone(),
        split,
        fingerprint,
        max_seq_len: opts.max_seq_len,
        examples: index_examples(desc, &examples, vocab, opts.max_seq_len)?,
    };
    match &opts.cache_dir {
        Some(dir) => {
            cache_store(&dataset, &inputs.describe(), dir)?;
            Ok((dataset, CacheStatus::Miss))
        }
        None => Ok((dataset, CacheStatus::Disabled)),
    }
}
