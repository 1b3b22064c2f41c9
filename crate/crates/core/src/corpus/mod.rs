//! Task registry, data loaders, metrics, and the synthetic task suite.

mod loader;
mod metrics;
mod synth;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use thiserror::Error;

use crate::confparse::{ConfigObject, ConfigValue};

pub use loader::{load_examples, write_examples};
pub use metrics::{accuracy, compute_metrics, macro_f1, mcc, pearson, spearman, MetricReport, Outcome};
pub use synth::{generate_synthetic_suite, SynthParams, SynthSuite, INTERMEDIATE_TASK, TARGET_TASK};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("task {0} is already registered")]
    DuplicateTask(String),
    #[error("task type {0} is not supported")]
    UnsupportedTaskType(String),
    #[error("unknown task type {0}")]
    UnknownTaskType(String),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("invalid task {task}: {message}")]
    InvalidDescriptor { task: String, message: String },
    #[error("missing data file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}:{line}: {message}", path.display())]
    MalformedRow { path: PathBuf, line: usize, message: String },
    #[error("{}:{line}: {tags} tags for {tokens} tokens", path.display())]
    TagMismatch { path: PathBuf, line: usize, tokens: usize, tags: usize },
    #[error("{what}: {left} predictions vs {right} gold values")]
    LengthMismatch { what: String, left: usize, right: usize },
    #[error("cannot compute metrics over empty input")]
    EmptyInput,
    #[error("prediction kind does not match task {0}")]
    KindMismatch(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskType {
    SingleClassification,
    PairClassification,
    Regression,
    Tagging,
    MultipleChoice,
}

const OUT_OF_SCOPE_TYPES: &[&str] = &[
    "sequence_generation",
    "masked_language_modeling",
    "masked_lm",
    "span_prediction",
    "span_classification",
    "ranking",
];

impl TaskType {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::SingleClassification => "single_classification",
            TaskType::PairClassification => "pair_classification",
            TaskType::Regression => "regression",
            TaskType::Tagging => "tagging",
            TaskType::MultipleChoice => "multiple_choice",
        }
    }

    pub fn is_classification(self) -> bool {
        matches!(self, TaskType::SingleClassification | TaskType::PairClassification)
    }

    fn file_extension(self) -> &'static str {
        match self {
            TaskType::Tagging => "conll",
            TaskType::MultipleChoice => "jsonl",
            _ => "tsv",
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskType {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "single_classification" | "classification" => TaskType::SingleClassification,
            "pair_classification" => TaskType::PairClassification,
            "regression" => TaskType::Regression,
            "tagging" => TaskType::Tagging,
            "multiple_choice" => TaskType::MultipleChoice,
            other if OUT_OF_SCOPE_TYPES.contains(&other) => {
                return Err(CorpusError::UnsupportedTaskType(other.to_string()))
            }
            other => return Err(CorpusError::UnknownTaskType(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "val" | "dev" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPaths {
    pub train: PathBuf,
    pub val: PathBuf,
    pub test: PathBuf,
}

impl DataPaths {
    pub fn get(&self, split: Split) -> &Path {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// `<dir>/<split>.<ext>` for each split.
    pub fn in_dir(dir: &Path, task_type: TaskType) -> Self {
        let ext = task_type.file_extension();
        DataPaths {
            train: dir.join(format!("train.{ext}")),
            val: dir.join(format!("val.{ext}")),
            test: dir.join(format!("test.{ext}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricSpec {
    /// Higher is better; drives early stopping.
    pub primary: &'static str,
    pub auxiliaries: Vec<&'static str>,
}

impl MetricSpec {
    pub fn for_type(task_type: TaskType) -> Self {
        match task_type {
            TaskType::SingleClassification | TaskType::PairClassification => {
                MetricSpec { primary: "accuracy", auxiliaries: vec!["mcc", "macro_f1"] }
            }
            TaskType::Regression => MetricSpec { primary: "pearson", auxiliaries: vec!["spearman"] },
            TaskType::Tagging => MetricSpec { primary: "token_accuracy", auxiliaries: vec![] },
            TaskType::MultipleChoice => MetricSpec { primary: "accuracy", auxiliaries: vec![] },
        }
    }
}

/// A registered task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDescriptor {
    pub name: String,
    pub task_type: TaskType,
    pub data_paths: DataPaths,
    pub metric_spec: MetricSpec,
    /// Class labels for classification, tag inventory for tagging.
    pub labels: Vec<String>,
    pub num_choices: Option<usize>,
    /// Tasks with equal head keys share one output head.
    pub head_key: String,
}

impl TaskDescriptor {
    pub fn new(name: impl Into<String>, task_type: TaskType, data_paths: DataPaths) -> Self {
        let name = name.into();
        TaskDescriptor {
            head_key: name.clone(),
            name,
            task_type,
            data_paths,
            metric_spec: MetricSpec::for_type(task_type),
            labels: Vec::new(),
            num_choices: None,
        }
    }

    pub fn with_labels<S: Into<String>>(mut self, labels: impl IntoIterator<Item = S>) -> Self {
        self.labels = labels.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_num_choices(mut self, n: usize) -> Self {
        self.num_choices = Some(n);
        self
    }

    pub fn with_head_key(mut self, key: impl Into<String>) -> Self {
        self.head_key = key.into();
        self
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    fn check(&self) -> Result<(), CorpusError> {
        let invalid = |message: String| CorpusError::InvalidDescriptor { task: self.name.clone(), message };
        let valid_name = !self.name.is_empty() && self.name.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-');
        if !valid_name {
            return Err(invalid("task names use letters, digits, '_' and '-'".to_string()));
        }
        if self.head_key.is_empty() {
            return Err(invalid("empty head_key".to_string()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(invalid(format!("duplicate label {dup:?}")));
        }
        match self.task_type {
            TaskType::SingleClassification | TaskType::PairClassification if self.labels.len() < 2 => {
                Err(invalid(format!("classification needs at least 2 labels, got {}", self.labels.len())))
            }
            TaskType::Tagging if self.labels.is_empty() => Err(invalid("tagging needs a tag inventory".to_string())),
            TaskType::MultipleChoice if self.num_choices.unwrap_or(0) < 2 => {
                Err(invalid(format!("multiple choice needs num_choices >= 2, got {:?}", self.num_choices)))
            }
            _ => Ok(()),
        }
    }
}

/// A single example as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawExample {
    pub guid: String,
    pub text_a: String,
    pub text_b: Option<String>,
    pub choices: Option<Vec<String>>,
    /// Absent for unlabelled (prediction-only) test data.
    pub target: Option<Target>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Label(String),
    Value(f64),
    Tags(Vec<String>),
    Choice(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskHandle(pub usize);

/// Tasks selectable by name. Built once, then read-only.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskRegistry {
    tasks: IndexMap<String, TaskDescriptor>,
}

impl TaskRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, descriptor: TaskDescriptor) -> Result<TaskHandle, CorpusError> {
        descriptor.check()?;
        if self.tasks.contains_key(&descriptor.name) {
            return Err(CorpusError::DuplicateTask(descriptor.name));
        }
        let (index, _) = self.tasks.insert_full(descriptor.name.clone(), descriptor);
        Ok(TaskHandle(index))
    }

    pub fn get(&self, name: &str) -> Result<&TaskDescriptor, CorpusError> {
        self.tasks.get(name).ok_or_else(|| CorpusError::UnknownTask(name.to_string()))
    }

    pub fn by_handle(&self, handle: TaskHandle) -> &TaskDescriptor {
        &self.tasks[handle.0]
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tasks.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tasks.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Registers every task defined in a `tasks { name { ... } }` config
    /// block. Relative data paths resolve against `data_dir`.
    ///
    /// Recognized fields: `type` (required), `train`, `val`, `test`,
    /// `labels`, `num_choices`, `head_key`. Missing paths default to
    /// `<name>/<split>.<ext>`.
    pub fn from_config(block: &ConfigObject, data_dir: &Path) -> Result<Self, CorpusError> {
        let mut registry = TaskRegistry::new();
        for (name, def) in block {
            let invalid = |message: String| CorpusError::InvalidDescriptor { task: name.clone(), message };
            let def = def.as_object().ok_or_else(|| invalid("task definition must be an object".to_string()))?;
            for key in def.keys() {
                if !["type", "train", "val", "test", "labels", "num_choices", "head_key"].contains(&key.as_str()) {
                    return Err(invalid(format!("unknown task field {key}")));
                }
            }
            let type_name = def
                .get("type")
                .and_then(ConfigValue::as_str)
                .ok_or_else(|| invalid("missing string field type".to_string()))?;
            let task_type: TaskType = type_name.parse()?;
            let defaults = DataPaths::in_dir(Path::new(name), task_type);
            let path_field = |field: &str, default: &Path| -> Result<PathBuf, CorpusError> {
                let rel = match def.get(field) {
                    None => default.to_path_buf(),
                    Some(ConfigValue::String(s)) => PathBuf::from(s),
                    Some(other) => return Err(invalid(format!("{field} must be a string, found {}", other.type_name()))),
                };
                Ok(if rel.is_absolute() { rel } else { data_dir.join(rel) })
            };
            let paths = DataPaths {
                train: path_field("train", &defaults.train)?,
                val: path_field("val", &defaults.val)?,
                test: path_field("test", &defaults.test)?,
            };
            let mut descriptor = TaskDescriptor::new(name.clone(), task_type, paths);
            if let Some(labels) = def.get("labels") {
                let items = match labels {
                    ConfigValue::List(items) => items,
                    other => return Err(invalid(format!("labels must be a list, found {}", other.type_name()))),
                };
                let labels = items
                    .iter()
                    .map(|v| match v {
                        ConfigValue::String(s) => Ok(s.clone()),
                        ConfigValue::Int(i) => Ok(i.to_string()),
                        other => Err(invalid(format!("label must be a string, found {}", other.type_name()))),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                descriptor = descriptor.with_labels(labels);
            }
            if let Some(n) = def.get("num_choices") {
                let n = n.as_i64().filter(|n| *n > 0).ok_or_else(|| invalid("num_choices must be a positive integer".to_string()))?;
                descriptor = descriptor.with_num_choices(n as usize);
            }
            if let Some(key) = def.get("head_key") {
                let key = key.as_str().ok_or_else(|| invalid("head_key must be a string".to_string()))?;
                descriptor = descriptor.with_head_key(key);
            }
            registry.register(descriptor)?;
        }
        Ok(registry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confparse::parse_config;

    fn toy(name: &str) -> TaskDescriptor {
        TaskDescriptor::new(name, TaskType::SingleClassification, DataPaths::in_dir(Path::new(name), TaskType::SingleClassification))
            .with_labels(["entailment", "neutral", "contradiction"])
    }

    #[test]
    fn register_and_lookup() {
        let mut reg = TaskRegistry::new();
        reg.register(toy("toy_nli")).unwrap();
        assert_eq!(reg.get("toy_nli").unwrap().labels.len(), 3);
        assert!(matches!(reg.get("nope"), Err(CorpusError::UnknownTask(_))));
    }

    #[test]
    fn duplicate_name_rejected() {
        let mut reg = TaskRegistry::new();
        reg.register(toy("toy_nli")).unwrap();
        assert!(matches!(reg.register(toy("toy_nli")), Err(CorpusError::DuplicateTask(_))));
    }

    #[test]
    fn multiple_choice_needs_two_choices() {
        let paths = DataPaths::in_dir(Path::new("mc"), TaskType::MultipleChoice);
        let mut reg = TaskRegistry::new();
        let one = TaskDescriptor::new("mc_one", TaskType::MultipleChoice, paths.clone()).with_num_choices(1);
        assert!(matches!(reg.register(one), Err(CorpusError::InvalidDescriptor { .. })));
        let four = TaskDescriptor::new("mc_synth", TaskType::MultipleChoice, paths).with_num_choices(4);
        reg.register(four).unwrap();
        assert_eq!(reg.get("mc_synth").unwrap().num_choices, Some(4));
    }

    #[test]
    fn classification_needs_two_labels() {
        let mut reg = TaskRegistry::new();
        assert!(reg.register(toy("t").with_labels(["only"])).is_err());
    }

    #[test]
    fn out_of_scope_types_are_unsupported() {
        assert!(matches!("span_prediction".parse::<TaskType>(), Err(CorpusError::UnsupportedTaskType(_))));
        assert!(matches!("ranking".parse::<TaskType>(), Err(CorpusError::UnsupportedTaskType(_))));
        assert!(matches!("poetry".parse::<TaskType>(), Err(CorpusError::UnknownTaskType(_))));
    }

    #[test]
    fn registry_from_config_block() {
        let tree = parse_config(
            r#"tasks {
                 toy_nli { type = pair_classification, labels = [entailment, neutral, contradiction] }
                 toy_tag { type = tagging, labels = [N, V], train = "/abs/tags.conll", head_key = shared }
               }"#,
            Path::new("."),
        )
        .unwrap();
        let block = tree.get("tasks").unwrap().as_object().unwrap();
        let reg = TaskRegistry::from_config(block, Path::new("/data")).unwrap();
        let nli = reg.get("toy_nli").unwrap();
        assert_eq!(nli.data_paths.val, Path::new("/data/toy_nli/val.tsv"));
        let tag = reg.get("toy_tag").unwrap();
        assert_eq!(tag.data_paths.train, Path::new("/abs/tags.conll"));
        assert_eq!(tag.data_paths.test, Path::new("/data/toy_tag/test.conll"));
        assert_eq!(tag.head_key, "shared");
    }
}
