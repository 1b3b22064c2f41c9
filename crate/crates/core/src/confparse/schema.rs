use std::collections::BTreeSet;
use std::path::PathBuf;

use indexmap::IndexMap;

use super::{merge, ConfigError, ConfigObject, ConfigTree, ConfigValue, Source};

/// Expected shape of a config value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KeyType {
    Str,
    /// Integer with an inclusive lower bound.
    Int { min: i64 },
    /// Float in `[min, max)`; integers are accepted and widened.
    Float { min: f64, max: f64 },
    /// `true`/`false` or `0`/`1`.
    Flag,
    /// One of a fixed set of strings.
    Choice(&'static [&'static str]),
    /// Comma-separated string or list of strings.
    NameList,
    Object,
}

impl KeyType {
    fn describe(&self) -> String {
        match self {
            KeyType::Str => "string".into(),
            KeyType::Int { min } => format!("integer >= {min}"),
            KeyType::Float { min, max } => format!("number in [{min}, {max})"),
            KeyType::Flag => "boolean or 0/1".into(),
            KeyType::Choice(options) => format!("one of {}", options.join(", ")),
            KeyType::NameList => "comma-separated string or list of strings".into(),
            KeyType::Object => "object".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeySpec {
    pub name: &'static str,
    pub ty: KeyType,
    /// `None` marks a required key.
    pub default: Option<ConfigValue>,
}

/// Known keys, per-task override keys, and keys rejected as out of scope.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSchema {
    pub keys: Vec<KeySpec>,
    pub task_override_keys: Vec<KeySpec>,
    pub rejected: Vec<(&'static str, &'static str)>,
}

pub const SENT_ENCODERS: &[&str] = &["none", "bow_ff", "rnn"];
pub const INPUT_MODULES: &[&str] = &["scratch", "random", "embedding_file", "glove"];
pub const POOLINGS: &[&str] = &["mean", "max", "first"];
pub const CLASSIFIERS: &[&str] = &["log_reg", "mlp"];
pub const PARADIGMS: &[&str] = &["finetune", "frozen"];
pub const OPTIMIZERS: &[&str] = &["sgd", "adam", "adamw", "bert_adam"];
pub const SAMPLING_METHODS: &[&str] = &["uniform", "proportional_examples", "proportional_batches"];
const SPLITS: &[&str] = &["train", "val", "test"];

const PRETRAINED_PREFIXES: &[&str] = &["bert", "roberta", "gpt", "xlnet", "xlm", "albert", "elmo", "openai"];

fn key(name: &'static str, ty: KeyType, default: impl Into<ConfigValue>) -> KeySpec {
    KeySpec { name, ty, default: Some(default.into()) }
}

fn float(min: f64, max: f64) -> KeyType {
    KeyType::Float { min, max }
}

const NONNEG: KeyType = KeyType::Int { min: 0 };
const POSITIVE: KeyType = KeyType::Int { min: 1 };

impl ConfigSchema {
    pub fn standard() -> Self {
        let inf = f64::INFINITY;
        let keys = vec![
            KeySpec { name: "exp_name", ty: KeyType::Str, default: None },
            key("run_name", KeyType::Str, "default"),
            key("project_dir", KeyType::Str, "runs"),
            key("data_dir", KeyType::Str, "data"),
            key("cache_dir", KeyType::Str, ""),
            key("seed", NONNEG, 1234),
            key("max_seq_len", KeyType::Int { min: 3 }, 64),
            key("max_vocab_size", POSITIVE, 20000),
            key("input_module", KeyType::Choice(INPUT_MODULES), "scratch"),
            key("embeddings_file", KeyType::Str, ""),
            key("embedding_dim", POSITIVE, 32),
            key("sent_enc", KeyType::Choice(SENT_ENCODERS), "rnn"),
            key("hidden_dim", POSITIVE, 32),
            key("bidirectional", KeyType::Flag, true),
            key("pooling", KeyType::Choice(POOLINGS), "max"),
            key("classifier", KeyType::Choice(CLASSIFIERS), "log_reg"),
            key("classifier_hid_dim", POSITIVE, 64),
            key("transfer_paradigm", KeyType::Choice(PARADIGMS), "finetune"),
            key("dropout", float(0.0, 1.0), 0.1),
            key("optimizer", KeyType::Choice(OPTIMIZERS), "adam"),
            key("weight_decay", float(0.0, inf), 0.0),
            key("warmup_steps", NONNEG, 0),
            key("batch_size", POSITIVE, 32),
            key("max_epochs", POSITIVE, 50),
            key("lr", float(f64::MIN_POSITIVE, inf), 0.003),
            key("min_lr", float(0.0, inf), 1e-6),
            key("lr_patience", POSITIVE, 2),
            key("lr_decay_factor", float(f64::MIN_POSITIVE, 1.0), 0.5),
            key("patience", POSITIVE, 5),
            key("max_vals", POSITIVE, 100),
            key("val_interval", POSITIVE, 100),
            key("accumulation_steps", POSITIVE, 1),
            key("sampling_method", KeyType::Choice(SAMPLING_METHODS), "proportional_examples"),
            key("do_pretrain", KeyType::Flag, false),
            key("do_target_task_training", KeyType::Flag, true),
            key("do_full_eval", KeyType::Flag, true),
            key("pretrain_tasks", KeyType::NameList, ""),
            key("target_tasks", KeyType::NameList, ""),
            key("write_preds", KeyType::NameList, ""),
            key("write_strict_glue_format", KeyType::Flag, false),
            key("tasks", KeyType::Object, ConfigValue::Object(ConfigObject::new())),
        ];
        let optional = |name, ty| KeySpec { name, ty, default: None };
        let task_override_keys = vec![
            optional("val_interval", POSITIVE),
            optional("max_epochs", POSITIVE),
            optional("batch_size", POSITIVE),
            optional("lr", float(f64::MIN_POSITIVE, inf)),
            optional("patience", POSITIVE),
        ];
        let rejected = vec![
            ("transformers_output_mode", "transformer encoders are not supported"),
            ("s2s", "sequence-to-sequence heads are not supported"),
            ("sep_embs_for_skip", "skip-connection embeddings are not supported"),
        ];
        ConfigSchema { keys, task_override_keys, rejected }
    }

    pub fn spec(&self, name: &str) -> Option<&KeySpec> {
        self.keys.iter().find(|k| k.name == name)
    }

    /// Every default as a tree attributed to [`Source::Default`].
    pub fn defaults(&self) -> ConfigTree {
        let mut root = ConfigObject::new();
        for k in &self.keys {
            if let Some(v) = &k.default {
                root.insert(k.name.to_string(), v.clone());
            }
        }
        ConfigTree::from_object(root, Source::Default)
    }
}

/// Overrides allowed in a per-task block such as `commitbank { ... }`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskOverrides {
    pub val_interval: Option<u64>,
    pub max_epochs: Option<u64>,
    pub batch_size: Option<u64>,
    pub lr: Option<f64>,
    pub patience: Option<u64>,
}

/// A fully validated configuration with defaults applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub exp_name: String,
    pub run_name: String,
    pub project_dir: PathBuf,
    pub data_dir: PathBuf,
    /// Empty means `<project_dir>/<exp_name>/cache`.
    pub cache_dir: Option<PathBuf>,
    pub seed: u64,
    pub max_seq_len: usize,
    pub max_vocab_size: usize,
    pub input_module: String,
    pub embeddings_file: Option<PathBuf>,
    pub embedding_dim: usize,
    pub sent_enc: String,
    pub hidden_dim: usize,
    pub bidirectional: bool,
    pub pooling: String,
    pub classifier: String,
    pub classifier_hid_dim: usize,
    pub transfer_paradigm: String,
    pub dropout: f64,
    pub optimizer: String,
    pub weight_decay: f64,
    pub warmup_steps: u64,
    pub batch_size: usize,
    pub max_epochs: u64,
    pub lr: f64,
    pub min_lr: f64,
    pub lr_patience: u64,
    pub lr_decay_factor: f64,
    pub patience: u64,
    pub max_vals: u64,
    pub val_interval: u64,
    pub accumulation_steps: u64,
    pub sampling_method: String,
    pub do_pretrain: bool,
    pub do_target_task_training: bool,
    pub do_full_eval: bool,
    pub pretrain_tasks: Vec<String>,
    pub target_tasks: Vec<String>,
    pub write_preds: Vec<String>,
    pub write_strict_glue_format: bool,
    /// Task definitions block.
    pub tasks: ConfigObject,
    pub task_overrides: IndexMap<String, TaskOverrides>,
    /// The merged tree, defaults included.
    pub tree: ConfigTree,
}

fn mismatch(key: &str, ty: &KeyType, found: &ConfigValue) -> ConfigError {
    ConfigError::TypeMismatch { key: key.to_string(), expected: ty.describe(), found: found.type_name().to_string() }
}

fn check_value(key: &str, ty: &KeyType, value: &ConfigValue) -> Result<(), ConfigError> {
    let invalid = |message: String| ConfigError::InvalidValue { key: key.to_string(), message };
    match (ty, value) {
        (KeyType::Str, ConfigValue::String(_)) => Ok(()),
        (KeyType::Int { min }, ConfigValue::Int(i)) => {
            if i < min {
                Err(invalid(format!("{i} is below the minimum {min}")))
            } else {
                Ok(())
            }
        }
        (KeyType::Float { min, max }, ConfigValue::Int(_) | ConfigValue::Float(_)) => {
            let v = value.as_f64().unwrap();
            if !(v >= *min && v < *max) {
                Err(invalid(format!("{v} outside [{min}, {max})")))
            } else {
                Ok(())
            }
        }
        (KeyType::Flag, ConfigValue::Bool(_)) => Ok(()),
        (KeyType::Flag, ConfigValue::Int(i)) if *i == 0 || *i == 1 => Ok(()),
        (KeyType::Flag, ConfigValue::Int(i)) => Err(invalid(format!("flag must be 0 or 1, got {i}"))),
        (KeyType::Choice(options), ConfigValue::String(s)) => {
            if options.contains(&s.as_str()) {
                Ok(())
            } else {
                Err(invalid(format!("{s:?} is not one of {}", options.join(", "))))
            }
        }
        (KeyType::NameList, ConfigValue::String(_)) => Ok(()),
        (KeyType::NameList, ConfigValue::List(items)) if items.iter().all(|v| matches!(v, ConfigValue::String(_))) => Ok(()),
        (KeyType::Object, ConfigValue::Object(_)) => Ok(()),
        _ => Err(mismatch(key, ty, value)),
    }
}

fn names(value: &ConfigValue) -> Vec<String> {
    match value {
        ConfigValue::String(s) => s.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect(),
        ConfigValue::List(items) => items.iter().filter_map(ConfigValue::as_str).map(str::to_string).collect(),
        _ => Vec::new(),
    }
}

fn get<'a>(tree: &'a ConfigTree, key: &str) -> &'a ConfigValue {
    tree.get(key).expect("defaults cover every optional key")
}

fn string(tree: &ConfigTree, key: &str) -> String {
    get(tree, key).as_str().unwrap_or_default().to_string()
}

fn int(tree: &ConfigTree, key: &str) -> u64 {
    get(tree, key).as_i64().unwrap_or_default() as u64
}

fn number(tree: &ConfigTree, key: &str) -> f64 {
    get(tree, key).as_f64().unwrap_or_default()
}

fn flag(tree: &ConfigTree, key: &str) -> bool {
    match get(tree, key) {
        ConfigValue::Bool(b) => *b,
        ConfigValue::Int(i) => *i != 0,
        _ => false,
    }
}

fn optional_path(tree: &ConfigTree, key: &str) -> Option<PathBuf> {
    let s = string(tree, key);
    (!s.is_empty()).then(|| PathBuf::from(s))
}

/// Fills defaults, checks types and ranges, and returns the typed view.
/// Top-level keys that are neither options nor names of tasks defined in the
/// `tasks` block are rejected.
pub fn validate(tree: &ConfigTree, schema: &ConfigSchema) -> Result<RunConfig, ConfigError> {
    for (name, reason) in &schema.rejected {
        if tree.root.contains_key(*name) {
            return Err(ConfigError::UnsupportedKey { key: name.to_string(), reason: reason.to_string() });
        }
    }
    if let Some(ConfigValue::String(m)) = tree.root.get("input_module") {
        if pretrained_module(m) {
            return Err(ConfigError::UnsupportedKey {
                key: "input_module".into(),
                reason: format!("pretrained transformer input {m:?} is not supported"),
            });
        }
    }
    let task_names: BTreeSet<String> = match tree.root.get("tasks") {
        Some(ConfigValue::Object(obj)) => obj.keys().cloned().collect(),
        Some(other) => return Err(mismatch("tasks", &KeyType::Object, other)),
        None => BTreeSet::new(),
    };

    let mut task_overrides = IndexMap::new();
    for (name, value) in &tree.root {
        if let Some(spec) = schema.spec(name) {
            check_value(name, &spec.ty, value)?;
            continue;
        }
        if !task_names.contains(name) {
            return Err(ConfigError::UnknownKey(name.clone()));
        }
        let block = value.as_object().ok_or_else(|| mismatch(name, &KeyType::Object, value))?;
        let mut ov = TaskOverrides::default();
        for (k, v) in block {
            let full = format!("{name}.{k}");
            let spec = schema.task_override_keys.iter().find(|s| s.name == k).ok_or_else(|| ConfigError::UnknownKey(full.clone()))?;
            check_value(&full, &spec.ty, v)?;
            match k.as_str() {
                "val_interval" => ov.val_interval = v.as_i64().map(|i| i as u64),
                "max_epochs" => ov.max_epochs = v.as_i64().map(|i| i as u64),
                "batch_size" => ov.batch_size = v.as_i64().map(|i| i as u64),
                "lr" => ov.lr = v.as_f64(),
                "patience" => ov.patience = v.as_i64().map(|i| i as u64),
                _ => unreachable!("override keys are listed above"),
            }
        }
        task_overrides.insert(name.clone(), ov);
    }
    for spec in schema.keys.iter().filter(|k| k.default.is_none()) {
        if !tree.root.contains_key(spec.name) {
            return Err(ConfigError::MissingKey(spec.name.to_string()));
        }
    }

    let full = merge(&schema.defaults(), tree);
    let input_module = string(&full, "input_module");
    let embeddings_file = optional_path(&full, "embeddings_file");
    if matches!(input_module.as_str(), "embedding_file" | "glove") && embeddings_file.is_none() {
        return Err(ConfigError::InvalidValue {
            key: "embeddings_file".into(),
            message: format!("required when input_module = {input_module}"),
        });
    }

    let pretrain_tasks = names(get(&full, "pretrain_tasks"));
    let target_tasks = names(get(&full, "target_tasks"));
    for t in pretrain_tasks.iter().chain(&target_tasks) {
        if !task_names.contains(t) {
            return Err(ConfigError::InvalidValue { key: "tasks".into(), message: format!("task {t:?} is not defined in the tasks block") });
        }
    }
    let do_pretrain = flag(&full, "do_pretrain");
    let do_target = flag(&full, "do_target_task_training");
    let do_full_eval = flag(&full, "do_full_eval");
    if do_pretrain && pretrain_tasks.is_empty() {
        return Err(ConfigError::InvalidValue { key: "pretrain_tasks".into(), message: "must be nonempty when do_pretrain = 1".into() });
    }
    if (do_target || do_full_eval) && target_tasks.is_empty() {
        return Err(ConfigError::InvalidValue {
            key: "target_tasks".into(),
            message: "must be nonempty when do_target_task_training or do_full_eval is set".into(),
        });
    }
    let write_preds = names(get(&full, "write_preds"));
    if let Some(bad) = write_preds.iter().find(|s| !SPLITS.contains(&s.as_str())) {
        return Err(ConfigError::InvalidValue { key: "write_preds".into(), message: format!("unknown split {bad:?}") });
    }

    let cfg = RunConfig {
        exp_name: string(&full, "exp_name"),
        run_name: string(&full, "run_name"),
        project_dir: PathBuf::from(string(&full, "project_dir")),
        data_dir: PathBuf::from(string(&full, "data_dir")),
        cache_dir: optional_path(&full, "cache_dir"),
        seed: int(&full, "seed"),
        max_seq_len: int(&full, "max_seq_len") as usize,
        max_vocab_size: int(&full, "max_vocab_size") as usize,
        input_module,
        embeddings_file,
        embedding_dim: int(&full, "embedding_dim") as usize,
        sent_enc: string(&full, "sent_enc"),
        hidden_dim: int(&full, "hidden_dim") as usize,
        bidirectional: flag(&full, "bidirectional"),
        pooling: string(&full, "pooling"),
        classifier: string(&full, "classifier"),
        classifier_hid_dim: int(&full, "classifier_hid_dim") as usize,
        transfer_paradigm: string(&full, "transfer_paradigm"),
        dropout: number(&full, "dropout"),
        optimizer: string(&full, "optimizer"),
        weight_decay: number(&full, "weight_decay"),
        warmup_steps: int(&full, "warmup_steps"),
        batch_size: int(&full, "batch_size") as usize,
        max_epochs: int(&full, "max_epochs"),
        lr: number(&full, "lr"),
        min_lr: number(&full, "min_lr"),
        lr_patience: int(&full, "lr_patience"),
        lr_decay_factor: number(&full, "lr_decay_factor"),
        patience: int(&full, "patience"),
        max_vals: int(&full, "max_vals"),
        val_interval: int(&full, "val_interval"),
        accumulation_steps: int(&full, "accumulation_steps"),
        sampling_method: string(&full, "sampling_method"),
        do_pretrain,
        do_target_task_training: do_target,
        do_full_eval,
        pretrain_tasks,
        target_tasks,
        write_preds,
        write_strict_glue_format: flag(&full, "write_strict_glue_format"),
        tasks: full.get("tasks").and_then(ConfigValue::as_object).cloned().unwrap_or_default(),
        task_overrides,
        tree: full,
    };
    let exp = &cfg.exp_name;
    if exp.is_empty() || cfg.run_name.is_empty() || [exp, &cfg.run_name].iter().any(|s| s.contains(['/', '\\']) || *s == "." || *s == "..") {
        return Err(ConfigError::InvalidValue { key: "exp_name/run_name".into(), message: "must be nonempty single path components".into() });
    }
    Ok(cfg)
}

/// Rejects `input_module` values naming pretrained transformer models.
fn pretrained_module(value: &str) -> bool {
    let v = value.to_ascii_lowercase();
    PRETRAINED_PREFIXES.iter().any(|p| v.starts_with(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confparse::parse_config;
    use std::path::Path;

    fn check(text: &str) -> Result<RunConfig, ConfigError> {
        validate(&parse_config(text, Path::new(".")).unwrap(), &ConfigSchema::standard())
    }

    const TASKS: &str = "tasks { commitbank { type = single_classification, labels = [a, b] } }\n";

    #[test]
    fn missing_exp_name() {
        let err = check("do_full_eval = 0\ndo_target_task_training = 0").unwrap_err();
        assert_eq!(err.to_string(), "missing required key exp_name");
    }

    #[test]
    fn dropout_accepted_in_unit_interval() {
        let cfg = check(&format!("{TASKS}exp_name = x\ntarget_tasks = commitbank\ndropout = 0.1")).unwrap();
        assert_eq!(cfg.dropout, 0.1);
        assert!(matches!(check(&format!("{TASKS}exp_name = x\ntarget_tasks = commitbank\ndropout = 1.0")), Err(ConfigError::InvalidValue { .. })));
    }

    #[test]
    fn string_batch_size_is_a_type_mismatch() {
        let err = check(&format!("{TASKS}exp_name = x\ntarget_tasks = commitbank\nbatch_size = \"four\"")).unwrap_err();
        assert!(matches!(err, ConfigError::TypeMismatch { ref key, .. } if key == "batch_size"), "{err}");
    }

    #[test]
    fn int_widens_to_float_but_not_back() {
        let cfg = check(&format!("{TASKS}exp_name = x\ntarget_tasks = commitbank\nlr = 1")).unwrap();
        assert_eq!(cfg.lr, 1.0);
        assert!(check(&format!("{TASKS}exp_name = x\ntarget_tasks = commitbank\nbatch_size = 4.0")).is_err());
    }

    #[test]
    fn task_blocks_allowed_only_for_defined_tasks() {
        let cfg = check(&format!("{TASKS}exp_name = x\ntarget_tasks = commitbank\ncommitbank = {{ val_interval = 60, max_epochs = 40 }}")).unwrap();
        assert_eq!(cfg.task_overrides["commitbank"].val_interval, Some(60));
        assert_eq!(cfg.task_overrides["commitbank"].max_epochs, Some(40));
        assert!(matches!(check(&format!("{TASKS}exp_name = x\ntarget_tasks = commitbank\nrte {{ lr = 0.1 }}")), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(
            check(&format!("{TASKS}exp_name = x\ntarget_tasks = commitbank\ncommitbank {{ optimizer = sgd }}")),
            Err(ConfigError::UnknownKey(k)) if k == "commitbank.optimizer"
        ));
    }

    #[test]
    fn out_of_scope_keys_are_rejected() {
        for text in ["s2s = { attention = none }", "sep_embs_for_skip = 1", "transformers_output_mode = top", "input_module = \"bert-large-cased\""] {
            let err = check(&format!("{TASKS}exp_name = x\ntarget_tasks = commitbank\n{text}")).unwrap_err();
            assert!(matches!(err, ConfigError::UnsupportedKey { .. }), "{text}: {err}");
        }
    }

    #[test]
    fn enabled_phases_need_task_lists() {
        assert!(check(&format!("{TASKS}exp_name = x")).is_err());
        assert!(check(&format!("{TASKS}exp_name = x\ntarget_tasks = commitbank\ndo_pretrain = 1")).is_err());
        assert!(check(&format!("{TASKS}exp_name = x\ntarget_tasks = nope")).is_err());
        let cfg = check(&format!("{TASKS}exp_name = x\ntarget_tasks = commitbank\npretrain_tasks = \"commitbank\"\ndo_pretrain = 1")).unwrap();
        assert_eq!(cfg.pretrain_tasks, ["commitbank"]);
    }

    #[test]
    fn defaults_are_filled_with_default_provenance() {
        let cfg = check(&format!("{TASKS}exp_name = x\ntarget_tasks = commitbank")).unwrap();
        assert_eq!(cfg.max_seq_len, 64);
        assert_eq!(cfg.tree.source_of("max_seq_len"), Some(&Source::Default));
        assert_eq!(cfg.tree.source_of("exp_name"), Some(&Source::Inline));
    }
}
