use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;

use indexmap::IndexMap;

/// Ordered map of field name to value. Equality ignores field order.
pub type ConfigObject = IndexMap<String, ConfigValue>;

/// A single configuration value.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigValue {
    String(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    List(Vec<ConfigValue>),
    Object(ConfigObject),
}

impl ConfigValue {
    pub fn type_name(&self) -> &'static str {
        match self {
            ConfigValue::String(_) => "string",
            ConfigValue::Int(_) => "integer",
            ConfigValue::Float(_) => "float",
            ConfigValue::Bool(_) => "boolean",
            ConfigValue::List(_) => "list",
            ConfigValue::Object(_) => "object",
        }
    }

    pub fn as_object(&self) -> Option<&ConfigObject> {
        match self {
            ConfigValue::Object(obj) => Some(obj),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ConfigValue::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            ConfigValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    /// Integers coerce to floats; floats never coerce to integers.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ConfigValue::Int(v) => Some(*v as f64),
            ConfigValue::Float(v) => Some(*v),
            _ => None,
        }
    }
}

impl From<&str> for ConfigValue {
    fn from(s: &str) -> Self {
        ConfigValue::String(s.to_string())
    }
}

impl From<i64> for ConfigValue {
    fn from(v: i64) -> Self {
        ConfigValue::Int(v)
    }
}

impl From<f64> for ConfigValue {
    fn from(v: f64) -> Self {
        ConfigValue::Float(v)
    }
}

impl From<bool> for ConfigValue {
    fn from(v: bool) -> Self {
        ConfigValue::Bool(v)
    }
}

/// Where a leaf value was last set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Source {
    File(PathBuf),
    Override,
    /// Text parsed without an associated file.
    Inline,
    Default,
    Environment,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::File(p) => write!(f, "{}", p.display()),
            Source::Override => f.write_str("override"),
            Source::Inline => f.write_str("inline"),
            Source::Default => f.write_str("default"),
            Source::Environment => f.write_str("environment"),
        }
    }
}

pub type KeyPath = Vec<String>;

/// A parsed configuration: a root object plus per-leaf provenance.
///
/// Leaves are scalars, lists, and empty objects.
#[derive(Debug, Clone, Default)]
pub struct ConfigTree {
    pub root: ConfigObject,
    pub provenance: BTreeMap<KeyPath, Source>,
    /// Object nodes that replaced a non-object value. When this tree is merged
    /// over another, these objects replace rather than merge, which keeps
    /// merge associative in the presence of type conflicts.
    pub(crate) resets: BTreeSet<KeyPath>,
}

impl PartialEq for ConfigTree {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl ConfigTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_empty()
    }

    /// Builds a tree from a bare object, attributing every leaf to `source`.
    pub fn from_object(root: ConfigObject, source: Source) -> Self {
        let mut provenance = BTreeMap::new();
        for path in leaf_paths_of_object(&root, &[]) {
            provenance.insert(path, source.clone());
        }
        ConfigTree { root, provenance, resets: BTreeSet::new() }
    }

    /// Tree holding exactly one assignment at `path`.
    pub fn single(path: &[String], value: ConfigValue, source: Source) -> Self {
        assert!(!path.is_empty(), "assignment path must be nonempty");
        let mut value = value;
        for key in path[1..].iter().rev() {
            let mut obj = ConfigObject::new();
            obj.insert(key.clone(), value);
            value = ConfigValue::Object(obj);
        }
        let mut root = ConfigObject::new();
        root.insert(path[0].clone(), value);
        Self::from_object(root, source)
    }

    /// Re-roots this tree under `path`, carrying provenance and reset points.
    pub(crate) fn nested_under(self, path: &[String], source: &Source) -> ConfigTree {
        let mut root = ConfigValue::Object(self.root);
        for key in path.iter().rev() {
            let mut obj = ConfigObject::new();
            obj.insert(key.clone(), root);
            root = ConfigValue::Object(obj);
        }
        let root = match root {
            ConfigValue::Object(obj) => obj,
            _ => unreachable!(),
        };
        let prefixed = |p: &KeyPath| -> KeyPath { path.iter().chain(p.iter()).cloned().collect() };
        let mut provenance: BTreeMap<KeyPath, Source> =
            self.provenance.iter().map(|(p, s)| (prefixed(p), s.clone())).collect();
        for leaf in leaf_paths_of_object(&root, &[]) {
            provenance.entry(leaf).or_insert_with(|| source.clone());
        }
        let resets = self.resets.iter().map(prefixed).collect();
        ConfigTree { root, provenance, resets }
    }

    /// Resolves a dotted path such as `commitbank.val_interval`.
    pub fn get(&self, dotted: &str) -> Option<&ConfigValue> {
        let segments: Vec<&str> = dotted.split('.').collect();
        self.get_path(&segments)
    }

    pub fn get_path<S: AsRef<str>>(&self, path: &[S]) -> Option<&ConfigValue> {
        let (first, rest) = path.split_first()?;
        let mut cur = self.root.get(first.as_ref())?;
        for key in rest {
            cur = cur.as_object()?.get(key.as_ref())?;
        }
        Some(cur)
    }

    pub fn source_of(&self, dotted: &str) -> Option<&Source> {
        let path: KeyPath = dotted.split('.').map(str::to_string).collect();
        self.provenance.get(&path)
    }

    /// Drops provenance, keeping the value structure.
    pub fn erase_provenance(&self) -> ConfigTree {
        ConfigTree { root: self.root.clone(), provenance: BTreeMap::new(), resets: self.resets.clone() }
    }
}

pub(crate) fn leaf_paths_of_object(obj: &ConfigObject, prefix: &[String]) -> Vec<KeyPath> {
    let mut out = Vec::new();
    for (key, value) in obj {
        let mut path = prefix.to_vec();
        path.push(key.clone());
        match value {
            ConfigValue::Object(inner) if !inner.is_empty() => {
                out.extend(leaf_paths_of_object(inner, &path));
            }
            _ => out.push(path),
        }
    }
    out
}
