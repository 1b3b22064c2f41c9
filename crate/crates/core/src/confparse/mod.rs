//! Experiment configuration language: a HOCON subset with includes, deep
//! merge, command-line overrides, and schema validation.

mod merge;
mod parser;
mod render;
mod schema;
mod value;

use std::path::PathBuf;

use thiserror::Error;

pub use merge::merge;
pub use parser::{parse_config, parse_config_file, parse_overrides};
pub use render::render;
pub use schema::{validate, ConfigSchema, KeySpec, KeyType, RunConfig, TaskOverrides};
pub use value::{ConfigObject, ConfigTree, ConfigValue, KeyPath, Source};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{source_name}:{line}:{column}: {message}")]
    Syntax { source_name: String, line: usize, column: usize, message: String },
    #[error("include cycle: {}", chain.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(" -> "))]
    IncludeCycle { chain: Vec<PathBuf> },
    #[error("cannot read config file {}: {source}", path.display())]
    MissingInclude {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed override: {message}")]
    MalformedOverride { message: String },
    #[error("missing required key {0}")]
    MissingKey(String),
    #[error("type mismatch for {key}: expected {expected}, found {found}")]
    TypeMismatch { key: String, expected: String, found: String },
    #[error("unknown key {0} (not a config option or registered task name)")]
    UnknownKey(String),
    #[error("unsupported key {key}: {reason}")]
    UnsupportedKey { key: String, reason: String },
    #[error("invalid value for {key}: {message}")]
    InvalidValue { key: String, message: String },
}
