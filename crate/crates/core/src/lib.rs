//! Config-driven multitask and transfer-learning experiments at desk scale.
//!
//! A run is described by composable config files. The framework preprocesses
//! task data, optionally trains a shared encoder on intermediate tasks,
//! optionally fine-tunes a separate copy of it per target task, evaluates,
//! and writes logs, checkpoints, metric events, and prediction files.

pub mod codec;
pub mod confparse;
pub mod corpus;
pub mod model;
pub mod pipeline;
pub mod runner;
pub mod tensor;
pub mod trainer;
