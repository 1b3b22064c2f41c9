//! Prediction files: a strict benchmark TSV layout and a raw JSONL layout.

use serde_json::json;

use crate::corpus::{Outcome, RawExample, TaskDescriptor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionMode {
    /// `index<TAB>prediction` rows under a header, labels as strings.
    Strict,
    /// One JSON record per example with guid, prediction, and scores.
    Raw,
}

impl PredictionMode {
    pub fn extension(self) -> &'static str {
        match self {
            PredictionMode::Strict => "tsv",
            PredictionMode::Raw => "jsonl",
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{task}: {predictions} predictions for {examples} examples")]
pub struct LengthMismatch {
    pub task: String,
    pub predictions: usize,
    pub examples: usize,
}

fn label(desc: &TaskDescriptor, i: usize) -> String {
    desc.labels.get(i).cloned().unwrap_or_else(|| i.to_string())
}

/// Strict-format cell for one prediction. Regression values use three decimals.
pub fn render_prediction(desc: &TaskDescriptor, outcome: &Outcome) -> String {
    match outcome {
        Outcome::Label(i) => label(desc, *i),
        Outcome::Value(v) => format!("{v:.3}"),
        Outcome::Choice(c) => c.to_string(),
        Outcome::Tags(tags) => tags.iter().map(|&t| label(desc, t)).collect::<Vec<_>>().join(" "),
    }
}

fn json_prediction(desc: &TaskDescriptor, outcome: &Outcome) -> serde_json::Value {
    match outcome {
        Outcome::Label(i) => json!(label(desc, *i)),
        Outcome::Value(v) => json!(v),
        Outcome::Choice(c) => json!(c),
        Outcome::Tags(tags) => json!(tags.iter().map(|&t| label(desc, t)).collect::<Vec<_>>()),
    }
}

/// File contents for the predictions of one split. `examples` supplies
/// guids and must align with `outcomes` and `scores`.
pub fn format_predictions(
    desc: &TaskDescriptor,
    examples: &[RawExample],
    outcomes: &[Outcome],
    scores: &[Vec<f64>],
    mode: PredictionMode,
) -> Result<String, LengthMismatch> {
    if outcomes.len() != examples.len() || scores.len() != examples.len() {
        return Err(LengthMismatch { task: desc.name.clone(), predictions: outcomes.len(), examples: examples.len() });
    }
    let mut out = String::new();
    match mode {
        PredictionMode::Strict => {
            out.push_str("index\tprediction\n");
            for (i, o) in outcomes.iter().enumerate() {
                out.push_str(&format!("{i}\t{}\n", render_prediction(desc, o)));
            }
        }
        PredictionMode::Raw => {
            for ((ex, o), s) in examples.iter().zip(outcomes).zip(scores) {
                let record = json!({ "guid": ex.guid, "prediction": json_prediction(desc, o), "scores": s });
                out.push_str(&record.to_string());
                out.push('\n');
            }
        }
    }
    Ok(out)
}
