use std::str::FromStr;

use super::encoder::{encode_sentences, encode_tokens, xavier};
use super::{Architecture, Batch, ModelError, TaskOutput, HEAD_PREFIX};
use crate::corpus::{Outcome, TaskDescriptor, TaskType};
use crate::pipeline::IndexedTarget;
use crate::tensor::{Graph, ParamStore, RunRng, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    /// Single affine layer followed by softmax.
    LogReg,
    /// One tanh hidden layer before the affine output layer.
    Mlp { hidden: usize },
}

impl FromStr for ClassifierKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "log_reg" => Ok(ClassifierKind::LogReg),
            "mlp" => Ok(ClassifierKind::Mlp { hidden: 64 }),
            other => Err(format!("unknown classifier {other:?} (expected log_reg, mlp)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Classification { classes: usize },
    Regression,
    Tagging { tags: usize },
    MultipleChoice { choices: usize },
}

impl HeadKind {
    pub fn for_task(task: &TaskDescriptor) -> Self {
        match task.task_type {
            TaskType::SingleClassification | TaskType::PairClassification => HeadKind::Classification { classes: task.labels.len() },
            TaskType::Regression => HeadKind::Regression,
            TaskType::Tagging => HeadKind::Tagging { tags: task.labels.len() },
            TaskType::MultipleChoice => HeadKind::MultipleChoice { choices: task.num_choices.unwrap_or(0) },
        }
    }

    fn outputs(self) -> usize {
        match self {
            HeadKind::Classification { classes } => classes,
            HeadKind::Tagging { tags } => tags,
            HeadKind::Regression | HeadKind::MultipleChoice { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadSpec {
    pub head_key: String,
    pub kind: HeadKind,
    pub input_dim: usize,
    pub classifier: ClassifierKind,
}

impl HeadSpec {
    fn name(&self, part: &str) -> String {
        format!("{HEAD_PREFIX}{}.{part}", self.head_key)
    }
}

pub(crate) fn build_heads(
    arch: &mut Architecture,
    tasks: &[&TaskDescriptor],
    classifier: ClassifierKind,
    params: &mut ParamStore,
    rng: &mut RunRng,
) -> Result<(), ModelError> {
    let input_dim = arch.encoder.output_dim();
    let mut owner: Vec<(String, String)> = Vec::new();
    for task in tasks {
        let kind = HeadKind::for_task(task);
        let key = task.head_key.clone();
        if let Some(existing) = arch.heads.get(&key) {
            if existing.kind != kind {
                let first = owner.iter().find(|(k, _)| *k == key).map(|(_, t)| t.clone()).unwrap_or_default();
                return Err(ModelError::IncompatibleHead { key, first, second: task.name.clone() });
            }
        } else {
            let classifier = match kind {
                HeadKind::Classification { .. } => classifier,
                _ => ClassifierKind::LogReg,
            };
            let spec = HeadSpec { head_key: key.clone(), kind, input_dim, classifier };
            let mut fan_in = input_dim;
            if let ClassifierKind::Mlp { hidden } = classifier {
                params.insert(spec.name("hid_w"), xavier(rng, input_dim, hidden));
                params.insert(spec.name("hid_b"), Tensor::zeros(vec![hidden]));
                fan_in = hidden;
            }
            params.insert(spec.name("w"), xavier(rng, fan_in, kind.outputs()));
            params.insert(spec.name("b"), Tensor::zeros(vec![kind.outputs()]));
            arch.heads.insert(key.clone(), spec);
            owner.push((key.clone(), task.name.clone()));
        }
        arch.task_heads.insert(task.name.clone(), key);
    }
    Ok(())
}

fn project(spec: &HeadSpec, store: &ParamStore, g: &mut Graph, x: Var) -> Result<Var, ModelError> {
    let p = |g: &mut Graph, part: &str| -> Result<Var, ModelError> {
        let name = spec.name(part);
        let id = store.id(&name).ok_or_else(|| ModelError::InvalidSpec(format!("missing parameter {name}")))?;
        Ok(g.param(store, id))
    };
    let mut x = x;
    if let ClassifierKind::Mlp { .. } = spec.classifier {
        let (w, b) = (p(g, "hid_w")?, p(g, "hid_b")?);
        let h = g.matmul(x, w)?;
        let h = g.add(h, b)?;
        x = g.tanh(h);
    }
    let (w, b) = (p(g, "w")?, p(g, "b")?);
    let out = g.matmul(x, w)?;
    Ok(g.add(out, b)?)
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value; the first one on ties.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn run_head(
    arch: &Architecture,
    spec: &HeadSpec,
    store: &ParamStore,
    g: &mut Graph,
    task: &TaskDescriptor,
    batch: &Batch,
    rng: &mut RunRng,
) -> Result<TaskOutput, ModelError> {
    let kind_err = || ModelError::TargetKind(task.name.clone());
    let labelled = batch.all_labelled();
    match spec.kind {
        HeadKind::Classification { classes } | HeadKind::MultipleChoice { choices: classes } => {
            let rep = encode_sentences(arch, store, g, batch, rng)?;
            let mut scores = project(spec, store, g, rep)?;
            if let HeadKind::MultipleChoice { .. } = spec.kind {
                if batch.group != classes {
                    return Err(ModelError::InvalidSpec(format!("{} choices for a {classes}-way head", batch.group)));
                }
                scores = g.reshape(scores, &[batch.examples, classes])?;
            }
            let probs: Vec<Vec<f64>> = g.value(scores).data().chunks(classes).map(softmax).collect();
            let predictions = g.value(scores).data().chunks(classes).map(argmax);
            let predictions = match spec.kind {
                HeadKind::MultipleChoice { .. } => predictions.map(Outcome::Choice).collect(),
                _ => predictions.map(Outcome::Label).collect(),
            };
            let loss = if labelled {
                let labels = batch
                    .targets
                    .iter()
                    .map(|t| match t {
                        Some(IndexedTarget::Label(l)) | Some(IndexedTarget::Choice(l)) => Ok(Some(*l as usize)),
                        _ => Err(kind_err()),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Some(g.softmax_cross_entropy(scores, &labels)?)
            } else {
                None
            };
            Ok(TaskOutput { loss, predictions, scores: probs })
        }
        HeadKind::Regression => {
            let rep = encode_sentences(arch, store, g, batch, rng)?;
            let pred = project(spec, store, g, rep)?;
            let predictions = g.value(pred).data().iter().map(|&v| Outcome::Value(v)).collect();
            let scores = g.value(pred).data().iter().map(|&v| vec![v]).collect();
            let loss = if labelled {
                let targets = batch
                    .targets
                    .iter()
                    .map(|t| match t {
                        Some(IndexedTarget::Value(v)) => Ok(*v),
                        _ => Err(kind_err()),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Some(g.mse(pred, &targets)?)
            } else {
                None
            };
            Ok(TaskOutput { loss, predictions, scores })
        }
        HeadKind::Tagging { tags } => {
            let states = encode_tokens(arch, store, g, batch, rng)?;
            let (rows, t) = (batch.rows(), batch.seq_len);
            let flat = g.reshape(states, &[rows * t, spec.input_dim])?;
            let logits = project(spec, store, g, flat)?;
            let values = g.value(logits).data();
            let token = |r: usize, pos: usize| &values[(r * t + pos) * tags..(r * t + pos + 1) * tags];
            let kept = |r: usize| 1..=batch.lengths[r].saturating_sub(2);
            let predictions = (0..rows).map(|r| Outcome::Tags(kept(r).map(|pos| argmax(token(r, pos))).collect())).collect();
            let scores = (0..rows)
                .map(|r| kept(r).map(|pos| softmax(token(r, pos)).into_iter().fold(0.0, f64::max)).collect())
                .collect();
            let loss = if labelled {
                let mut labels = vec![None; rows * t];
                for (r, target) in batch.targets.iter().enumerate() {
                    let Some(IndexedTarget::Tags(seq)) = target else { return Err(kind_err()) };
                    for (i, &tag) in seq.iter().enumerate() {
                        labels[r * t + i + 1] = Some(tag as usize);
                    }
                }
                Some(g.softmax_cross_entropy(logits, &labels)?)
            } else {
                None
            };
            Ok(TaskOutput { loss, predictions, scores })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DataPaths;
    use crate::model::{EncoderSpec, ModelAssembly};
    use crate::pipeline::{build_vocab, tokenize, IndexedExample};
    use std::path::Path;

    #[test]
    fn incompatible_shared_head_is_rejected() {
        let vocab = build_vocab([tokenize("x")], 5).unwrap();
        let mk = |name: &str, n: usize| {
            TaskDescriptor::new(name, TaskType::SingleClassification, DataPaths::in_dir(Path::new(name), TaskType::SingleClassification))
                .with_labels((0..n).map(|i| i.to_string()))
                .with_head_key("k")
        };
        let (a, b) = (mk("a", 2), mk("b", 3));
        let err = ModelAssembly::build(&EncoderSpec::default(), &vocab, &[&a, &b], ClassifierKind::LogReg, &mut RunRng::seed(0)).unwrap_err();
        assert!(matches!(err, ModelError::IncompatibleHead { .. }));
    }

    #[test]
    fn four_uniform_choices_give_ln_four() {
        let vocab = build_vocab([tokenize("x")], 5).unwrap();
        let task = TaskDescriptor::new("mc", TaskType::MultipleChoice, DataPaths::in_dir(Path::new("mc"), TaskType::MultipleChoice))
            .with_num_choices(4);
        let mut m = ModelAssembly::build(&EncoderSpec::default(), &vocab, &[&task], ClassifierKind::LogReg, &mut RunRng::seed(0)).unwrap();
        for p in m.params.iter_mut().filter(|p| p.name.starts_with(HEAD_PREFIX)) {
            p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let ex = IndexedExample { sequences: vec![vec![2, 4, 3]; 4], target: Some(IndexedTarget::Choice(2)) };
        let mut g = Graph::new(false);
        let out = m.forward(&mut g, &task, &Batch::new(&[&ex]).unwrap(), &mut RunRng::seed(0)).unwrap();
        assert!((g.value(out.loss.unwrap()).item() - 4f64.ln()).abs() < 1e-12);
        assert_eq!(out.predictions, vec![Outcome::Choice(0)]);
    }
}
