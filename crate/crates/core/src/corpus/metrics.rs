use std::collections::BTreeMap;

use super::{CorpusError, TaskDescriptor, TaskType};

/// A prediction or gold value in index space.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Label(usize),
    Value(f64),
    Tags(Vec<usize>),
    Choice(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub values: BTreeMap<String, f64>,
    pub primary: String,
}

impl MetricReport {
    pub fn primary_value(&self) -> f64 {
        self.values[&self.primary]
    }
}

pub fn compute_metrics(desc: &TaskDescriptor, preds: &[Outcome], golds: &[Outcome]) -> Result<MetricReport, CorpusError> {
    if preds.len() != golds.len() {
        return Err(CorpusError::LengthMismatch { what: desc.name.clone(), left: preds.len(), right: golds.len() });
    }
    if preds.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let kind = || CorpusError::KindMismatch(desc.name.clone());
    let mut values = BTreeMap::new();
    match desc.task_type {
        TaskType::SingleClassification | TaskType::PairClassification | TaskType::MultipleChoice => {
            let pick = |o: &Outcome| match o {
                Outcome::Label(i) | Outcome::Choice(i) => Some(*i),
                _ => None,
            };
            let p: Vec<usize> = preds.iter().map(pick).collect::<Option<_>>().ok_or_else(kind)?;
            let g: Vec<usize> = golds.iter().map(pick).collect::<Option<_>>().ok_or_else(kind)?;
            values.insert("accuracy".to_string(), accuracy(&p, &g));
            if desc.task_type.is_classification() {
                values.insert("mcc".to_string(), mcc(&p, &g));
                values.insert("macro_f1".to_string(), macro_f1(&p, &g));
            }
        }
        TaskType::Regression => {
            let pick = |o: &Outcome| match o {
                Outcome::Value(v) => Some(*v),
                _ => None,
            };
            let p: Vec<f64> = preds.iter().map(pick).collect::<Option<_>>().ok_or_else(kind)?;
            let g: Vec<f64> = golds.iter().map(pick).collect::<Option<_>>().ok_or_else(kind)?;
            values.insert("pearson".to_string(), pearson(&p, &g));
            values.insert("spearman".to_string(), spearman(&p, &g));
        }
        TaskType::Tagging => {
            let (mut hit, mut total) = (0usize, 0usize);
            for (p, g) in preds.iter().zip(golds) {
                let (Outcome::Tags(p), Outcome::Tags(g)) = (p, g) else { return Err(kind()) };
                if p.len() != g.len() {
                    return Err(CorpusError::LengthMismatch { what: format!("{} tags", desc.name), left: p.len(), right: g.len() });
                }
                hit += p.iter().zip(g).filter(|(a, b)| a == b).count();
                total += g.len();
            }
            if total == 0 {
                return Err(CorpusError::EmptyInput);
            }
            values.insert("token_accuracy".to_string(), hit as f64 / total as f64);
        }
    }
    Ok(MetricReport { values, primary: desc.metric_spec.primary.to_string() })
}

pub fn accuracy(preds: &[usize], golds: &[usize]) -> f64 {
    if golds.is_empty() {
        return 0.0;
    }
    preds.iter().zip(golds).filter(|(p, g)| p == g).count() as f64 / golds.len() as f64
}

fn num_classes(preds: &[usize], golds: &[usize]) -> usize {
    preds.iter().chain(golds).copied().max().map_or(0, |m| m + 1)
}

/// Multiclass Matthews correlation from the confusion matrix; 0 when the
/// denominator vanishes.
pub fn mcc(preds: &[usize], golds: &[usize]) -> f64 {
    let k = num_classes(preds, golds);
    let mut pred_counts = vec![0f64; k];
    let mut true_counts = vec![0f64; k];
    let mut correct = 0f64;
    for (&p, &g) in preds.iter().zip(golds) {
        pred_counts[p] += 1.0;
        true_counts[g] += 1.0;
        if p == g {
            correct += 1.0;
        }
    }
    let s = golds.len() as f64;
    let pt: f64 = pred_counts.iter().zip(&true_counts).map(|(p, t)| p * t).sum();
    let pp: f64 = pred_counts.iter().map(|p| p * p).sum();
    let tt: f64 = true_counts.iter().map(|t| t * t).sum();
    let denom = ((s * s - pp) * (s * s - tt)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (correct * s - pt) / denom
    }
}

/// Unweighted mean of per-class F1 over classes occurring in either input.
pub fn macro_f1(preds: &[usize], golds: &[usize]) -> f64 {
    let k = num_classes(preds, golds);
    let (mut tp, mut fp, mut fnn) = (vec![0f64; k], vec![0f64; k], vec![0f64; k]);
    for (&p, &g) in preds.iter().zip(golds) {
        if p == g {
            tp[p] += 1.0;
        } else {
            fp[p] += 1.0;
            fnn[g] += 1.0;
        }
    }
    let mut sum = 0.0;
    let mut present = 0usize;
    for c in 0..k {
        let support = tp[c] + fp[c] + fnn[c];
        if support == 0.0 {
            continue;
        }
        present += 1;
        sum += 2.0 * tp[c] / (2.0 * tp[c] + fp[c] + fnn[c]);
    }
    if present == 0 {
        0.0
    } else {
        sum / present as f64
    }
}

/// Pearson correlation; 0 when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.is_empty() {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// Ranks starting at 1; tied values share the mean of their ranks.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks on ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}
