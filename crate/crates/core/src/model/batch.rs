use super::ModelError;
use crate::corpus::Outcome;
use crate::pipeline::{IndexedExample, IndexedTarget, PAD};

/// Padded, masked index matrix for a group of examples. Multiple-choice
/// examples contribute one row per choice.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub examples: usize,
    /// Rows per example: 1, or the number of choices.
    pub group: usize,
    pub seq_len: usize,
    /// Row-major `[examples * group, seq_len]`.
    pub ids: Vec<usize>,
    pub mask: Vec<f64>,
    /// Unpadded length of each row.
    pub lengths: Vec<usize>,
    pub targets: Vec<Option<IndexedTarget>>,
}

impl Batch {
    pub fn new(examples: &[&IndexedExample]) -> Result<Self, ModelError> {
        let first = examples.first().ok_or(ModelError::EmptyBatch)?;
        let group = first.sequences.len();
        if group == 0 || examples.iter().any(|e| e.sequences.len() != group) {
            return Err(ModelError::InvalidSpec("examples in a batch need equal sequence counts".into()));
        }
        let seq_len = examples.iter().flat_map(|e| e.sequences.iter().map(Vec::len)).max().unwrap_or(0);
        let rows = examples.len() * group;
        let mut ids = vec![PAD as usize; rows * seq_len];
        let mut mask = vec![0.0; rows * seq_len];
        let mut lengths = Vec::with_capacity(rows);
        for (r, seq) in examples.iter().flat_map(|e| e.sequences.iter()).enumerate() {
            for (t, &ix) in seq.iter().enumerate() {
                ids[r * seq_len + t] = ix as usize;
                mask[r * seq_len + t] = 1.0;
            }
            lengths.push(seq.len());
        }
        Ok(Batch {
            examples: examples.len(),
            group,
            seq_len,
            ids,
            mask,
            lengths,
            targets: examples.iter().map(|e| e.target.clone()).collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.examples * self.group
    }

    pub fn all_labelled(&self) -> bool {
        self.targets.iter().all(Option::is_some)
    }
}

pub fn gold_outcome(target: &IndexedTarget) -> Outcome {
    match target {
        IndexedTarget::Label(l) => Outcome::Label(*l as usize),
        IndexedTarget::Value(v) => Outcome::Value(*v),
        IndexedTarget::Choice(c) => Outcome::Choice(*c as usize),
        IndexedTarget::Tags(t) => Outcome::Tags(t.iter().map(|&x| x as usize).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pads_to_longest_row() {
        let a = IndexedExample { sequences: vec![vec![2, 5, 3]], target: None };
        let b = IndexedExample { sequences: vec![vec![2, 3]], target: Some(IndexedTarget::Label(1)) };
        let batch = Batch::new(&[&a, &b]).unwrap();
        assert_eq!(batch.ids, vec![2, 5, 3, 2, 3, 0]);
        assert_eq!(batch.mask, vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
        assert_eq!(batch.lengths, vec![3, 2]);
        assert!(!batch.all_labelled());
    }
}
