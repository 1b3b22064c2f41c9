use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::TrainError;
use crate::tensor::RunRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMethod {
    Uniform,
    ProportionalExamples,
    ProportionalBatches,
}

impl FromStr for SamplingMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(SamplingMethod::Uniform),
            "proportional_examples" | "proportional" => Ok(SamplingMethod::ProportionalExamples),
            "proportional_batches" => Ok(SamplingMethod::ProportionalBatches),
            other => Err(format!(
                "unknown sampling_method {other:?} (expected uniform, proportional_examples, proportional_batches)"
            )),
        }
    }
}

impl fmt::Display for SamplingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingMethod::Uniform => "uniform",
            SamplingMethod::ProportionalExamples => "proportional_examples",
            SamplingMethod::ProportionalBatches => "proportional_batches",
        })
    }
}

/// Size of one task as seen by the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskSize {
    pub examples: usize,
    pub batch_size: usize,
}

/// Normalized task weights for `method`.
pub fn sampling_weights(method: SamplingMethod, sizes: &[TaskSize]) -> Result<Vec<f64>, TrainError> {
    if sizes.is_empty() {
        return Err(TrainError::EmptyTaskSet);
    }
    let raw: Vec<f64> = sizes
        .iter()
        .map(|s| match method {
            SamplingMethod::Uniform => 1.0,
            SamplingMethod::ProportionalExamples => s.examples as f64,
            SamplingMethod::ProportionalBatches => s.examples.div_ceil(s.batch_size.max(1)) as f64,
        })
        .collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(TrainError::EmptyTaskSet);
    }
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Independent weighted task draws.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSampler {
    weights: Vec<f64>,
}

impl TaskSampler {
    pub fn new(method: SamplingMethod, sizes: &[TaskSize]) -> Result<Self, TrainError> {
        Ok(TaskSampler { weights: sampling_weights(method, sizes)? })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Draws among tasks with `active[i]` set, renormalizing their weights.
    /// `None` when no active task has positive weight.
    pub fn draw(&self, rng: &mut RunRng, active: &[bool]) -> Option<usize> {
        let total: f64 = self.weights.iter().zip(active).filter(|(_, &a)| a).map(|(w, _)| w).sum();
        if !(total > 0.0) {
            return None;
        }
        let u = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut last = None;
        for (i, (&w, &a)) in self.weights.iter().zip(active).enumerate() {
            if !a || w <= 0.0 {
                continue;
            }
            acc += w;
            last = Some(i);
            if u < acc {
                return Some(i);
            }
        }
        last
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes(counts: &[(usize, usize)]) -> Vec<TaskSize> {
        counts.iter().map(|&(examples, batch_size)| TaskSize { examples, batch_size }).collect()
    }

    #[test]
    fn weights_follow_method() {
        let s = sizes(&[(100, 32), (300, 10)]);
        assert_eq!(sampling_weights(SamplingMethod::Uniform, &s).unwrap(), vec![0.5, 0.5]);
        assert_eq!(sampling_weights(SamplingMethod::ProportionalExamples, &s).unwrap(), vec![0.25, 0.75]);
        assert_eq!(sampling_weights(SamplingMethod::ProportionalBatches, &s).unwrap(), vec![4.0 / 34.0, 30.0 / 34.0]);
        assert!(matches!(sampling_weights(SamplingMethod::Uniform, &[]), Err(TrainError::EmptyTaskSet)));
    }

    #[test]
    fn inactive_tasks_are_never_drawn() {
        let sampler = TaskSampler::new(SamplingMethod::Uniform, &sizes(&[(1, 1), (1, 1), (1, 1)])).unwrap();
        let mut rng = RunRng::seed(3);
        for _ in 0..500 {
            assert_eq!(sampler.draw(&mut rng, &[false, true, false]), Some(1));
        }
        assert_eq!(sampler.draw(&mut rng, &[false, false, false]), None);
    }
}
