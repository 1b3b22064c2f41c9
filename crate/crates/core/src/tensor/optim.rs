use std::collections::BTreeMap;

use super::{ParamStore, TensorError};
use crate::codec::{DecodeError, Reader, Writer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    /// Bias-corrected Adam with decoupled weight decay and linear warmup.
    AdamW,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub warmup_steps: u64,
}

impl Default for OptimHyper {
    fn default() -> Self {
        OptimHyper { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0, warmup_steps: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub hyper: OptimHyper,
    /// Base learning rate before warmup scaling; plateau decay edits this.
    pub lr: f64,
    pub step: u64,
    slots: BTreeMap<String, Moments>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64, hyper: OptimHyper) -> Result<Self, TensorError> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(TensorError::InvalidHyper(format!("learning rate must be positive, got {lr}")));
        }
        for (name, beta) in [("beta1", hyper.beta1), ("beta2", hyper.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(TensorError::InvalidHyper(format!("{name} = {beta} outside [0, 1)")));
            }
        }
        Ok(OptimizerState { kind, hyper, lr, step: 0, slots: BTreeMap::new() })
    }

    /// Learning rate applied at the next step, including warmup.
    pub fn effective_lr(&self) -> f64 {
        let t = self.step + 1;
        let w = self.hyper.warmup_steps;
        if w > 0 && t < w {
            self.lr * t as f64 / w as f64
        } else {
            self.lr
        }
    }

    /// Applies one update to every parameter that requires grad and holds a
    /// gradient. Does not clear gradients.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), TensorError> {
        if !(self.lr > 0.0) {
            return Err(TensorError::InvalidHyper(format!("learning rate must be positive, got {}", self.lr)));
        }
        let lr = self.effective_lr();
        self.step += 1;
        let t = self.step as i32;
        let h = self.hyper;
        for p in store.iter_mut() {
            if !p.requires_grad {
                continue;
            }
            let Some(grad) = p.grad.as_ref() else { continue };
            let g = grad.data();
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, gi) in p.value.data_mut().iter_mut().zip(g) {
                        *w -= lr * gi;
                    }
                }
                OptimizerKind::AdamW => {
                    let n = g.len();
                    let slot = self
                        .slots
                        .entry(p.name.clone())
                        .or_insert_with(|| Moments { first: vec![0.0; n], second: vec![0.0; n] });
                    let c1 = 1.0 - h.beta1.powi(t);
                    let c2 = 1.0 - h.beta2.powi(t);
                    let values = p.value.data_mut();
                    for i in 0..n {
                        slot.first[i] = h.beta1 * slot.first[i] + (1.0 - h.beta1) * g[i];
                        slot.second[i] = h.beta2 * slot.second[i] + (1.0 - h.beta2) * g[i] * g[i];
                        let m_hat = slot.first[i] / c1;
                        let v_hat = slot.second[i] / c2;
                        values[i] -= lr * (m_hat / (v_hat.sqrt() + h.eps) + h.weight_decay * values[i]);
                    }
                }
            }
        }
        Ok(())
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u8(match self.kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::AdamW => 1,
        });
        w.f64(self.hyper.beta1);
        w.f64(self.hyper.beta2);
        w.f64(self.hyper.eps);
        w.f64(self.hyper.weight_decay);
        w.u64(self.hyper.warmup_steps);
        w.f64(self.lr);
        w.u64(self.step);
        w.len(self.slots.len());
        for (name, m) in &self.slots {
            w.str(name);
            w.f64s(&m.first);
            w.f64s(&m.second);
        }
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let kind = match r.u8()? {
            0 => OptimizerKind::Sgd,
            1 => OptimizerKind::AdamW,
            k => return Err(DecodeError::Invalid(format!("unknown optimizer tag {k}"))),
        };
        let hyper = OptimHyper {
            beta1: r.f64()?,
            beta2: r.f64()?,
            eps: r.f64()?,
            weight_decay: r.f64()?,
            warmup_steps: r.u64()?,
        };
        let lr = r.f64()?;
        let step = r.u64()?;
        let n = r.len()?;
        let mut slots = BTreeMap::new();
        for _ in 0..n {
            let name = r.str()?;
            let first = r.f64s()?;
            let second = r.f64s()?;
            slots.insert(name, Moments { first, second });
        }
        Ok(OptimizerState { kind, hyper, lr, step, slots })
    }

    /// Shapes of the moment buffers, by parameter name.
    pub fn slot_lengths(&self) -> BTreeMap<String, usize> {
        self.slots.iter().map(|(k, m)| (k.clone(), m.first.len())).collect()
    }
}
