use std::fmt;

/// Why a phase's loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Patience,
    MaxVals,
    LrFloor,
    EpochsExhausted,
    MaxSteps,
}

impl StopReason {
    pub(crate) fn code(self) -> u8 {
        match self {
            StopReason::Patience => 0,
            StopReason::MaxVals => 1,
            StopReason::LrFloor => 2,
            StopReason::EpochsExhausted => 3,
            StopReason::MaxSteps => 4,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => StopReason::Patience,
            1 => StopReason::MaxVals,
            2 => StopReason::LrFloor,
            3 => StopReason::EpochsExhausted,
            4 => StopReason::MaxSteps,
            _ => return None,
        })
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Patience => "patience exhausted",
            StopReason::MaxVals => "validation limit reached",
            StopReason::LrFloor => "learning rate below min_lr",
            StopReason::EpochsExhausted => "all tasks reached max_epochs",
            StopReason::MaxSteps => "step limit reached",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateauConfig {
    pub patience: u32,
    pub lr_patience: u32,
    pub lr_decay_factor: f64,
    pub min_lr: f64,
    pub max_vals: u32,
}

/// Early stopping and learning-rate decay driven by validation metrics
/// (higher is better). Ties do not count as improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauTracker {
    pub config: PlateauConfig,
    pub lr: f64,
    pub best: Option<f64>,
    pub best_step: Option<u64>,
    pub patience_count: u32,
    pub lr_patience_count: u32,
    pub val_count: u32,
}

/// Result of recording one validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub improved: bool,
    pub lr_decayed: bool,
    pub stop: Option<StopReason>,
}

impl PlateauTracker {
    pub fn new(config: PlateauConfig, lr: f64) -> Self {
        PlateauTracker { config, lr, best: None, best_step: None, patience_count: 0, lr_patience_count: 0, val_count: 0 }
    }

    pub fn observe(&mut self, metric: f64, step: u64) -> Verdict {
        self.val_count += 1;
        let improved = metric.is_finite() && self.best.map_or(true, |b| metric > b);
        let mut lr_decayed = false;
        if improved {
            self.best = Some(metric);
            self.best_step = Some(step);
            self.patience_count = 0;
            self.lr_patience_count = 0;
        } else {
            self.patience_count += 1;
            self.lr_patience_count += 1;
            if self.lr_patience_count >= self.config.lr_patience {
                self.lr *= self.config.lr_decay_factor;
                self.lr_patience_count = 0;
                lr_decayed = true;
            }
        }
        let stop = if self.patience_count >= self.config.patience {
            Some(StopReason::Patience)
        } else if self.val_count >= self.config.max_vals {
            Some(StopReason::MaxVals)
        } else if self.lr < self.config.min_lr {
            Some(StopReason::LrFloor)
        } else {
            None
        };
        Verdict { improved, lr_decayed, stop }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(patience: u32, lr_patience: u32, min_lr: f64, max_vals: u32) -> PlateauConfig {
        PlateauConfig { patience, lr_patience, lr_decay_factor: 0.5, min_lr, max_vals }
    }

    #[test]
    fn patience_stops_after_fifth_validation() {
        let mut t = PlateauTracker::new(config(3, 100, 0.0, 100), 0.1);
        let verdicts: Vec<Verdict> = [0.5, 0.6, 0.6, 0.6, 0.6].iter().enumerate().map(|(i, &m)| t.observe(m, i as u64)).collect();
        assert!(verdicts[..4].iter().all(|v| v.stop.is_none()));
        assert_eq!(verdicts[4].stop, Some(StopReason::Patience));
        assert_eq!(t.best_step, Some(1));
    }

    #[test]
    fn flat_metrics_reach_lr_floor_within_bound() {
        let mut t = PlateauTracker::new(config(u32::MAX, 4, 1e-7, u32::MAX), 1e-5);
        t.observe(0.3, 0);
        let mut further = 0;
        loop {
            further += 1;
            if t.observe(0.3, further).stop.is_some() {
                break;
            }
        }
        assert!(further <= 4 * 7, "{further}");
        assert!(t.lr < 1e-7);
    }

    #[test]
    fn max_vals_and_non_finite() {
        let mut t = PlateauTracker::new(config(10, 10, 0.0, 2), 0.1);
        assert!(!t.observe(f64::NAN, 0).improved);
        assert_eq!(t.observe(0.1, 1).stop, Some(StopReason::MaxVals));
        assert_eq!(t.best, Some(0.1));
    }
}
