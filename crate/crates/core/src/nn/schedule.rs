use serde::{Deserialize, Serialize};

/// Exponential decay applied once per epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr0: f64,
    pub decay: f64,
    pub steps_per_epoch: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            lr0: 1e-3,
            decay: 0.96,
            steps_per_epoch: 2000,
        }
    }
}

impl LrSchedule {
    pub fn is_valid(&self) -> bool {
        self.lr0 > 0.0 && self.decay > 0.0 && self.decay <= 1.0
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        lr_at(self, epoch)
    }
}

/// `lr0 · decay^epoch`.
pub fn lr_at(schedule: &LrSchedule, epoch: usize) -> f64 {
    schedule.lr0 * schedule.decay.powi(epoch as i32)
}
