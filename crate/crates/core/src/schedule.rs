//! Linear warmup followed by polynomial decay.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{defaults, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrSchedule {
    pub warmup_steps: u64,
    pub peak_lr: f64,
    pub total_steps: u64,
    pub end_lr: f64,
    pub decay_power: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            warmup_steps: defaults::WARMUP_STEPS,
            peak_lr: defaults::PEAK_LR,
            total_steps: defaults::TOTAL_STEPS,
            end_lr: defaults::END_LR,
            decay_power: defaults::DECAY_POWER,
        }
    }
}

/// Run-shape constants of pre-training. Informational only; nothing here
/// drives an optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunShape {
    pub total_steps: u64,
    pub batch_size: u64,
    pub sequence_length: usize,
}

impl Default for RunShape {
    fn default() -> Self {
        RunShape {
            total_steps: defaults::TOTAL_STEPS,
            batch_size: defaults::PRETRAIN_BATCH_SIZE,
            sequence_length: defaults::SEQUENCE_LENGTH,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(0 < self.warmup_steps && self.warmup_steps < self.total_steps) {
            return Err(Error::config("need 0 < warmup_steps < total_steps"));
        }
        if !(self.end_lr >= 0.0 && self.peak_lr > self.end_lr && self.peak_lr.is_finite()) {
            return Err(Error::config("need peak_lr > end_lr >= 0"));
        }
        if !(self.decay_power > 0.0 && self.decay_power.is_finite()) {
            return Err(Error::config("decay_power must be positive"));
        }
        Ok(())
    }

    /// Learning rate at `step`.
    ///
    /// Ramps linearly from 0 to `peak_lr` over `[0, warmup]`, then follows
    /// `end + (peak - end) * ((total - step) / (total - warmup))^power` until
    /// `total`, and stays at `end_lr` afterwards.
    pub fn lr_at(&self, step: u64) -> f64 {
        if step <= self.warmup_steps {
            return self.peak_lr * (step as f64 / self.warmup_steps as f64);
        }
        if step >= self.total_steps {
            return self.end_lr;
        }
        let remaining =
            (self.total_steps - step) as f64 / (self.total_steps - self.warmup_steps) as f64;
        self.end_lr + (self.peak_lr - self.end_lr) * libm::pow(remaining, self.decay_power)
    }

    /// `(step, lr)` rows at `0, stride, 2*stride, ...` up to `total_steps`,
    /// always ending with a row for `total_steps`.
    pub fn dump(&self, stride: u64) -> Result<Vec<(u64, f64)>> {
        if stride == 0 {
            return Err(Error::config("stride must be at least 1"));
        }
        let mut rows: Vec<(u64, f64)> = (0..=self.total_steps)
            .step_by(stride as usize)
            .map(|s| (s, self.lr_at(s)))
            .collect();
        if rows.last().map(|r| r.0) != Some(self.total_steps) {
            rows.push((self.total_steps, self.lr_at(self.total_steps)));
        }
        Ok(rows)
    }

    /// CSV with a `step,lr` header.
    pub fn dump_csv(&self, stride: u64) -> Result<alloc::string::String> {
        use core::fmt::Write;
        let mut out = alloc::string::String::from("step,lr\n");
        for (step, lr) in self.dump(stride)? {
            let _ = writeln!(out, "{step},{lr:e}");
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_points() {
        let s = LrSchedule::default();
        assert_eq!(s.lr_at(0), 0.0);
        assert!((s.lr_at(10_000) - 7e-4).abs() < 1e-12);
        assert!(s.lr_at(100_000).abs() < 1e-12);
        assert!((s.lr_at(55_000) - 3.5e-4).abs() < 1e-12);
        assert!((s.lr_at(5_000) - 3.5e-4).abs() < 1e-12);
        assert_eq!(s.lr_at(250_000), 0.0);
    }

    #[test]
    fn quadratic_decay() {
        let s = LrSchedule {
            decay_power: 2.0,
            ..LrSchedule::default()
        };
        assert!((s.lr_at(55_000) - 7e-4 * 0.25).abs() < 1e-15);
    }

    #[test]
    fn end_lr_floor() {
        let s = LrSchedule {
            end_lr: 1e-5,
            ..LrSchedule::default()
        };
        assert!((s.lr_at(100_000) - 1e-5).abs() < 1e-15);
        assert!((s.lr_at(10_000) - 7e-4).abs() < 1e-15);
    }

    #[test]
    fn dump_with_full_stride_has_two_rows() {
        let s = LrSchedule::default();
        let rows = s.dump(100_000).unwrap();
        assert_eq!(rows, [(0, 0.0), (100_000, 0.0)]);
        assert_eq!(s.dump(30_000).unwrap().last().unwrap().0, 100_000);
        assert!(s.dump(0).is_err());
    }

    #[test]
    fn csv_header() {
        let csv = LrSchedule::default().dump_csv(50_000).unwrap();
        assert_eq!(csv.lines().next(), Some("step,lr"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn validation() {
        assert!(LrSchedule::default().validate().is_ok());
        let bad = LrSchedule {
            warmup_steps: 100_000,
            ..LrSchedule::default()
        };
        assert!(bad.validate().is_err());
        let bad = LrSchedule {
            peak_lr: 0.0,
            ..LrSchedule::default()
        };
        assert!(bad.validate().is_err());
    }
}
