//! Random train/calibration/test partitions.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitPlan {
    /// Fraction of all samples held out for testing.
    pub test_frac: f64,
    /// Fraction of the remaining samples used for calibration; the rest trains.
    pub calib_frac: f64,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self { test_frac: 0.2, calib_frac: 0.2, repeats: 10, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub calib: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        let ok = |f: f64| f.is_finite() && f > 0.0 && f < 1.0;
        if !ok(self.test_frac) || !ok(self.calib_frac) {
            return Err(Error::InvalidConfig(format!(
                "split fractions must lie in (0, 1), got test={} calib={}",
                self.test_frac, self.calib_frac
            )));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Partition `0..n` for repeat `repeat`. Each part keeps at least one index.
    pub fn split(&self, n: usize, repeat: usize) -> Result<Split> {
        self.validate()?;
        if n < 3 {
            return Err(Error::InvalidConfig(format!("cannot split {n} samples three ways")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut seeding::rng(self.seed, &[repeat as u64]));
        let n_test = ((n as f64 * self.test_frac).round() as usize).clamp(1, n - 2);
        let rest = n - n_test;
        let n_calib = ((rest as f64 * self.calib_frac).round() as usize).clamp(1, rest - 1);
        let test = idx[..n_test].to_vec();
        let calib = idx[n_test..n_test + n_calib].to_vec();
        let train = idx[n_test + n_calib..].to_vec();
        Ok(Split { train, calib, test })
    }
}
