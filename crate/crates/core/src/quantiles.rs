//! Conservative empirical quantiles over finite multisets.
//!
//! The quantile at level `p` of a multiset of `N` values is its `k`-th
//! smallest element with `k = ⌈p·N⌉`, counting duplicates with multiplicity.
//! No interpolation is ever performed: the finite-sample loss guarantee only
//! holds for this order statistic.
//!
//! `p·N` is computed in floating point, so decimal levels such as `0.8` do not
//! multiply out exactly (`0.8 * 5.0` is a hair above 4 in exact arithmetic on
//! the stored double). Products within a relative `1e-9` of an integer are
//! snapped to that integer before taking the ceiling.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const RANK_SNAP: f64 = 1e-9;

/// A quantile level strictly inside `(0, 1)`, typically `1 − δ`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct QuantileLevel(f64);

impl QuantileLevel {
    pub fn new(level: f64) -> Result<Self> {
        if level.is_finite() && level > 0.0 && level < 1.0 {
            Ok(Self(level))
        } else {
            Err(Error::InvalidLevel(level))
        }
    }

    /// The level `1 − δ` for a significance level `δ ∈ (0, 1)`.
    pub fn confidence(delta: f64) -> Result<Self> {
        check_delta(delta)?;
        Self::new(1.0 - delta)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// One-based rank `k = ⌈level·n⌉` of the order statistic, clamped to `[1, n]`.
    pub fn rank(self, n: usize) -> usize {
        ceil_rank(self.0 * n as f64).clamp(1, n.max(1))
    }
}

pub(crate) fn ceil_rank(x: f64) -> usize {
    let nearest = x.round();
    if (x - nearest).abs() <= RANK_SNAP * x.abs().max(1.0) {
        nearest as usize
    } else {
        x.ceil() as usize
    }
}

pub(crate) fn check_delta(delta: f64) -> Result<f64> {
    if delta.is_finite() && delta > 0.0 && delta < 1.0 {
        Ok(delta)
    } else {
        Err(Error::InvalidDelta(delta))
    }
}

/// Upper bound `B` on a loss.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LossBound(f64);

impl LossBound {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() {
            Ok(Self(value))
        } else {
            Err(Error::InvalidConfig(format!("loss bound must be finite, got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Fails with [`Error::BoundViolated`] on the first loss above the bound.
    pub fn check(self, losses: &[f64]) -> Result<()> {
        match losses.iter().find(|&&l| l.is_nan() || l > self.0) {
            Some(&value) if value.is_nan() => Err(Error::Incomparable),
            Some(&value) => Err(Error::BoundViolated { value, bound: self.0 }),
            None => Ok(()),
        }
    }
}

impl Default for LossBound {
    fn default() -> Self {
        Self(1.0)
    }
}

/// A value of a multiset augmented with a point at infinity.
///
/// `Infinite` compares above every `Finite` value without any floating-point
/// infinity arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub enum Augmented<T> {
    Finite(T),
    Infinite,
}

impl<T: Copy> Augmented<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            Augmented::Finite(v) => Some(v),
            Augmented::Infinite => None,
        }
    }
}

/// `k`-th smallest (one-based) element; reorders `values`.
fn select_kth<T: PartialOrd + Copy>(values: &mut [T], k: usize) -> Result<T> {
    if values.iter().any(|v| v.partial_cmp(v).is_none()) {
        return Err(Error::Incomparable);
    }
    let (_, kth, _) = values.select_nth_unstable_by(k - 1, |a, b| {
        a.partial_cmp(b).unwrap_or(Ordering::Equal)
    });
    Ok(*kth)
}

/// The bare conservative order statistic of `values` at `level`.
pub fn conservative_quantile<T: PartialOrd + Copy>(values: &[T], level: QuantileLevel) -> Result<T> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut scratch = values.to_vec();
    select_kth(&mut scratch, level.rank(values.len()))
}

/// `1 − δ` quantile of `losses ∪ {B}`.
pub fn augmented_quantile(losses: &[f64], bound: LossBound, delta: f64) -> Result<f64> {
    let level = QuantileLevel::confidence(delta)?;
    bound.check(losses)?;
    let mut scratch = losses.to_vec();
    Ok(augmented_in_place(&mut scratch, bound, level))
}

/// Augmented quantile over a scratch buffer that is already bound-checked.
///
/// Since `B` dominates every loss, appending it only matters when the rank
/// lands on the `(n+1)`-th position.
pub(crate) fn augmented_in_place(losses: &mut [f64], bound: LossBound, level: QuantileLevel) -> f64 {
    let k = level.rank(losses.len() + 1);
    if k > losses.len() {
        bound.value()
    } else {
        let (_, kth, _) = losses.select_nth_unstable_by(k - 1, f64::total_cmp);
        *kth
    }
}

/// `1 − δ` quantile of all `n+1` losses, without augmentation.
pub fn full_quantile(losses: &[f64], delta: f64) -> Result<f64> {
    let level = QuantileLevel::confidence(delta)?;
    conservative_quantile(losses, level)
}

pub(crate) fn full_in_place(losses: &mut [f64], level: QuantileLevel) -> f64 {
    let k = level.rank(losses.len());
    let (_, kth, _) = losses.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn level(p: f64) -> QuantileLevel {
        QuantileLevel::new(p).unwrap()
    }

    #[test]
    fn conservative_examples() {
        assert_eq!(conservative_quantile(&[0.0, 0.0, 0.0, 1.0], level(0.5)).unwrap(), 0.0);
        assert_eq!(conservative_quantile(&[0.1, 0.2, 0.3, 1.0], level(0.75)).unwrap(), 0.3);
        let with_sentinel = [1.0, 2.0, 3.0, 4.0].map(Augmented::Finite);
        let mut values = with_sentinel.to_vec();
        values.push(Augmented::Infinite);
        assert_eq!(
            conservative_quantile(&values, level(0.8)).unwrap(),
            Augmented::Finite(4.0)
        );
    }

    #[test]
    fn empty_sample_is_an_error() {
        assert!(matches!(
            conservative_quantile::<f64>(&[], level(0.5)),
            Err(Error::EmptySample)
        ));
        assert!(matches!(full_quantile(&[], 0.1), Err(Error::EmptySample)));
    }

    #[test]
    fn nan_is_rejected() {
        assert!(matches!(
            conservative_quantile(&[0.1, f64::NAN], level(0.5)),
            Err(Error::Incomparable)
        ));
    }

    #[test]
    fn level_bounds() {
        assert!(QuantileLevel::new(0.0).is_err());
        assert!(QuantileLevel::new(1.0).is_err());
        assert!(QuantileLevel::confidence(1.5).is_err());
        assert_eq!(level(0.9).rank(10), 9);
        assert_eq!(level(0.8).rank(5), 4);
        assert_eq!(level(1e-6).rank(3), 1);
    }

    #[test]
    fn augmented_examples() {
        let b = LossBound::new(1.0).unwrap();
        assert_eq!(augmented_quantile(&[0.0; 200], b, 0.1).unwrap(), 0.0);
        assert_eq!(augmented_quantile(&[0.1, 0.2, 0.3], b, 0.25).unwrap(), 0.3);
        assert_eq!(augmented_quantile(&[0.5], b, 0.1).unwrap(), 1.0);
    }

    #[test]
    fn augmented_rejects_losses_above_bound() {
        let b = LossBound::new(1.0).unwrap();
        assert!(matches!(
            augmented_quantile(&[0.2, 1.5], b, 0.1),
            Err(Error::BoundViolated { value, .. }) if value == 1.5
        ));
    }

    #[test]
    fn full_examples() {
        assert_eq!(full_quantile(&[0.0; 7], 0.3).unwrap(), 0.0);
        assert_eq!(full_quantile(&[0.1, 0.2, 0.3, 0.4], 0.25).unwrap(), 0.3);
        let b = LossBound::new(1.0).unwrap();
        let losses = [0.4, 0.1, 0.7, 0.2];
        let mut appended = losses.to_vec();
        appended.push(1.0);
        for delta in [0.05, 0.1, 0.25, 0.5, 0.9] {
            assert_eq!(
                augmented_quantile(&losses, b, delta).unwrap(),
                full_quantile(&appended, delta).unwrap()
            );
        }
    }

    proptest! {
        #[test]
        fn monotone_in_level(values in prop::collection::vec(-10.0f64..10.0, 1..40),
                             a in 0.01f64..0.99, b in 0.01f64..0.99) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(conservative_quantile(&values, level(lo)).unwrap()
                <= conservative_quantile(&values, level(hi)).unwrap());
        }

        #[test]
        fn permutation_invariant(mut values in prop::collection::vec(-10.0f64..10.0, 1..40),
                                 p in 0.01f64..0.99, seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let before = conservative_quantile(&values, level(p)).unwrap();
            values.shuffle(&mut crate::seeding::rng(seed, &[]));
            prop_assert_eq!(before, conservative_quantile(&values, level(p)).unwrap());
        }

        #[test]
        fn augmented_dominates_full(losses in prop::collection::vec(0.0f64..1.0, 1..40),
                                    x in 0.0f64..1.0, delta in 0.01f64..0.99) {
            let b = LossBound::new(1.0).unwrap();
            let mut extended = losses.clone();
            extended.push(x);
            prop_assert!(augmented_quantile(&losses, b, delta).unwrap()
                >= full_quantile(&extended, delta).unwrap());
        }

        #[test]
        fn augmented_monotone_in_losses_and_delta(losses in prop::collection::vec(0.0f64..1.0, 1..40),
                                                  idx in any::<prop::sample::Index>(),
                                                  bump in 0.0f64..1.0,
                                                  d1 in 0.01f64..0.99, d2 in 0.01f64..0.99) {
            let b = LossBound::new(2.0).unwrap();
            let base = augmented_quantile(&losses, b, d1).unwrap();
            let mut raised = losses.clone();
            raised[idx.index(losses.len())] += bump;
            prop_assert!(augmented_quantile(&raised, b, d1).unwrap() >= base);
            let (small, large) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(augmented_quantile(&losses, b, small).unwrap()
                >= augmented_quantile(&losses, b, large).unwrap());
        }
    }
}
