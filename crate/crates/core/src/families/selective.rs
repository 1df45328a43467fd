//! Selective regression: predict the mean `f(x)` when the spread `ḡ(x)` is at
//! most `λ`, abstain otherwise. The controlled loss is `(y − f(x))²` on
//! predictions and `0` on abstentions, which makes it nondecreasing in `λ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectiveOutput {
    Value(f64),
    Abstain,
}

impl SelectiveOutput {
    pub fn is_abstain(&self) -> bool {
        matches!(self, Self::Abstain)
    }
}

/// A model producing a point prediction and a nonnegative uncertainty score.
pub trait MeanSpread {
    fn mean_spread(&self, x: &[f64]) -> Result<(f64, f64)>;
}

impl<M: MeanSpread + ?Sized> MeanSpread for &M {
    fn mean_spread(&self, x: &[f64]) -> Result<(f64, f64)> {
        (**self).mean_spread(x)
    }
}

#[derive(Debug, Clone)]
pub struct SelectivePredictor<M> {
    pub model: M,
    pub threshold: f64,
}

impl<M: MeanSpread> SelectivePredictor<M> {
    pub fn new(model: M, threshold: f64) -> Self {
        Self { model, threshold }
    }

    pub fn predict(&self, x: &[f64]) -> Result<SelectiveOutput> {
        selective_predict(self, x)
    }
}

/// Inclusive at the boundary: `spread == threshold` predicts.
pub fn select(mean: f64, spread: f64, threshold: f64) -> SelectiveOutput {
    if spread <= threshold {
        SelectiveOutput::Value(mean)
    } else {
        SelectiveOutput::Abstain
    }
}

pub fn selective_predict<M: MeanSpread>(predictor: &SelectivePredictor<M>, x: &[f64]) -> Result<SelectiveOutput> {
    let (mean, spread) = predictor.model.mean_spread(x)?;
    Ok(select(mean, spread, predictor.threshold))
}

pub fn selective_loss(y: f64, output: &SelectiveOutput) -> f64 {
    match output {
        SelectiveOutput::Value(f) => (y - f) * (y - f),
        SelectiveOutput::Abstain => 0.0,
    }
}

/// Losses of one sample across scalar thresholds.
pub fn selective_loss_row(y: f64, mean: f64, spread: f64, thresholds: &[f64]) -> Vec<f64> {
    thresholds
        .iter()
        .map(|&t| selective_loss(y, &select(mean, spread, t)))
        .collect()
}

/// Componentwise selective prediction; target `j` uses threshold `λ_j`.
pub fn multi_selective_predict(means: &[f64], spreads: &[f64], thresholds: &[f64]) -> Result<Vec<SelectiveOutput>> {
    let m = means.len();
    for len in [spreads.len(), thresholds.len()] {
        if len != m {
            return Err(Error::DimensionMismatch { expected: m, got: len });
        }
    }
    Ok((0..m).map(|j| select(means[j], spreads[j], thresholds[j])).collect())
}

pub fn multi_selective_loss(ys: &[f64], outputs: &[SelectiveOutput]) -> Result<Vec<f64>> {
    if ys.len() != outputs.len() {
        return Err(Error::DimensionMismatch { expected: outputs.len(), got: ys.len() });
    }
    Ok(ys.iter().zip(outputs).map(|(&y, o)| selective_loss(y, o)).collect())
}

/// `max_j L_j`, the statistic checked for joint control.
pub fn max_loss(losses: &[f64]) -> f64 {
    losses.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Fraction of abstentions.
pub fn miscoverage(outputs: &[SelectiveOutput]) -> Result<f64> {
    if outputs.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(outputs.iter().filter(|o| o.is_abstain()).count() as f64 / outputs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(f64, f64);

    impl MeanSpread for Fixed {
        fn mean_spread(&self, _: &[f64]) -> Result<(f64, f64)> {
            Ok((self.0, self.1))
        }
    }

    #[test]
    fn zero_spread_always_predicts() {
        for t in [0.0, 0.3, 1.0] {
            let p = SelectivePredictor::new(Fixed(0.7, 0.0), t);
            assert_eq!(p.predict(&[]).unwrap(), SelectiveOutput::Value(0.7));
        }
        let p = SelectivePredictor::new(Fixed(0.7, 0.99), 1.0);
        assert_eq!(p.predict(&[]).unwrap(), SelectiveOutput::Value(0.7));
    }

    #[test]
    fn three_member_ensemble_by_hand() {
        // members {0.2, 0.4, 0.6}: mean 0.4, population std sqrt(0.08/3)
        let members = [0.2, 0.4, 0.6];
        let mean = members.iter().sum::<f64>() / 3.0;
        let std = (members.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0).sqrt();
        assert!((std - 0.163_299_316).abs() < 1e-6);
        assert_eq!(select(mean, std, 0.16), SelectiveOutput::Abstain);
        assert_eq!(select(mean, std, 0.17), SelectiveOutput::Value(mean));
        assert_eq!(select(mean, std, std), SelectiveOutput::Value(mean));
    }

    #[test]
    fn loss_examples() {
        assert_eq!(selective_loss(0.9, &SelectiveOutput::Abstain), 0.0);
        assert_eq!(selective_loss(0.4, &SelectiveOutput::Value(0.4)), 0.0);
        assert!((selective_loss(0.9, &SelectiveOutput::Value(0.4)) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn loss_row_is_step_up_in_threshold() {
        let row = selective_loss_row(0.9, 0.4, 0.3, &[0.0, 0.2, 0.3, 0.5]);
        assert_eq!(row[..2], [0.0, 0.0]);
        assert!((row[2] - 0.25).abs() < 1e-15 && (row[3] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn multi_target_componentwise() {
        let outs = multi_selective_predict(&[0.2, 0.8], &[0.1, 0.3], &[0.2, 0.2]).unwrap();
        assert_eq!(outs, vec![SelectiveOutput::Value(0.2), SelectiveOutput::Abstain]);
        let losses = multi_selective_loss(&[0.5, 0.0], &outs).unwrap();
        assert!((losses[0] - 0.09).abs() < 1e-15);
        assert_eq!(losses[1], 0.0);
        assert!((max_loss(&losses) - 0.09).abs() < 1e-15);
        assert!(multi_selective_predict(&[0.2], &[0.1, 0.2], &[0.1]).is_err());

        let single = multi_selective_predict(&[0.3], &[0.05], &[0.1]).unwrap();
        assert_eq!(single[0], select(0.3, 0.05, 0.1));
    }

    #[test]
    fn miscoverage_counts_abstentions() {
        let mut outs = vec![SelectiveOutput::Value(0.1); 7];
        outs.extend([SelectiveOutput::Abstain; 3]);
        assert!((miscoverage(&outs).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(miscoverage(&outs[..7]).unwrap(), 0.0);
        assert!(miscoverage(&[]).is_err());
    }
}
