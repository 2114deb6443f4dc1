//! Classification loss over softmax scores.
//!
//! The loss carries a `1/S` factor in front of the one-hot cross entropy:
//! `L = -(1/S) * log(clamp(score[label], 1e-12, 1))`. The factor only
//! rescales the objective but is kept because it interacts with the
//! configured peak learning rate.

use super::mat::{Mat, Real};
use crate::{Error, Result};

/// Lower clamp applied before the logarithm.
pub const SCORE_CLAMP: f64 = 1e-12;
/// Tolerance on the "scores sum to 1" precondition.
pub const SCORE_SUM_TOL: f64 = 1e-5;

/// Loss value plus whether the clamp was active (a non-differentiable
/// point, reported so gradient checks can exclude it).
#[derive(Clone, Copy, Debug)]
pub struct CeOutcome {
    pub loss: f64,
    pub clamped: bool,
}

fn validate_scores(scores: &[f64], label: usize, s: usize) -> Result<()> {
    if label >= s {
        return Err(Error::Config(format!(
            "label {label} out of range for {s} classes"
        )));
    }
    if scores.len() != s {
        return Err(Error::Shape(format!(
            "expected {s} scores, got {}",
            scores.len()
        )));
    }
    let sum: f64 = scores.iter().sum();
    if (sum - 1.0).abs() > SCORE_SUM_TOL {
        return Err(Error::Numeric(format!(
            "scores sum to {sum}, expected 1 within {SCORE_SUM_TOL}"
        )));
    }
    if scores.iter().any(|&v| v < 0.0) {
        return Err(Error::Numeric("negative class score".into()));
    }
    Ok(())
}

/// Cross entropy of a softmax score vector against a class index.
pub fn cross_entropy(scores: &[f32], label: usize, s: usize) -> Result<f64> {
    let scores: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
    Ok(cross_entropy_full(&scores, label, s)?.loss)
}

pub fn cross_entropy_full(scores: &[f64], label: usize, s: usize) -> Result<CeOutcome> {
    validate_scores(scores, label, s)?;
    let raw = scores[label];
    let clamped_val = raw.clamp(SCORE_CLAMP, 1.0);
    Ok(CeOutcome {
        loss: -clamped_val.ln() / s as f64,
        clamped: raw <= SCORE_CLAMP || raw >= 1.0,
    })
}

/// Loss and its gradient with respect to the score vector (a `1 x S` seed
/// for the reverse pass). Outside the clamp interval the derivative is zero.
pub fn cross_entropy_grad<T: Real>(
    scores: &Mat<T>,
    label: usize,
    s: usize,
) -> Result<(CeOutcome, Mat<T>)> {
    if scores.rows() != 1 {
        return Err(Error::Shape(format!(
            "expected a 1x{s} score row, got {}x{}",
            scores.rows(),
            scores.cols()
        )));
    }
    let row: Vec<f64> = scores.row(0).iter().map(|v| v.to_f64()).collect();
    let outcome = cross_entropy_full(&row, label, s)?;
    let mut grad = Mat::zeros(1, s);
    if !outcome.clamped {
        grad.set(0, label, T::from_f64(-1.0 / (s as f64 * row[label])));
    }
    Ok((outcome, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let scores = [0.0f32, 1.0, 0.0];
        assert_eq!(cross_entropy(&scores, 1, 3).unwrap(), 0.0);
    }

    #[test]
    fn uniform_six_way_scores() {
        // direct evaluation: -(1/6) * ln(1/6) = ln(6)/6
        let scores = [1.0f32 / 6.0; 6];
        let loss = cross_entropy(&scores, 2, 6).unwrap();
        let expected = 6.0f64.ln() / 6.0;
        assert!((loss - expected).abs() < 1e-7, "{loss} vs {expected}");
        assert!((expected - 0.298_626_578_2).abs() < 1e-9);
    }

    #[test]
    fn zero_score_clamps_to_finite_loss() {
        let scores = [1.0f32, 0.0];
        let out = cross_entropy_full(&[1.0, 0.0], 1, 2).unwrap();
        assert!(out.loss.is_finite());
        assert!(out.clamped);
        let expected = -(1e-12f64).ln() / 2.0;
        assert!((out.loss - expected).abs() < 1e-12);
        assert!(cross_entropy(&scores, 1, 2).unwrap().is_finite());
    }

    #[test]
    fn label_out_of_range_is_an_error() {
        let scores = [0.5f32, 0.5];
        assert!(matches!(
            cross_entropy(&scores, 2, 2),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn score_sum_precondition_enforced() {
        assert!(cross_entropy(&[0.9f32, 0.2], 0, 2).is_err());
        assert!(cross_entropy(&[-0.1f32, 1.1], 0, 2).is_err());
    }

    #[test]
    fn strictly_decreasing_in_label_score() {
        let mut prev = f64::INFINITY;
        for p in [1e-10f64, 1e-6, 1e-3, 0.1, 0.5, 0.9, 1.0] {
            let out = cross_entropy_full(&[p, 1.0 - p], 0, 2).unwrap();
            assert!(out.loss < prev);
            prev = out.loss;
        }
    }
}
