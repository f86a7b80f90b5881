use crate::error::{Error, Result};

/// Temperature softmax `w_i = exp(s_i / tau) / sum_j exp(s_j / tau)`.
///
/// The maximum score is subtracted before exponentiation.
pub fn softmax_temperature(scores: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    if scores.is_empty() {
        return Err(Error::Argument("softmax over an empty score list".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric {
            location: "softmax_temperature".into(),
            message: "non-finite score".into(),
        });
    }
    Ok(softmax_unchecked(scores, tau))
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::Parameter(format!(
            "softmax temperature must be positive and finite, got {tau}"
        )));
    }
    Ok(())
}

pub(crate) fn softmax_unchecked(scores: &[f64], tau: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| ((s - max) / tau).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
