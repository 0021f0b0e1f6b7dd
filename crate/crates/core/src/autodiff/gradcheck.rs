//! Finite-difference gradient verification. Runs in 64-bit precision only;
//! the signature enforces that.

use crate::error::{Error, Result};

/// A scalar function of a flat parameter vector that can also report its
/// analytic gradient.
pub trait ScalarObjective {
    fn value(&self, theta: &[f64]) -> Result<f64>;
    fn value_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Build an objective from two closures.
pub struct FnObjective<V, G>
where
    V: Fn(&[f64]) -> Result<f64>,
    G: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    pub value: V,
    pub value_and_grad: G,
}

impl<V, G> ScalarObjective for FnObjective<V, G>
where
    V: Fn(&[f64]) -> Result<f64>,
    G: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn value(&self, theta: &[f64]) -> Result<f64> {
        (self.value)(theta)
    }

    fn value_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        (self.value_and_grad)(theta)
    }
}

/// Compare the analytic gradient of `f` at `theta` against central finite
/// differences with step `h`. Returns the maximum over coordinates of
/// `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check(f: &dyn ScalarObjective, theta: &[f64], h: f64) -> Result<f64> {
    if h <= 0.0 {
        return Err(Error::Domain(format!("grad_check step h={h} must be > 0")));
    }
    let (value, analytic) = f.value_and_grad(theta)?;
    if !value.is_finite() || analytic.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric(
            "non-finite value or gradient at the expansion point".to_string(),
        ));
    }
    if analytic.len() != theta.len() {
        return Err(Error::dimension(
            "grad_check",
            format!("gradient of length {}", theta.len()),
            format!("length {}", analytic.len()),
        ));
    }

    let mut probe = theta.to_vec();
    let mut max_rel = 0.0f64;
    for i in 0..theta.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f.value(&probe)?;
        probe[i] = orig - h;
        let minus = f.value(&probe)?;
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite probe value at coordinate {i}"
            )));
        }
        let numeric = (plus - minus) / (2.0 * h);
        let denom = 1.0f64.max(analytic[i].abs()).max(numeric.abs());
        let rel = (analytic[i] - numeric).abs() / denom;
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}
