use crate::error::{Error, Result};

use super::element::Element;

/// First/second moment buffers and step counter for the Adam optimizer.
#[derive(Debug, Clone)]
pub struct AdamState<E: Element> {
    pub step_count: u64,
    pub m: Vec<E>,
    pub v: Vec<E>,
    pub beta1: E,
    pub beta2: E,
    pub epsilon: E,
}

impl<E: Element> AdamState<E> {
    /// Fresh state with the usual defaults (β1=0.9, β2=0.999, ε=1e−8).
    pub fn new(len: usize) -> Self {
        AdamState {
            step_count: 0,
            m: vec![E::zero(); len],
            v: vec![E::zero(); len],
            beta1: E::from_f64(0.9),
            beta2: E::from_f64(0.999),
            epsilon: E::from_f64(1e-8),
        }
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step<E: Element>(
    params: &mut [E],
    grads: &[E],
    state: &mut AdamState<E>,
    lr: E,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || state.m.len() != state.v.len()
    {
        return Err(Error::dimension(
            "adam_step",
            format!("{} parameters", params.len()),
            format!(
                "{} grads, {} m, {} v",
                grads.len(),
                state.m.len(),
                state.v.len()
            ),
        ));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite gradient in adam_step".to_string()));
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let one = E::one();
    let bc1 = one - state.beta1.powi(t);
    let bc2 = one - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);

    for ((p, &g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
