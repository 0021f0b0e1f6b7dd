//! Spectral response functions and the cube→RGB projection.

use crate::autodiff::{Element, Tensor};
use crate::error::{Error, Result};

use super::cube::HsiCube;

/// Per-channel sensitivity weights projecting a spectrum to RGB. Weights
/// are non-negative and normalized to sum to 1 per channel, so projections
/// of [0,1] data stay in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResponse {
    weights: [Vec<f32>; 3], // R, G, B
}

impl SpectralResponse {
    /// Normalize raw non-negative weights into a response.
    pub fn new(red: Vec<f32>, green: Vec<f32>, blue: Vec<f32>) -> Result<Self> {
        let bands = red.len();
        if bands == 0 || green.len() != bands || blue.len() != bands {
            return Err(Error::Input(format!(
                "response channels must share a positive length ({}, {}, {})",
                red.len(),
                green.len(),
                blue.len()
            )));
        }
        let mut weights = [red, green, blue];
        for channel in &mut weights {
            if channel.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::Input(
                    "response weights must be finite and non-negative".to_string(),
                ));
            }
            let sum: f64 = channel.iter().map(|&w| w as f64).sum();
            if sum <= 0.0 {
                return Err(Error::Input(
                    "each response channel needs positive total weight".to_string(),
                ));
            }
            for w in channel.iter_mut() {
                *w = (*w as f64 / sum) as f32;
            }
        }
        Ok(SpectralResponse { weights })
    }

    /// Synthetic default: Gaussian bumps centered at 620/550/450 nm
    /// (R/G/B), σ = 40 nm, discretized on the given wavelengths and
    /// normalized.
    pub fn gaussian_default(wavelengths: &[f32]) -> Result<Self> {
        let bump = |center: f64| -> Vec<f32> {
            wavelengths
                .iter()
                .map(|&wl| {
                    let d = (wl as f64 - center) / 40.0;
                    (-0.5 * d * d).exp() as f32
                })
                .collect()
        };
        SpectralResponse::new(bump(620.0), bump(550.0), bump(450.0))
    }

    pub fn bands(&self) -> usize {
        self.weights[0].len()
    }

    /// Channel weights in R, G, B order.
    pub fn channel(&self, c: usize) -> &[f32] {
        &self.weights[c]
    }
}

/// Project a cube to RGB: `X_c(p) = Σ_n R(p, λ_n)·Φ_c(λ_n)`. Output is a
/// `[3 × H × W]` tensor in the requested precision.
pub fn project_rgb<E: Element>(cube: &HsiCube, resp: &SpectralResponse) -> Result<Tensor<E>> {
    if resp.bands() != cube.bands() {
        return Err(Error::dimension(
            "project_rgb",
            format!("{} response bands", cube.bands()),
            format!("{}", resp.bands()),
        ));
    }
    let plane = cube.width() * cube.height();
    let mut out = vec![E::zero(); 3 * plane];
    for c in 0..3 {
        let dst = &mut out[c * plane..(c + 1) * plane];
        for n in 0..cube.bands() {
            let w = E::from_f32(resp.channel(c)[n]);
            let band = &cube.data()[n * plane..(n + 1) * plane];
            for (d, &v) in dst.iter_mut().zip(band) {
                *d += E::from_f32(v) * w;
            }
        }
    }
    Tensor::from_vec(vec![3, cube.height(), cube.width()], out)
}
