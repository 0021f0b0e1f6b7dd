//! Periodic spatial encoding of pixel coordinates.
//!
//! A normalized coordinate `(x, y) ∈ [0,1]²` is lifted to sinusoids at N
//! geometrically spaced frequencies: frequency k contributes
//! `[cos(2^k·π·x), sin(2^k·π·x), cos(2^k·π·y), sin(2^k·π·y)]`, and the full
//! encoding concatenates k = 0…N−1 for a 4N-dimensional vector. Disabling
//! the encoding passes the raw normalized coordinates through instead (the
//! ablation pathway).

use crate::autodiff::{Element, Tensor};
use crate::error::{Error, Result};

/// Number of frequencies and the on/off switch for the encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodingConfig {
    n_freqs: usize,
    enabled: bool,
}

impl EncodingConfig {
    /// Encoding with N frequencies. N = 0 degrades to the disabled pathway.
    pub fn new(n_freqs: usize) -> Self {
        EncodingConfig {
            n_freqs,
            enabled: n_freqs > 0,
        }
    }

    /// Raw-coordinate pathway: pixels are described by `[x, y]` alone.
    pub fn disabled() -> Self {
        EncodingConfig {
            n_freqs: 0,
            enabled: false,
        }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn n_freqs(&self) -> usize {
        self.n_freqs
    }

    /// Length of one encoded coordinate: 4N enabled, 2 disabled.
    pub fn dim(&self) -> usize {
        if self.enabled {
            4 * self.n_freqs
        } else {
            2
        }
    }
}

/// One encoded coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedCoords {
    pub values: Vec<f64>,
}

/// Encode a normalized coordinate. Coordinates follow the pixel-center
/// convention `((col+0.5)/W, (row+0.5)/H)` and must lie in `[0,1]`.
pub fn encode_coord(p: (f64, f64), cfg: &EncodingConfig) -> Result<EncodedCoords> {
    let (x, y) = p;
    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
        return Err(Error::Domain(format!(
            "coordinate ({x}, {y}) outside the normalized [0,1]² domain"
        )));
    }
    let mut values = Vec::with_capacity(cfg.dim());
    if !cfg.enabled {
        values.push(x);
        values.push(y);
        return Ok(EncodedCoords { values });
    }
    for k in 0..cfg.n_freqs {
        let f = (1u64 << k) as f64 * std::f64::consts::PI;
        values.push((f * x).cos());
        values.push((f * x).sin());
        values.push((f * y).cos());
        values.push((f * y).sin());
    }
    Ok(EncodedCoords { values })
}

/// Encode every pixel center of a W×H grid into an `[H × W × dim]` tensor.
pub fn encode_grid<E: Element>(w: usize, h: usize, cfg: &EncodingConfig) -> Result<Tensor<E>> {
    if w == 0 || h == 0 {
        return Err(Error::Config(format!("encode_grid needs W,H ≥ 1, got {w}×{h}")));
    }
    let dim = cfg.dim();
    let mut data = Vec::with_capacity(h * w * dim);
    for row in 0..h {
        let y = (row as f64 + 0.5) / h as f64;
        for col in 0..w {
            let x = (col as f64 + 0.5) / w as f64;
            let coords = encode_coord((x, y), cfg)?;
            data.extend(coords.values.iter().map(|&v| E::from_f64(v)));
        }
    }
    Tensor::from_vec(vec![h, w, dim], data)
}
