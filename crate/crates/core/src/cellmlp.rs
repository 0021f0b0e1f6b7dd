//! Per-cell implicit representation: a five-hidden-layer MLP whose
//! parameters arrive as one flat vector predicted by the hypernetwork.
//!
//! The flat layout is fixed for checkpoint stability: layer 0 weights
//! (row-major, fan_in × fan_out), layer 0 bias, then layer 1, and so on
//! through the output layer. Weights are scaled by `1/sqrt(fan_in)` when
//! unpacked so the predicted vectors can live at unit magnitude.

use crate::autodiff::{
    dense_forward, leaky_relu, narrow, permute_to_chw, reshape, scale, sigmoid, Element, Tensor,
};
use crate::error::{Error, Result};

/// Negative-branch slope of the Leaky-ReLU activations.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Number of hidden layers in every cell MLP.
pub const N_HIDDEN: usize = 5;

/// Slice positions of one affine layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlice {
    pub weight_offset: usize,
    pub bias_offset: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

/// Dimensions and flat-vector offsets of the cell MLP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpLayout {
    pub in_dim: usize,
    pub hidden_width: usize,
    pub n_hidden: usize,
    pub out_dim: usize,
    layers: Vec<LayerSlice>,
    total: usize,
}

impl MlpLayout {
    /// Layout for `in_dim → hidden×5 → out_dim`.
    pub fn new(in_dim: usize, hidden_width: usize, out_dim: usize) -> Result<Self> {
        if in_dim == 0 || hidden_width == 0 || out_dim == 0 {
            return Err(Error::Config(format!(
                "mlp layout dimensions must be positive (in {in_dim}, hidden {hidden_width}, out {out_dim})"
            )));
        }
        let mut layers = Vec::with_capacity(N_HIDDEN + 1);
        let mut offset = 0;
        let mut fan_in = in_dim;
        for layer in 0..=N_HIDDEN {
            let fan_out = if layer == N_HIDDEN { out_dim } else { hidden_width };
            let weight_offset = offset;
            let bias_offset = offset + fan_in * fan_out;
            layers.push(LayerSlice {
                weight_offset,
                bias_offset,
                fan_in,
                fan_out,
            });
            offset = bias_offset + fan_out;
            fan_in = fan_out;
        }
        Ok(MlpLayout {
            in_dim,
            hidden_width,
            n_hidden: N_HIDDEN,
            out_dim,
            layers,
            total: offset,
        })
    }

    /// Total scalar count of the flat parameter vector.
    pub fn total_params(&self) -> usize {
        self.total
    }

    pub fn layers(&self) -> &[LayerSlice] {
        &self.layers
    }
}

/// Unpacked per-layer weight matrices and bias vectors, ready for
/// [`mlp_forward`].
pub struct UnpackedMlp<E: Element> {
    pub layers: Vec<(Tensor<E>, Tensor<E>)>,
}

/// Slice a flat cell parameter vector into per-layer weights and biases.
/// Weights are scaled by `1/sqrt(fan_in)`.
pub fn unpack<E: Element>(flat: &Tensor<E>, layout: &MlpLayout) -> Result<UnpackedMlp<E>> {
    if flat.shape() != [layout.total] {
        return Err(Error::Layout(format!(
            "flat parameter vector has shape {:?}, layout requires [{}]",
            flat.shape(),
            layout.total
        )));
    }
    let mut layers = Vec::with_capacity(layout.layers.len());
    for ls in &layout.layers {
        let w_flat = narrow(flat, ls.weight_offset, ls.fan_in * ls.fan_out)?;
        let w_scaled = scale(&w_flat, 1.0 / (ls.fan_in as f64).sqrt())?;
        let w = reshape(&w_scaled, vec![ls.fan_in, ls.fan_out])?;
        let b = narrow(flat, ls.bias_offset, ls.fan_out)?;
        layers.push((w, b));
    }
    Ok(UnpackedMlp { layers })
}

/// Inverse of [`unpack`] on plain values: re-flatten per-layer weights and
/// biases, undoing the `1/sqrt(fan_in)` weight scaling.
pub fn pack<E: Element>(layers: &[(Vec<E>, Vec<E>)], layout: &MlpLayout) -> Result<Vec<E>> {
    if layers.len() != layout.layers.len() {
        return Err(Error::Layout(format!(
            "expected {} layers, got {}",
            layout.layers.len(),
            layers.len()
        )));
    }
    let mut flat = vec![E::zero(); layout.total];
    for (ls, (w, b)) in layout.layers.iter().zip(layers) {
        if w.len() != ls.fan_in * ls.fan_out || b.len() != ls.fan_out {
            return Err(Error::Layout(format!(
                "layer buffers {}×{} do not match slice ({} weights, {} biases)",
                w.len(),
                b.len(),
                ls.fan_in * ls.fan_out,
                ls.fan_out
            )));
        }
        let gain = E::from_f64((ls.fan_in as f64).sqrt());
        for (dst, &v) in flat[ls.weight_offset..ls.bias_offset].iter_mut().zip(w) {
            *dst = v * gain;
        }
        flat[ls.bias_offset..ls.bias_offset + ls.fan_out].copy_from_slice(b);
    }
    Ok(flat)
}

/// Run a batch of encoded pixels through the cell MLP: five hidden
/// affine + Leaky-ReLU layers, then an affine layer squashed to (0,1) by a
/// sigmoid.
pub fn mlp_forward<E: Element>(x: &Tensor<E>, params: &UnpackedMlp<E>) -> Result<Tensor<E>> {
    let n_layers = params.layers.len();
    let mut h = x.clone();
    for (idx, (w, b)) in params.layers.iter().enumerate() {
        let a = dense_forward(&h, w, b)?;
        h = if idx + 1 < n_layers {
            leaky_relu(&a, LEAKY_SLOPE)?
        } else {
            sigmoid(&a)?
        };
    }
    Ok(h)
}

/// Evaluate all pixels of one cell: rows of `[R, G, B, γ(p)]` are batched
/// through the MLP and rearranged into an `[L × h × w]` block. The encoding
/// rows must already carry the pixels' patch-global coordinates.
pub fn evaluate_patch<E: Element>(
    x_patch: &Tensor<E>,
    enc: &Tensor<E>,
    flat: &Tensor<E>,
    layout: &MlpLayout,
) -> Result<Tensor<E>> {
    let xs = x_patch.shape();
    let es = enc.shape();
    if xs.len() != 3 || xs[0] != 3 {
        return Err(Error::dimension(
            "evaluate_patch",
            "[3×h×w] RGB patch".to_string(),
            format!("{xs:?}"),
        ));
    }
    let (h, w) = (xs[1], xs[2]);
    if es.len() != 3 || es[0] != h || es[1] != w {
        return Err(Error::dimension(
            "evaluate_patch",
            format!("[{h}×{w}×dim] encodings"),
            format!("{es:?}"),
        ));
    }
    let enc_dim = es[2];
    let in_dim = 3 + enc_dim;
    if layout.in_dim != in_dim {
        return Err(Error::dimension(
            "evaluate_patch",
            format!("layout in_dim {}", layout.in_dim),
            format!("3 + {enc_dim}"),
        ));
    }

    let hw = h * w;
    let mut rows = Vec::with_capacity(hw * in_dim);
    let xd = x_patch.data();
    let ed = enc.data();
    for p in 0..hw {
        rows.push(xd[p]); // R plane
        rows.push(xd[hw + p]); // G plane
        rows.push(xd[2 * hw + p]); // B plane
        rows.extend_from_slice(&ed[p * enc_dim..(p + 1) * enc_dim]);
    }
    let input = Tensor::from_vec(vec![hw, in_dim], rows)?;

    let unpacked = unpack(flat, layout)?;
    let spectra = mlp_forward(&input, &unpacked)?;
    permute_to_chw(&spectra, h, w)
}
