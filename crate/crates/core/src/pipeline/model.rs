//! Architecture description, the full per-patch forward pass, and tiled
//! full-image reconstruction.

use crate::autodiff::{stitch_grid, Element, ParamStore, Tensor};
use crate::cellmlp::{evaluate_patch, MlpLayout};
use crate::dataio::HsiCube;
use crate::encoding::{encode_grid, EncodingConfig};
use crate::error::{Error, Result};
use crate::hypernet::{build_grid, HyperNetConfig, HyperNetWeights, DEFAULT_CHANNELS};

use super::checkpoint::Checkpoint;

/// Resolved architecture: grid factor, patch size, encoding, cell MLP
/// layout, extractor widths, and the spectral axis of the output cubes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    encoding: EncodingConfig,
    hypernet: HyperNetConfig,
    wavelengths: Vec<f32>,
}

impl ModelSpec {
    pub fn new(
        grid_factor: usize,
        patch_size: usize,
        n_freqs: usize,
        hidden_width: usize,
        wavelengths: Vec<f32>,
        base_channels: &[usize],
    ) -> Result<Self> {
        if wavelengths.is_empty() {
            return Err(Error::Config("model needs at least one band".to_string()));
        }
        let encoding = EncodingConfig::new(n_freqs);
        let layout = MlpLayout::new(3 + encoding.dim(), hidden_width, wavelengths.len())?;
        let hypernet =
            HyperNetConfig::with_channels(grid_factor, patch_size, layout, base_channels)?;
        Ok(ModelSpec {
            encoding,
            hypernet,
            wavelengths,
        })
    }

    pub fn with_defaults(
        grid_factor: usize,
        patch_size: usize,
        n_freqs: usize,
        hidden_width: usize,
        wavelengths: Vec<f32>,
    ) -> Result<Self> {
        Self::new(
            grid_factor,
            patch_size,
            n_freqs,
            hidden_width,
            wavelengths,
            &DEFAULT_CHANNELS,
        )
    }

    pub fn encoding(&self) -> &EncodingConfig {
        &self.encoding
    }

    pub fn hypernet(&self) -> &HyperNetConfig {
        &self.hypernet
    }

    pub fn mlp_layout(&self) -> &MlpLayout {
        self.hypernet.mlp_layout()
    }

    pub fn grid_factor(&self) -> usize {
        self.hypernet.grid_factor()
    }

    pub fn patch_size(&self) -> usize {
        self.hypernet.patch_size()
    }

    pub fn bands(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn wavelengths(&self) -> &[f32] {
        &self.wavelengths
    }

    /// Coordinate encodings for one patch, cached by callers that run many
    /// patches.
    pub fn patch_encodings<E: Element>(&self) -> Result<Tensor<E>> {
        encode_grid(self.patch_size(), self.patch_size(), &self.encoding)
    }
}

/// Full model pass over one patch: hypernetwork → parameter grid → per-cell
/// MLP evaluation → stitched `[L × P × P]` reconstruction.
pub fn forward_full<E: Element>(
    x: &Tensor<E>,
    spec: &ModelSpec,
    weights: &HyperNetWeights<E>,
) -> Result<Tensor<E>> {
    let enc = spec.patch_encodings::<E>()?;
    forward_full_with_enc(x, &enc, spec, weights)
}

/// [`forward_full`] with precomputed patch encodings.
pub fn forward_full_with_enc<E: Element>(
    x: &Tensor<E>,
    enc: &Tensor<E>,
    spec: &ModelSpec,
    weights: &HyperNetWeights<E>,
) -> Result<Tensor<E>> {
    let p = spec.patch_size();
    let s = spec.grid_factor();
    if x.shape() != [3, p, p] {
        return Err(Error::Config(format!(
            "forward_full input {:?} does not match patch size {p}",
            x.shape()
        )));
    }
    let enc_dim = spec.encoding.dim();
    if enc.shape() != [p, p, enc_dim] {
        return Err(Error::dimension(
            "forward_full",
            format!("[{p}×{p}×{enc_dim}] encodings"),
            format!("{:?}", enc.shape()),
        ));
    }

    let grid = build_grid(x, &self_hypernet(spec), weights)?;
    let side = p / s;
    let mut cells = Vec::with_capacity(s * s);
    for i in 0..s {
        for j in 0..s {
            let (rows, cols) = grid.cell_pixel_bounds(i, j, p);
            let x_cell = slice_chw(x, 3, p, p, rows.clone(), cols.clone())?;
            let enc_cell = slice_hwc(enc, p, p, enc_dim, rows, cols)?;
            let flat = grid.cell(i, j)?;
            cells.push(evaluate_patch(&x_cell, &enc_cell, &flat, spec.mlp_layout())?);
        }
    }
    debug_assert_eq!(cells.len(), s * s);
    debug_assert_eq!(cells[0].shape(), &[spec.bands(), side, side]);
    stitch_grid(&cells, s)
}

fn self_hypernet(spec: &ModelSpec) -> HyperNetConfig {
    spec.hypernet.clone()
}

/// Copy a `[C × H × W]` region into a constant leaf tensor.
fn slice_chw<E: Element>(
    t: &Tensor<E>,
    c: usize,
    h: usize,
    w: usize,
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
) -> Result<Tensor<E>> {
    let (rh, rw) = (rows.len(), cols.len());
    let mut out = Vec::with_capacity(c * rh * rw);
    for ch in 0..c {
        for r in rows.clone() {
            let base = ch * h * w + r * w;
            out.extend_from_slice(&t.data()[base + cols.start..base + cols.end]);
        }
    }
    Tensor::from_vec(vec![c, rh, rw], out)
}

/// Copy an `[H × W × D]` region into a constant leaf tensor.
fn slice_hwc<E: Element>(
    t: &Tensor<E>,
    h: usize,
    w: usize,
    d: usize,
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
) -> Result<Tensor<E>> {
    let _ = h;
    let (rh, rw) = (rows.len(), cols.len());
    let mut out = Vec::with_capacity(rh * rw * d);
    for r in rows {
        let base = (r * w + cols.start) * d;
        out.extend_from_slice(&t.data()[base..base + rw * d]);
    }
    Tensor::from_vec(vec![rh, rw, d], out)
}

/// A reconstructed cube plus the tiling metadata that produced it.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub cube: HsiCube,
    pub tile: usize,
    /// Column seams between tiles, in output coordinates.
    pub seams_x: Vec<usize>,
    /// Row seams between tiles, in output coordinates.
    pub seams_y: Vec<usize>,
    /// Original size when reflect padding was needed.
    pub padded_from: Option<(usize, usize)>,
}

fn mirror_index(q: usize, n: usize) -> usize {
    // Symmetric extension with period 2n: ... 2 1 0 | 0 1 2 ... n-1 | n-1 ...
    let m = q % (2 * n);
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

/// Tile an RGB image into patch-sized tiles (reflect-padding the bottom and
/// right edges when the size is not a multiple of the patch), run the model
/// per tile, and crop the assembly back to the input size.
pub fn reconstruct<E: Element>(
    rgb: &Tensor<f32>,
    spec: &ModelSpec,
    store: &ParamStore<E>,
) -> Result<Reconstruction> {
    let s = rgb.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::dimension(
            "reconstruct",
            "[3×H×W] RGB".to_string(),
            format!("{s:?}"),
        ));
    }
    let (h, w) = (s[1], s[2]);
    let p = spec.patch_size();
    let hp = h.div_ceil(p) * p;
    let wp = w.div_ceil(p) * p;
    let padded = hp != h || wp != w;

    // Reflect-pad into a planar working image.
    let mut work = vec![0f32; 3 * hp * wp];
    for c in 0..3 {
        for r in 0..hp {
            let sr = mirror_index(r, h);
            for q in 0..wp {
                let sq = mirror_index(q, w);
                work[c * hp * wp + r * wp + q] = rgb.data()[c * h * w + sr * w + sq];
            }
        }
    }

    let tensors = store.frozen_tensors()?;
    let weights = HyperNetWeights::from_tensors(&self_hypernet(spec), &tensors)
        .map_err(|e| Error::Incompatible(format!("checkpoint does not fit the model: {e}")))?;
    let enc = spec.patch_encodings::<E>()?;

    let bands = spec.bands();
    let mut out = vec![0f32; bands * hp * wp];
    for tr in 0..hp / p {
        for tc in 0..wp / p {
            let mut tile = Vec::with_capacity(3 * p * p);
            for c in 0..3 {
                for r in 0..p {
                    let base = c * hp * wp + (tr * p + r) * wp + tc * p;
                    tile.extend(work[base..base + p].iter().map(|&v| E::from_f32(v)));
                }
            }
            let x = Tensor::from_vec(vec![3, p, p], tile)?;
            let y = forward_full_with_enc(&x, &enc, spec, &weights)?;
            for b in 0..bands {
                for r in 0..p {
                    let src = b * p * p + r * p;
                    let dst = b * hp * wp + (tr * p + r) * wp + tc * p;
                    for q in 0..p {
                        out[dst + q] = y.data()[src + q].to_f64() as f32;
                    }
                }
            }
        }
    }

    // Crop back to the input size.
    let mut cropped = vec![0f32; bands * h * w];
    for b in 0..bands {
        for r in 0..h {
            let src = b * hp * wp + r * wp;
            let dst = b * h * w + r * w;
            cropped[dst..dst + w].copy_from_slice(&out[src..src + w]);
        }
    }
    let cube = HsiCube::new(w, h, spec.wavelengths().to_vec(), cropped)?;

    Ok(Reconstruction {
        cube,
        tile: p,
        seams_x: (1..wp / p).map(|t| t * p).filter(|&x| x < w).collect(),
        seams_y: (1..hp / p).map(|t| t * p).filter(|&y| y < h).collect(),
        padded_from: padded.then_some((h, w)),
    })
}

/// Reconstruct using a checkpoint's recorded precision and weights.
pub fn reconstruct_from_checkpoint(rgb: &Tensor<f32>, ckpt: &Checkpoint) -> Result<Reconstruction> {
    use crate::autodiff::Precision;
    let spec = ckpt.model_spec()?;
    match ckpt.cfg.precision {
        Precision::Standard => {
            let store = ckpt.param_store::<f32>()?;
            reconstruct(rgb, &spec, &store)
        }
        Precision::Verification => {
            let store = ckpt.param_store::<f64>()?;
            reconstruct(rgb, &spec, &store)
        }
    }
}
