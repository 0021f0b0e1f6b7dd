//! Hypernetwork: maps an RGB patch to an S×S grid of flat MLP parameter
//! vectors.
//!
//! A stack of stride-2 convolutions reduces the P×P input to S×S feature
//! maps, then an estimator block — two 3×3 stride-1 groups with
//! spatially-adaptive normalization (instance norm modulated by scale/shift
//! maps convolved from the extractor features) — refines them without
//! changing the spatial size. A final 1×1 convolution emits one channel per
//! MLP parameter, so the channel vector at grid position (i, j) becomes that
//! cell's parameter vector.

use rand::Rng;

use crate::autodiff::{
    add, add_scalar, channel_fiber, conv2d_forward, leaky_relu, mul, spatial_instance_norm,
    Element, ParamSpec, ParamStore, Tensor,
};
use crate::cellmlp::{MlpLayout, LEAKY_SLOPE};
use crate::error::{Error, Result};

/// Default per-downsampling-layer channel widths; truncated (or extended by
/// repeating the last width) to the depth a configuration needs.
pub const DEFAULT_CHANNELS: [usize; 5] = [64, 128, 128, 256, 256];

/// Extractor kernel geometry: 4×4, stride 2, padding 1 halves each spatial
/// dimension exactly.
const EXTRACTOR_KERNEL: usize = 4;

const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Number of spatially-adaptive estimator blocks.
const N_ESTIMATOR_BLOCKS: usize = 2;

/// Grid factor, patch size, extractor widths, and the target MLP layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HyperNetConfig {
    grid_factor: usize,
    patch_size: usize,
    channels: Vec<usize>,
    mlp_layout: MlpLayout,
}

impl HyperNetConfig {
    /// Validate and derive a configuration. Both `grid_factor` and
    /// `patch_size` must be powers of two with `grid_factor` dividing
    /// `patch_size`; the downsampling depth is `log2(patch_size/grid_factor)`.
    pub fn new(grid_factor: usize, patch_size: usize, mlp_layout: MlpLayout) -> Result<Self> {
        Self::with_channels(grid_factor, patch_size, mlp_layout, &DEFAULT_CHANNELS)
    }

    pub fn with_channels(
        grid_factor: usize,
        patch_size: usize,
        mlp_layout: MlpLayout,
        base_channels: &[usize],
    ) -> Result<Self> {
        if grid_factor == 0 || !grid_factor.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid factor {grid_factor} must be a positive power of two"
            )));
        }
        if !patch_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "patch size {patch_size} must be a power of two"
            )));
        }
        if grid_factor > patch_size || patch_size % grid_factor != 0 {
            return Err(Error::Config(format!(
                "grid factor {grid_factor} must divide patch size {patch_size}"
            )));
        }
        if base_channels.is_empty() {
            return Err(Error::Config("channel list must not be empty".to_string()));
        }
        let depth = (patch_size / grid_factor).trailing_zeros() as usize;
        let mut channels = Vec::with_capacity(depth);
        for i in 0..depth {
            channels.push(*base_channels.get(i).unwrap_or(base_channels.last().unwrap()));
        }
        Ok(HyperNetConfig {
            grid_factor,
            patch_size,
            channels,
            mlp_layout,
        })
    }

    pub fn grid_factor(&self) -> usize {
        self.grid_factor
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    /// Number of stride-2 downsampling layers: log2(patch_size / grid_factor).
    pub fn n_downsampling_layers(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[usize] {
        &self.channels
    }

    /// Channel width entering the estimator (3 when no downsampling runs).
    pub fn feature_channels(&self) -> usize {
        self.channels.last().copied().unwrap_or(3)
    }

    pub fn mlp_layout(&self) -> &MlpLayout {
        &self.mlp_layout
    }

    pub fn per_cell_len(&self) -> usize {
        self.mlp_layout.total_params()
    }

    /// Side length of the pixel patch one cell governs.
    pub fn cell_pixels(&self) -> usize {
        self.patch_size / self.grid_factor
    }

    /// Parameter tensors in declaration (checkpoint) order.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut specs = Vec::new();
        let mut c_in = 3;
        for (i, &c_out) in self.channels.iter().enumerate() {
            specs.push(ParamSpec::new(
                format!("extractor.{i}.weight"),
                vec![c_out, c_in, EXTRACTOR_KERNEL, EXTRACTOR_KERNEL],
            ));
            specs.push(ParamSpec::new(format!("extractor.{i}.bias"), vec![c_out]));
            c_in = c_out;
        }
        let f = self.feature_channels();
        for j in 0..N_ESTIMATOR_BLOCKS {
            for part in ["scale", "shift", "conv"] {
                specs.push(ParamSpec::new(
                    format!("estimator.{j}.{part}.weight"),
                    vec![f, f, 3, 3],
                ));
                specs.push(ParamSpec::new(format!("estimator.{j}.{part}.bias"), vec![f]));
            }
        }
        specs.push(ParamSpec::new(
            "head.weight",
            vec![self.per_cell_len(), f, 1, 1],
        ));
        specs.push(ParamSpec::new("head.bias", vec![self.per_cell_len()]));
        specs
    }
}

/// How to fill a fresh parameter store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightInit {
    /// Fan-in-scaled convolution weights, zero biases, zero head weights
    /// with small-noise head bias: training starts from one shared
    /// low-magnitude MLP per cell.
    Training,
    /// Every tensor randomized; used for gradient verification and
    /// content-adaptivity checks, where a zero head would mask entire
    /// gradient paths.
    Random,
}

fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Allocate and initialize all hypernetwork parameters.
pub fn init_params<E: Element>(
    cfg: &HyperNetConfig,
    policy: WeightInit,
    rng: &mut impl Rng,
) -> ParamStore<E> {
    let specs = cfg.param_specs();
    let mut store = ParamStore::new(specs.clone());
    for (idx, spec) in specs.iter().enumerate() {
        let is_weight = spec.name.ends_with(".weight") || spec.name == "head.weight";
        let is_head = spec.name.starts_with("head.");
        let values: Vec<E> = if is_weight {
            let fan_in: usize = spec.shape[1..].iter().product();
            let std = (2.0 / fan_in as f64).sqrt();
            if is_head && policy == WeightInit::Training {
                vec![E::zero(); spec.numel()]
            } else {
                (0..spec.numel())
                    .map(|_| E::from_f64(normal(rng) * std))
                    .collect()
            }
        } else {
            // Head bias noise at unit scale puts the unpacked per-cell MLP
            // weights near 1/sqrt(fan_in); smaller noise leaves the deep
            // multiplicative path too close to the zero saddle to train.
            let std = match (policy, is_head) {
                (WeightInit::Training, true) => 1.0,
                (WeightInit::Training, false) => 0.0,
                (WeightInit::Random, true) => 0.5,
                (WeightInit::Random, false) => 0.1,
            };
            (0..spec.numel())
                .map(|_| E::from_f64(normal(rng) * std))
                .collect()
        };
        store.slice_mut(idx).copy_from_slice(&values);
    }
    store
}

/// Weight/bias pairs of one spatially-adaptive estimator block.
pub struct SpadeBlockWeights<E: Element> {
    pub scale: (Tensor<E>, Tensor<E>),
    pub shift: (Tensor<E>, Tensor<E>),
    pub conv: (Tensor<E>, Tensor<E>),
}

/// Structured view over the parameter tensors, in declaration order.
pub struct HyperNetWeights<E: Element> {
    pub extractor: Vec<(Tensor<E>, Tensor<E>)>,
    pub blocks: Vec<SpadeBlockWeights<E>>,
    pub head: (Tensor<E>, Tensor<E>),
}

impl<E: Element> HyperNetWeights<E> {
    /// Bind leaf tensors (one per [`HyperNetConfig::param_specs`] entry, in
    /// order) into the structured view.
    pub fn from_tensors(cfg: &HyperNetConfig, tensors: &[Tensor<E>]) -> Result<Self> {
        let specs = cfg.param_specs();
        if tensors.len() != specs.len() {
            return Err(Error::dimension(
                "HyperNetWeights::from_tensors",
                format!("{} tensors", specs.len()),
                format!("{}", tensors.len()),
            ));
        }
        for (spec, tensor) in specs.iter().zip(tensors) {
            if tensor.shape() != spec.shape.as_slice() {
                return Err(Error::dimension(
                    "HyperNetWeights::from_tensors",
                    format!("{} with shape {:?}", spec.name, spec.shape),
                    format!("{:?}", tensor.shape()),
                ));
            }
        }
        let mut it = tensors.iter().cloned();
        let mut pair = || -> (Tensor<E>, Tensor<E>) {
            let w = it.next().expect("spec length checked");
            let b = it.next().expect("spec length checked");
            (w, b)
        };
        let extractor: Vec<_> = (0..cfg.n_downsampling_layers()).map(|_| pair()).collect();
        let blocks: Vec<_> = (0..N_ESTIMATOR_BLOCKS)
            .map(|_| SpadeBlockWeights {
                scale: pair(),
                shift: pair(),
                conv: pair(),
            })
            .collect();
        let head = pair();
        Ok(HyperNetWeights {
            extractor,
            blocks,
            head,
        })
    }
}

/// The hypernetwork output: an S×S grid of flat per-cell parameter vectors,
/// stored as one `[per_cell_len × S × S]` tensor. Cell (i, j) governs pixel
/// rows `[i·P/S, (i+1)·P/S)` and the matching column range — a partition of
/// the patch.
pub struct ParameterGrid<E: Element> {
    grid_factor: usize,
    per_cell_len: usize,
    tensor: Tensor<E>,
}

impl<E: Element> ParameterGrid<E> {
    pub fn new(tensor: Tensor<E>, grid_factor: usize, per_cell_len: usize) -> Result<Self> {
        let expected = [per_cell_len, grid_factor, grid_factor];
        if tensor.shape() != expected {
            return Err(Error::dimension(
                "ParameterGrid::new",
                format!("{expected:?}"),
                format!("{:?}", tensor.shape()),
            ));
        }
        Ok(ParameterGrid {
            grid_factor,
            per_cell_len,
            tensor,
        })
    }

    pub fn grid_factor(&self) -> usize {
        self.grid_factor
    }

    pub fn per_cell_len(&self) -> usize {
        self.per_cell_len
    }

    pub fn tensor(&self) -> &Tensor<E> {
        &self.tensor
    }

    /// Flat parameter vector of cell (i, j), differentiable back into the
    /// grid tensor.
    pub fn cell(&self, i: usize, j: usize) -> Result<Tensor<E>> {
        channel_fiber(&self.tensor, i, j)
    }

    /// Pixel bounds (row range, col range) governed by cell (i, j) of a
    /// `patch`-sized image.
    pub fn cell_pixel_bounds(
        &self,
        i: usize,
        j: usize,
        patch: usize,
    ) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let side = patch / self.grid_factor;
        (i * side..(i + 1) * side, j * side..(j + 1) * side)
    }
}

/// Reduce a `[3 × P × P]` patch to `[F × S × S]` features via stride-2
/// convolutions, each followed by a Leaky-ReLU.
pub fn extract_features<E: Element>(
    x: &Tensor<E>,
    cfg: &HyperNetConfig,
    weights: &HyperNetWeights<E>,
) -> Result<Tensor<E>> {
    let p = cfg.patch_size();
    if x.shape() != [3, p, p] {
        return Err(Error::Config(format!(
            "input shape {:?} does not match configured patch size {p}",
            x.shape()
        )));
    }
    let mut h = x.clone();
    for (w, b) in &weights.extractor {
        let conv = conv2d_forward(&h, w, b, 2, 1)?;
        h = leaky_relu(&conv, LEAKY_SLOPE)?;
    }
    Ok(h)
}

/// Estimator block: refine `[F × S × S]` features at constant spatial size
/// and emit the parameter grid through the 1×1 head convolution.
pub fn estimate_params<E: Element>(
    features: &Tensor<E>,
    cfg: &HyperNetConfig,
    weights: &HyperNetWeights<E>,
) -> Result<ParameterGrid<E>> {
    let s = cfg.grid_factor();
    let f = cfg.feature_channels();
    if features.shape() != [f, s, s] {
        return Err(Error::dimension(
            "estimate_params",
            format!("[{f}×{s}×{s}] features"),
            format!("{:?}", features.shape()),
        ));
    }
    let mut h = features.clone();
    for block in &weights.blocks {
        let normed = spatial_instance_norm(&h, INSTANCE_NORM_EPS)?;
        let scale_map = conv2d_forward(features, &block.scale.0, &block.scale.1, 1, 1)?;
        let shift_map = conv2d_forward(features, &block.shift.0, &block.shift.1, 1, 1)?;
        let modulated = add(&mul(&normed, &add_scalar(&scale_map, 1.0)?)?, &shift_map)?;
        let conv = conv2d_forward(&modulated, &block.conv.0, &block.conv.1, 1, 1)?;
        h = leaky_relu(&conv, LEAKY_SLOPE)?;
    }
    let grid = conv2d_forward(&h, &weights.head.0, &weights.head.1, 1, 0)?;
    ParameterGrid::new(grid, s, cfg.per_cell_len())
}

/// Full hypernetwork pass: feature extraction followed by parameter
/// estimation, differentiable end to end.
pub fn build_grid<E: Element>(
    x: &Tensor<E>,
    cfg: &HyperNetConfig,
    weights: &HyperNetWeights<E>,
) -> Result<ParameterGrid<E>> {
    let features = extract_features(x, cfg, weights)?;
    estimate_params(&features, cfg, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn layout(hidden: usize, n_freqs: usize, bands: usize) -> MlpLayout {
        MlpLayout::new(3 + 4 * n_freqs, hidden, bands).unwrap()
    }

    fn weights_for<E: Element>(
        cfg: &HyperNetConfig,
        policy: WeightInit,
        seed: u64,
    ) -> (ParamStore<E>, Vec<Tensor<E>>) {
        let mut rng = StdRng::seed_from_u64(seed);
        let store = init_params::<E>(cfg, policy, &mut rng);
        let tensors = store.frozen_tensors().unwrap();
        (store, tensors)
    }

    #[test]
    fn downsampling_depth_follows_grid_factor() {
        for (s, expected) in [(2usize, 5usize), (4, 4), (8, 3), (16, 2)] {
            let cfg = HyperNetConfig::new(s, 64, layout(8, 1, 4)).unwrap();
            assert_eq!(cfg.n_downsampling_layers(), expected, "S={s}");
        }
    }

    #[test]
    fn degenerate_depth_is_identity_spatial() {
        let cfg = HyperNetConfig::new(16, 16, layout(4, 1, 3)).unwrap();
        assert_eq!(cfg.n_downsampling_layers(), 0);
        assert_eq!(cfg.feature_channels(), 3);
        let (_, tensors) = weights_for::<f64>(&cfg, WeightInit::Random, 3);
        let weights = HyperNetWeights::from_tensors(&cfg, &tensors).unwrap();
        let x = Tensor::from_vec(vec![3, 16, 16], vec![0.5; 3 * 256]).unwrap();
        let features = extract_features(&x, &cfg, &weights).unwrap();
        assert_eq!(features.shape(), &[3, 16, 16]);
    }

    #[test]
    fn extractor_reaches_grid_resolution() {
        for s in [4usize, 16] {
            let cfg = HyperNetConfig::new(s, 64, layout(8, 1, 4)).unwrap();
            let (_, tensors) = weights_for::<f32>(&cfg, WeightInit::Random, 5);
            let weights = HyperNetWeights::from_tensors(&cfg, &tensors).unwrap();
            let x = Tensor::from_vec(vec![3, 64, 64], vec![0.25; 3 * 64 * 64]).unwrap();
            let features = extract_features(&x, &cfg, &weights).unwrap();
            assert_eq!(features.shape(), &[cfg.feature_channels(), s, s]);
        }
    }

    #[test]
    fn head_depth_equals_mlp_parameter_count() {
        let cfg = HyperNetConfig::new(4, 64, layout(64, 5, 31)).unwrap();
        assert_eq!(cfg.per_cell_len(), 20_191);
        let specs = cfg.param_specs();
        let head = specs.iter().find(|s| s.name == "head.weight").unwrap();
        assert_eq!(head.shape[0], 20_191);
    }

    #[test]
    fn zero_head_makes_all_cells_identical() {
        let cfg = HyperNetConfig::new(4, 16, layout(6, 1, 3)).unwrap();
        let mut rng = StdRng::seed_from_u64(9);
        let mut store = init_params::<f64>(&cfg, WeightInit::Random, &mut rng);
        // Zero out the head entirely: every θ_cell must collapse to zero.
        let head_w = store.index_of("head.weight").unwrap();
        store.slice_mut(head_w).fill(0.0);
        let head_b = store.index_of("head.bias").unwrap();
        store.slice_mut(head_b).fill(0.0);
        let tensors = store.frozen_tensors().unwrap();
        let weights = HyperNetWeights::from_tensors(&cfg, &tensors).unwrap();
        let x = Tensor::from_vec(
            vec![3, 16, 16],
            (0..3 * 256).map(|i| (i % 97) as f64 / 97.0).collect(),
        )
        .unwrap();
        let grid = build_grid(&x, &cfg, &weights).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let cell = grid.cell(i, j).unwrap();
                assert!(cell.data().iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn grid_partitions_the_patch() {
        let cfg = HyperNetConfig::new(4, 64, layout(8, 1, 4)).unwrap();
        let (_, tensors) = weights_for::<f32>(&cfg, WeightInit::Random, 11);
        let weights = HyperNetWeights::from_tensors(&cfg, &tensors).unwrap();
        let x = Tensor::from_vec(vec![3, 64, 64], vec![0.5f32; 3 * 64 * 64]).unwrap();
        let grid = build_grid(&x, &cfg, &weights).unwrap();

        let mut coverage = vec![0u32; 64 * 64];
        let mut total_area = 0usize;
        for i in 0..4 {
            for j in 0..4 {
                let (rows, cols) = grid.cell_pixel_bounds(i, j, 64);
                assert_eq!(rows.len(), 16);
                assert_eq!(cols.len(), 16);
                total_area += rows.len() * cols.len();
                for r in rows {
                    for c in cols.clone() {
                        coverage[r * 64 + c] += 1;
                    }
                }
            }
        }
        assert_eq!(total_area, 64 * 64);
        assert!(coverage.iter().all(|&c| c == 1), "cells overlap or miss pixels");
    }

    #[test]
    fn grid_shape_is_content_independent() {
        let cfg = HyperNetConfig::new(2, 8, layout(4, 1, 2)).unwrap();
        let (_, tensors) = weights_for::<f64>(&cfg, WeightInit::Random, 13);
        let weights = HyperNetWeights::from_tensors(&cfg, &tensors).unwrap();
        let mut rng = StdRng::seed_from_u64(14);
        for _ in 0..3 {
            let data: Vec<f64> = (0..3 * 64).map(|_| rng.gen_range(0.0..1.0)).collect();
            let x = Tensor::from_vec(vec![3, 8, 8], data).unwrap();
            let grid = build_grid(&x, &cfg, &weights).unwrap();
            assert_eq!(grid.tensor().shape(), &[cfg.per_cell_len(), 2, 2]);
        }
    }

    #[test]
    fn different_inputs_yield_different_grids() {
        let cfg = HyperNetConfig::new(2, 8, layout(4, 1, 2)).unwrap();
        let (_, tensors) = weights_for::<f64>(&cfg, WeightInit::Random, 17);
        let weights = HyperNetWeights::from_tensors(&cfg, &tensors).unwrap();
        let mut rng = StdRng::seed_from_u64(18);
        for _ in 0..5 {
            let a: Vec<f64> = (0..3 * 64).map(|_| rng.gen_range(0.0..1.0)).collect();
            let b: Vec<f64> = (0..3 * 64).map(|_| rng.gen_range(0.0..1.0)).collect();
            let ga = build_grid(&Tensor::from_vec(vec![3, 8, 8], a).unwrap(), &cfg, &weights)
                .unwrap();
            let gb = build_grid(&Tensor::from_vec(vec![3, 8, 8], b).unwrap(), &cfg, &weights)
                .unwrap();
            assert_ne!(ga.tensor().data(), gb.tensor().data());
        }
    }

    #[test]
    fn single_cell_grid_is_valid() {
        let cfg = HyperNetConfig::new(1, 8, layout(4, 1, 2)).unwrap();
        assert_eq!(cfg.n_downsampling_layers(), 3);
        let (_, tensors) = weights_for::<f64>(&cfg, WeightInit::Random, 19);
        let weights = HyperNetWeights::from_tensors(&cfg, &tensors).unwrap();
        let x = Tensor::from_vec(vec![3, 8, 8], vec![0.4; 192]).unwrap();
        let grid = build_grid(&x, &cfg, &weights).unwrap();
        assert_eq!(grid.tensor().shape(), &[cfg.per_cell_len(), 1, 1]);
        let (rows, cols) = grid.cell_pixel_bounds(0, 0, 8);
        assert_eq!((rows.start, rows.end, cols.start, cols.end), (0, 8, 0, 8));
    }

    #[test]
    fn mismatched_patch_rejected() {
        let cfg = HyperNetConfig::new(2, 16, layout(4, 1, 2)).unwrap();
        let (_, tensors) = weights_for::<f64>(&cfg, WeightInit::Random, 23);
        let weights = HyperNetWeights::from_tensors(&cfg, &tensors).unwrap();
        let x = Tensor::from_vec(vec![3, 8, 8], vec![0.4; 192]).unwrap();
        assert!(matches!(
            extract_features(&x, &cfg, &weights),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn invalid_grid_factors_rejected() {
        assert!(HyperNetConfig::new(3, 64, layout(4, 1, 2)).is_err());
        assert!(HyperNetConfig::new(128, 64, layout(4, 1, 2)).is_err());
        assert!(HyperNetConfig::new(0, 64, layout(4, 1, 2)).is_err());
    }
}
