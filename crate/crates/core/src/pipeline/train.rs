//! Training loop: patch sampling, learning-rate schedule, and the Adam-driven
//! optimization of the hypernetwork weights.
//!
//! Determinism contract: the patch list is drawn once at startup from a
//! data stream seeded by `cfg.seed`; per-epoch visit order comes from a
//! separate training stream whose state is checkpointed, so a resumed run
//! replays the identical trajectory. One epoch is one pass over the sampled
//! patch list.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{
    adam_step, add, l1_loss, scale, AdamState, Element, ParamStore, Precision, Tensor,
};
use crate::dataio::HsiCube;
use crate::error::{Error, Result};
use crate::hypernet::{init_params, HyperNetWeights, WeightInit, DEFAULT_CHANNELS};

use super::checkpoint::Checkpoint;
use super::model::{forward_full_with_enc, ModelSpec};

// Distinct seed streams derived from one user seed.
const DATA_STREAM: u64 = 0x64617461_73747265;
const WEIGHT_STREAM: u64 = 0x77656967_68747374;
const SHUFFLE_STREAM: u64 = 0x73687566_666c6573;

/// Full training recipe: optimization schedule plus architecture knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub epochs: usize,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub patch: usize,
    pub patches_per_image: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub grid_factor: usize,
    pub n_freqs: usize,
    pub hidden_width: usize,
    pub channels: Vec<usize>,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-4,
            epochs: 1000,
            decay_factor: 0.1,
            decay_every: 200,
            patch: 64,
            patches_per_image: 1000,
            batch_size: 1,
            seed: 0,
            grid_factor: 16,
            n_freqs: 5,
            hidden_width: 64,
            channels: DEFAULT_CHANNELS.to_vec(),
            precision: Precision::Standard,
        }
    }
}

impl TrainConfig {
    /// Cheap validation that runs before any compute.
    pub fn validate(&self) -> Result<()> {
        if self.grid_factor == 0 || self.patch % self.grid_factor != 0 {
            return Err(Error::Config(format!(
                "patch {} is not divisible by grid factor {}",
                self.patch, self.grid_factor
            )));
        }
        if self.lr0 <= 0.0 || self.decay_factor <= 0.0 || self.decay_every == 0 {
            return Err(Error::Config(
                "learning-rate schedule values must be positive".to_string(),
            ));
        }
        if self.patches_per_image == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "epochs, patches_per_image and batch_size must be positive".to_string(),
            ));
        }
        Ok(())
    }

    /// Architecture portion resolved against a spectral axis.
    pub fn model_spec(&self, wavelengths: Vec<f32>) -> Result<ModelSpec> {
        ModelSpec::new(
            self.grid_factor,
            self.patch,
            self.n_freqs,
            self.hidden_width,
            wavelengths,
            &self.channels,
        )
    }
}

/// Stepped decay: `lr0 · decay_factor^floor(epoch / decay_every)`.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * cfg.decay_factor.powi((epoch / cfg.decay_every) as i32)
}

/// One aligned (RGB, HSI) crop.
#[derive(Debug, Clone)]
pub struct PatchPair {
    pub x: Vec<f32>,
    pub y: Vec<f32>,
    pub row: usize,
    pub col: usize,
    pub patch: usize,
    pub bands: usize,
}

/// Draw `count` uniformly random pixel-aligned patch pairs from a scene.
pub fn sample_patches(
    cube: &HsiCube,
    rgb: &Tensor<f32>,
    count: usize,
    patch: usize,
    rng: &mut impl Rng,
) -> Result<Vec<PatchPair>> {
    let (w, h) = (cube.width(), cube.height());
    if rgb.shape() != [3, h, w] {
        return Err(Error::dimension(
            "sample_patches",
            format!("[3×{h}×{w}] RGB companion"),
            format!("{:?}", rgb.shape()),
        ));
    }
    if w < patch || h < patch {
        return Err(Error::Input(format!(
            "scene {w}×{h} is smaller than the {patch}×{patch} patch"
        )));
    }
    let bands = cube.bands();
    let plane = w * h;
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let row = rng.gen_range(0..=h - patch);
        let col = rng.gen_range(0..=w - patch);
        let mut x = Vec::with_capacity(3 * patch * patch);
        for c in 0..3 {
            for r in 0..patch {
                let base = c * plane + (row + r) * w + col;
                x.extend_from_slice(&rgb.data()[base..base + patch]);
            }
        }
        let mut y = Vec::with_capacity(bands * patch * patch);
        for b in 0..bands {
            for r in 0..patch {
                let base = b * plane + (row + r) * w + col;
                y.extend_from_slice(&cube.data()[base..base + patch]);
            }
        }
        pairs.push(PatchPair {
            x,
            y,
            row,
            col,
            patch,
            bands,
        });
    }
    Ok(pairs)
}

/// A scene paired with its RGB projection.
#[derive(Debug, Clone)]
pub struct TrainingScene {
    pub cube: HsiCube,
    pub rgb: Tensor<f32>,
}

/// Loss-log entry for one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStat {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

/// Single-writer training loop over the hypernetwork weights.
pub struct Trainer<E: Element> {
    cfg: TrainConfig,
    spec: ModelSpec,
    store: ParamStore<E>,
    adam: AdamState<E>,
    epochs_done: usize,
    train_rng: ChaCha8Rng,
    patches: Vec<(Tensor<E>, Tensor<E>)>,
    enc: Tensor<E>,
}

impl<E: Element> Trainer<E> {
    /// Fresh run: initialize weights, sample the static patch list, derive
    /// the shuffle stream.
    pub fn new(cfg: TrainConfig, scenes: &[TrainingScene]) -> Result<Self> {
        cfg.validate()?;
        if cfg.precision != E::PRECISION {
            return Err(Error::Config(format!(
                "trainer precision {:?} does not match config {:?}",
                E::PRECISION,
                cfg.precision
            )));
        }
        let mut weight_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ WEIGHT_STREAM);
        let spec = Self::shared_spec(&cfg, scenes)?;
        let store = init_params::<E>(spec.hypernet(), WeightInit::Training, &mut weight_rng);
        let adam = AdamState::new(store.total_len());
        let patches = Self::build_patches(&cfg, &spec, scenes)?;
        let enc = spec.patch_encodings::<E>()?;
        let train_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_STREAM);
        Ok(Trainer {
            cfg,
            spec,
            store,
            adam,
            epochs_done: 0,
            train_rng,
            patches,
            enc,
        })
    }

    /// Resume from a checkpoint: parameters, optimizer moments, epoch
    /// counter and shuffle-stream position are restored; the patch list is
    /// re-derived from the seed and the scene data.
    pub fn from_checkpoint(ckpt: &Checkpoint, scenes: &[TrainingScene]) -> Result<Self> {
        let cfg = ckpt.cfg.clone();
        cfg.validate()?;
        if cfg.precision != E::PRECISION {
            return Err(Error::Incompatible(format!(
                "checkpoint precision {:?}, trainer runs {:?}",
                cfg.precision,
                E::PRECISION
            )));
        }
        let spec = Self::shared_spec(&cfg, scenes)?;
        if spec.wavelengths() != ckpt.wavelengths {
            return Err(Error::Incompatible(
                "scene wavelengths differ from the checkpointed run".to_string(),
            ));
        }
        let store = ckpt.param_store::<E>()?;
        let mut adam = AdamState::new(store.total_len());
        adam.step_count = ckpt.adam_step;
        adam.beta1 = E::from_f64(ckpt.adam_beta1);
        adam.beta2 = E::from_f64(ckpt.adam_beta2);
        adam.epsilon = E::from_f64(ckpt.adam_epsilon);
        for (dst, &src) in adam.m.iter_mut().zip(&ckpt.adam_m) {
            *dst = E::from_f32(src);
        }
        for (dst, &src) in adam.v.iter_mut().zip(&ckpt.adam_v) {
            *dst = E::from_f32(src);
        }
        let patches = Self::build_patches(&cfg, &spec, scenes)?;
        let enc = spec.patch_encodings::<E>()?;
        let mut train_rng = ChaCha8Rng::from_seed(ckpt.rng_seed);
        train_rng.set_word_pos(ckpt.rng_word_pos);
        Ok(Trainer {
            cfg,
            spec,
            store,
            adam,
            epochs_done: ckpt.epochs_done as usize,
            train_rng,
            patches,
            enc,
        })
    }

    fn shared_spec(cfg: &TrainConfig, scenes: &[TrainingScene]) -> Result<ModelSpec> {
        let first = scenes
            .first()
            .ok_or_else(|| Error::Input("no training scenes".to_string()))?;
        for scene in scenes {
            if scene.cube.wavelengths() != first.cube.wavelengths() {
                return Err(Error::Input(
                    "training scenes must share one spectral axis".to_string(),
                ));
            }
        }
        cfg.model_spec(first.cube.wavelengths().to_vec())
    }

    fn build_patches(
        cfg: &TrainConfig,
        spec: &ModelSpec,
        scenes: &[TrainingScene],
    ) -> Result<Vec<(Tensor<E>, Tensor<E>)>> {
        let mut data_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ DATA_STREAM);
        let mut out = Vec::with_capacity(cfg.patches_per_image * scenes.len());
        for scene in scenes {
            let pairs = sample_patches(
                &scene.cube,
                &scene.rgb,
                cfg.patches_per_image,
                cfg.patch,
                &mut data_rng,
            )?;
            for pair in pairs {
                let x = Tensor::from_f32_slice(vec![3, cfg.patch, cfg.patch], &pair.x)?;
                let y = Tensor::from_f32_slice(
                    vec![spec.bands(), cfg.patch, cfg.patch],
                    &pair.y,
                )?;
                out.push((x, y));
            }
        }
        Ok(out)
    }

    pub fn cfg(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn store(&self) -> &ParamStore<E> {
        &self.store
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn finished(&self) -> bool {
        self.epochs_done >= self.cfg.epochs
    }

    /// One gradient step over a batch of (X, Y) patches: mean L1 loss,
    /// backward, one Adam update. Returns the batch loss. A non-finite
    /// value anywhere aborts with a numeric error before the update.
    pub fn training_step(&mut self, batch: &[(Tensor<E>, Tensor<E>)], lr: f64) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Input("empty training batch".to_string()));
        }
        let leaves = self.store.leaf_tensors()?;
        let weights = HyperNetWeights::from_tensors(self.spec.hypernet(), &leaves)?;
        let mut total: Option<Tensor<E>> = None;
        for (x, y) in batch {
            let pred = forward_full_with_enc(x, &self.enc, &self.spec, &weights)?;
            let loss = l1_loss(&pred, y)?;
            total = Some(match total {
                Some(t) => add(&t, &loss)?,
                None => loss,
            });
        }
        let total = scale(&total.expect("non-empty batch"), 1.0 / batch.len() as f64)?;
        let loss_value = total.item()?.to_f64();
        total.backward()?;
        let grads = self.store.collect_grads(&leaves)?;
        adam_step(
            self.store.data_mut(),
            &grads,
            &mut self.adam,
            E::from_f64(lr),
        )?;
        Ok(loss_value)
    }

    /// One pass over the sampled patch list in a freshly shuffled order.
    pub fn run_epoch(&mut self) -> Result<EpochStat> {
        let epoch = self.epochs_done;
        let lr = lr_schedule(epoch, &self.cfg);
        let mut order: Vec<usize> = (0..self.patches.len()).collect();
        order.shuffle(&mut self.train_rng);

        let mut acc = 0f64;
        let mut steps = 0usize;
        for chunk in order.chunks(self.cfg.batch_size) {
            let batch: Vec<(Tensor<E>, Tensor<E>)> =
                chunk.iter().map(|&i| self.patches[i].clone()).collect();
            acc += self.training_step(&batch, lr)?;
            steps += 1;
        }
        self.epochs_done += 1;
        Ok(EpochStat {
            epoch,
            lr,
            loss: acc / steps as f64,
        })
    }

    /// Snapshot everything needed to resume bitwise-identically (standard
    /// precision; verification-mode snapshots narrow to 32-bit storage).
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            cfg: self.cfg.clone(),
            wavelengths: self.spec.wavelengths().to_vec(),
            epochs_done: self.epochs_done as u32,
            params: self
                .store
                .data()
                .iter()
                .map(|&v| v.to_f64() as f32)
                .collect(),
            adam_m: self.adam.m.iter().map(|&v| v.to_f64() as f32).collect(),
            adam_v: self.adam.v.iter().map(|&v| v.to_f64() as f32).collect(),
            adam_step: self.adam.step_count,
            adam_beta1: self.adam.beta1.to_f64(),
            adam_beta2: self.adam.beta2.to_f64(),
            adam_epsilon: self.adam.epsilon.to_f64(),
            rng_seed: self.train_rng.get_seed(),
            rng_word_pos: self.train_rng.get_word_pos(),
        }
    }
}
