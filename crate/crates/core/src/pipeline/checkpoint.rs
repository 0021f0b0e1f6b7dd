//! Checkpoint container: magic `INRC`, version, explicit config block,
//! parameter tensors in declaration order as 32-bit little-endian reals,
//! Adam buffers, then the shuffle-stream RNG state. Writes go through a
//! temporary file and a rename, so an aborted run never clobbers the last
//! good checkpoint.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::autodiff::{Element, ParamStore, Precision};
use crate::error::{Error, Result};

use super::model::ModelSpec;
use super::train::TrainConfig;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"INRC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything a resumed run needs: the config snapshot, weights, optimizer
/// state, epoch counter, and RNG state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub cfg: TrainConfig,
    pub wavelengths: Vec<f32>,
    pub epochs_done: u32,
    pub params: Vec<f32>,
    pub adam_m: Vec<f32>,
    pub adam_v: Vec<f32>,
    pub adam_step: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
}

impl Checkpoint {
    pub fn model_spec(&self) -> Result<ModelSpec> {
        self.cfg.model_spec(self.wavelengths.clone())
    }

    /// Rebuild the parameter store in the requested precision and verify
    /// the stored buffer matches the architecture.
    pub fn param_store<E: Element>(&self) -> Result<ParamStore<E>> {
        let spec = self.model_spec()?;
        let mut store = ParamStore::new(spec.hypernet().param_specs());
        if store.total_len() != self.params.len() {
            return Err(Error::Incompatible(format!(
                "checkpoint holds {} parameters, architecture needs {}",
                self.params.len(),
                store.total_len()
            )));
        }
        let widened: Vec<E> = self.params.iter().map(|&v| E::from_f32(v)).collect();
        store.load_flat(&widened)?;
        Ok(store)
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_else(|| "checkpoint".to_string())
    ));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;

        // config block
        let cfg = &ckpt.cfg;
        w.write_u32::<LittleEndian>(cfg.grid_factor as u32)?;
        w.write_u32::<LittleEndian>(cfg.patch as u32)?;
        w.write_u32::<LittleEndian>(cfg.n_freqs as u32)?;
        w.write_u32::<LittleEndian>(cfg.hidden_width as u32)?;
        w.write_u32::<LittleEndian>(ckpt.wavelengths.len() as u32)?;
        w.write_u32::<LittleEndian>(cfg.channels.len() as u32)?;
        for &c in &cfg.channels {
            w.write_u32::<LittleEndian>(c as u32)?;
        }
        for &wl in &ckpt.wavelengths {
            w.write_f32::<LittleEndian>(wl)?;
        }
        w.write_u8(match cfg.precision {
            Precision::Standard => 0,
            Precision::Verification => 1,
        })?;
        w.write_f64::<LittleEndian>(cfg.lr0)?;
        w.write_f64::<LittleEndian>(cfg.decay_factor)?;
        w.write_u32::<LittleEndian>(cfg.decay_every as u32)?;
        w.write_u32::<LittleEndian>(cfg.epochs as u32)?;
        w.write_u32::<LittleEndian>(cfg.patches_per_image as u32)?;
        w.write_u32::<LittleEndian>(cfg.batch_size as u32)?;
        w.write_u64::<LittleEndian>(cfg.seed)?;
        w.write_u32::<LittleEndian>(ckpt.epochs_done)?;

        // optimizer scalars
        w.write_u64::<LittleEndian>(ckpt.adam_step)?;
        w.write_f64::<LittleEndian>(ckpt.adam_beta1)?;
        w.write_f64::<LittleEndian>(ckpt.adam_beta2)?;
        w.write_f64::<LittleEndian>(ckpt.adam_epsilon)?;

        // parameter tensors (declaration order) and Adam buffers
        w.write_u32::<LittleEndian>(ckpt.params.len() as u32)?;
        for &v in &ckpt.params {
            w.write_f32::<LittleEndian>(v)?;
        }
        for &v in &ckpt.adam_m {
            w.write_f32::<LittleEndian>(v)?;
        }
        for &v in &ckpt.adam_v {
            w.write_f32::<LittleEndian>(v)?;
        }

        // shuffle-stream RNG state
        w.write_all(&ckpt.rng_seed)?;
        w.write_u128::<LittleEndian>(ckpt.rng_word_pos)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct CountingReader<R: Read> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Format {
            offset: self.offset,
            message: message.into(),
        }
    }
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.offset += n as u64;
        Ok(n)
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = CountingReader {
        inner: BufReader::new(File::open(path)?),
        offset: 0,
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| r.fail("file too short for INRC magic"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(r.fail(format!("bad magic {magic:?}, expected \"INRC\"")));
    }
    let version = r
        .read_u32::<LittleEndian>()
        .map_err(|_| r.fail("truncated version"))?;
    if version != CHECKPOINT_VERSION {
        return Err(r.fail(format!(
            "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }

    let read_u32 = |r: &mut CountingReader<_>, what: &str| -> Result<u32> {
        r.read_u32::<LittleEndian>()
            .map_err(|_| r.fail(format!("truncated {what}")))
    };
    let grid_factor = read_u32(&mut r, "grid factor")? as usize;
    let patch = read_u32(&mut r, "patch size")? as usize;
    let n_freqs = read_u32(&mut r, "frequency count")? as usize;
    let hidden_width = read_u32(&mut r, "hidden width")? as usize;
    let bands = read_u32(&mut r, "band count")? as usize;
    let n_channels = read_u32(&mut r, "channel count")? as usize;
    let mut channels = Vec::with_capacity(n_channels);
    for _ in 0..n_channels {
        channels.push(read_u32(&mut r, "channel width")? as usize);
    }
    let mut wavelengths = Vec::with_capacity(bands);
    for _ in 0..bands {
        wavelengths.push(
            r.read_f32::<LittleEndian>()
                .map_err(|_| r.fail("truncated wavelength"))?,
        );
    }
    let precision = match r.read_u8().map_err(|_| r.fail("truncated precision flag"))? {
        0 => Precision::Standard,
        1 => Precision::Verification,
        other => return Err(r.fail(format!("unknown precision tag {other}"))),
    };
    let lr0 = r
        .read_f64::<LittleEndian>()
        .map_err(|_| r.fail("truncated lr0"))?;
    let decay_factor = r
        .read_f64::<LittleEndian>()
        .map_err(|_| r.fail("truncated decay factor"))?;
    let decay_every = read_u32(&mut r, "decay interval")? as usize;
    let epochs = read_u32(&mut r, "epoch budget")? as usize;
    let patches_per_image = read_u32(&mut r, "patches per image")? as usize;
    let batch_size = read_u32(&mut r, "batch size")? as usize;
    let seed = r
        .read_u64::<LittleEndian>()
        .map_err(|_| r.fail("truncated seed"))?;
    let epochs_done = read_u32(&mut r, "epoch counter")?;

    let adam_step = r
        .read_u64::<LittleEndian>()
        .map_err(|_| r.fail("truncated optimizer step count"))?;
    let adam_beta1 = r
        .read_f64::<LittleEndian>()
        .map_err(|_| r.fail("truncated beta1"))?;
    let adam_beta2 = r
        .read_f64::<LittleEndian>()
        .map_err(|_| r.fail("truncated beta2"))?;
    let adam_epsilon = r
        .read_f64::<LittleEndian>()
        .map_err(|_| r.fail("truncated epsilon"))?;

    let n_params = read_u32(&mut r, "parameter count")? as usize;
    let read_block = |r: &mut CountingReader<_>, what: &str| -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(n_params);
        for i in 0..n_params {
            out.push(
                r.read_f32::<LittleEndian>()
                    .map_err(|_| r.fail(format!("truncated {what} at {i}")))?,
            );
        }
        Ok(out)
    };
    let params = read_block(&mut r, "parameters")?;
    let adam_m = read_block(&mut r, "adam first moment")?;
    let adam_v = read_block(&mut r, "adam second moment")?;
    if adam_v.iter().any(|&v| v < 0.0) {
        return Err(r.fail("negative Adam second-moment entry"));
    }

    let mut rng_seed = [0u8; 32];
    r.read_exact(&mut rng_seed)
        .map_err(|_| r.fail("truncated rng seed"))?;
    let rng_word_pos = r
        .read_u128::<LittleEndian>()
        .map_err(|_| r.fail("truncated rng position"))?;

    let mut probe = [0u8; 1];
    if r.inner.read(&mut probe)? != 0 {
        return Err(r.fail("trailing bytes after checkpoint payload"));
    }

    Ok(Checkpoint {
        cfg: TrainConfig {
            lr0,
            epochs,
            decay_factor,
            decay_every,
            patch,
            patches_per_image,
            batch_size,
            seed,
            grid_factor,
            n_freqs,
            hidden_width,
            channels,
            precision,
        },
        wavelengths,
        epochs_done,
        params,
        adam_m,
        adam_v,
        adam_step,
        adam_beta1,
        adam_beta2,
        adam_epsilon,
        rng_seed,
        rng_word_pos,
    })
}
