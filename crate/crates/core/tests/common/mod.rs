//! Independent reference implementations used as oracles. Everything here
//! is written from the mathematical definitions with plain loops and stays
//! deliberately decoupled from the library's internal code paths.

#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::Rng;

/// Triple-loop matmul-plus-bias: `out[i,j] = b[j] + Σ_k x[i,k]·w[k,j]`.
pub fn naive_dense(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    batch: usize,
    in_dim: usize,
    out_dim: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; batch * out_dim];
    for i in 0..batch {
        for j in 0..out_dim {
            let mut acc = b[j];
            for k in 0..in_dim {
                acc += x[i * in_dim + k] * w[k * out_dim + j];
            }
            out[i * out_dim + j] = acc;
        }
    }
    out
}

/// Direct cross-correlation with explicit zero padding handled by index
/// arithmetic (no padded buffer).
#[allow(clippy::too_many_arguments)]
pub fn naive_conv2d(
    x: &[f64],
    kernels: &[f64],
    bias: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    padding: usize,
) -> Vec<f64> {
    let h_out = (h + 2 * padding - k) / stride + 1;
    let w_out = (w + 2 * padding - k) / stride + 1;
    let mut out = vec![0.0; c_out * h_out * w_out];
    for o in 0..c_out {
        for ho in 0..h_out {
            for wo in 0..w_out {
                let mut acc = bias[o];
                for ci in 0..c_in {
                    for i in 0..k {
                        for j in 0..k {
                            let r = (ho * stride + i) as isize - padding as isize;
                            let c = (wo * stride + j) as isize - padding as isize;
                            if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w {
                                acc += kernels[((o * c_in + ci) * k + i) * k + j]
                                    * x[ci * h * w + r as usize * w + c as usize];
                            }
                        }
                    }
                }
                out[(o * h_out + ho) * w_out + wo] = acc;
            }
        }
    }
    out
}

/// Direct mean absolute difference.
pub fn naive_l1(pred: &[f64], target: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&p, &t) in pred.iter().zip(target) {
        acc += (p - t).abs();
    }
    acc / pred.len() as f64
}

/// Textbook Adam, kept in the canonical evaluation order of the update rule.
pub struct ReferenceAdam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u32,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl ReferenceAdam {
    pub fn new(len: usize) -> Self {
        ReferenceAdam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

// ── reference metrics ────────────────────────────────────────────────────

/// Two-loop MSE-based PSNR per band (peak fixed at 1.0) plus the band mean.
pub fn reference_psnr(y: &[f32], yh: &[f32], plane: usize, bands: usize) -> (Vec<f64>, f64) {
    let mut per_band = Vec::with_capacity(bands);
    for b in 0..bands {
        let mut sq = 0.0f64;
        for p in 0..plane {
            let d = y[b * plane + p] as f64 - yh[b * plane + p] as f64;
            sq += d * d;
        }
        let mse = sq / plane as f64;
        per_band.push(if mse > 0.0 {
            10.0 * (1.0 / mse).log10()
        } else {
            f64::INFINITY
        });
    }
    let mean = per_band.iter().sum::<f64>() / bands as f64;
    (per_band, mean)
}

fn reference_gaussian_window() -> Vec<f64> {
    // 11×11, σ = 1.5, built directly as the 2-D outer product.
    let mut win = vec![0.0f64; 121];
    let mut total = 0.0;
    for r in 0..11 {
        for c in 0..11 {
            let dr = r as f64 - 5.0;
            let dc = c as f64 - 5.0;
            let v = (-(dr * dr + dc * dc) / (2.0 * 1.5 * 1.5)).exp();
            win[r * 11 + c] = v;
            total += v;
        }
    }
    for v in win.iter_mut() {
        *v /= total;
    }
    win
}

/// Per-window SSIM via direct weighted sums at every valid position; falls
/// back to whole-image uniform statistics when the band is smaller than the
/// window.
pub fn reference_ssim_band(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    const C1: f64 = 1e-4;
    const C2: f64 = 9e-4;
    if w < 11 || h < 11 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut va = 0.0;
        let mut vb = 0.0;
        let mut cov = 0.0;
        for i in 0..a.len() {
            va += (a[i] - ma) * (a[i] - ma);
            vb += (b[i] - mb) * (b[i] - mb);
            cov += (a[i] - ma) * (b[i] - mb);
        }
        va /= n;
        vb /= n;
        cov /= n;
        return ((2.0 * ma * mb + C1) * (2.0 * cov + C2))
            / ((ma * ma + mb * mb + C1) * (va + vb + C2));
    }
    let win = reference_gaussian_window();
    let mut acc = 0.0;
    let mut count = 0usize;
    for top in 0..=h - 11 {
        for left in 0..=w - 11 {
            let mut ma = 0.0;
            let mut mb = 0.0;
            let mut ea2 = 0.0;
            let mut eb2 = 0.0;
            let mut eab = 0.0;
            for r in 0..11 {
                for c in 0..11 {
                    let wgt = win[r * 11 + c];
                    let av = a[(top + r) * w + left + c];
                    let bv = b[(top + r) * w + left + c];
                    ma += wgt * av;
                    mb += wgt * bv;
                    ea2 += wgt * av * av;
                    eb2 += wgt * bv * bv;
                    eab += wgt * av * bv;
                }
            }
            let va = ea2 - ma * ma;
            let vb = eb2 - mb * mb;
            let cov = eab - ma * mb;
            acc += ((2.0 * ma * mb + C1) * (2.0 * cov + C2))
                / ((ma * ma + mb * mb + C1) * (va + vb + C2));
            count += 1;
        }
    }
    acc / count as f64
}

pub fn reference_ssim(y: &[f32], yh: &[f32], w: usize, h: usize, bands: usize) -> (Vec<f64>, f64) {
    let plane = w * h;
    let mut per_band = Vec::with_capacity(bands);
    for b in 0..bands {
        let a: Vec<f64> = y[b * plane..(b + 1) * plane]
            .iter()
            .map(|&v| v as f64)
            .collect();
        let p: Vec<f64> = yh[b * plane..(b + 1) * plane]
            .iter()
            .map(|&v| v as f64)
            .collect();
        per_band.push(reference_ssim_band(&a, &p, w, h));
    }
    let mean = per_band.iter().sum::<f64>() / bands as f64;
    (per_band, mean)
}

/// Per-pixel spectral angle in degrees plus the spatial mean.
pub fn reference_sam(y: &[f32], yh: &[f32], plane: usize, bands: usize) -> (Vec<f64>, f64) {
    let mut angles = Vec::with_capacity(plane);
    for p in 0..plane {
        let mut dot = 0.0f64;
        let mut na = 0.0f64;
        let mut nb = 0.0f64;
        for b in 0..bands {
            let a = y[b * plane + p] as f64;
            let v = yh[b * plane + p] as f64;
            dot += a * v;
            na += a * a;
            nb += v * v;
        }
        let denom = (na.sqrt() * nb.sqrt()).max(1e-12);
        angles.push((dot / denom).clamp(-1.0, 1.0).acos().to_degrees());
    }
    let mean = angles.iter().sum::<f64>() / plane as f64;
    (angles, mean)
}

// ── random helpers ───────────────────────────────────────────────────────

pub fn random_vec(rng: &mut StdRng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(lo..hi)).collect()
}

pub fn random_vec_f32(rng: &mut StdRng, len: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..len).map(|_| rng.gen_range(lo..hi)).collect()
}
