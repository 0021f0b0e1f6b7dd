//! Spectral image quality metrics: PSNR, SSIM, SAM, per-band difference
//! maps, and a block-seam statistic for grid-artifact diagnostics.
//!
//! All metric arithmetic runs in f64 regardless of cube storage. Reports
//! serialize both as line-oriented `key=value` text and as a single JSON
//! document; identical-image PSNR is reported as an `inf` sentinel, never a
//! numeric overflow.

use serde_json::{json, Value};

use crate::dataio::HsiCube;
use crate::error::{Error, Result};

/// SSIM window: 11×11 Gaussian, σ = 1.5.
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
/// Stabilizers for unit dynamic range: c1 = 0.01², c2 = 0.03².
const SSIM_C1: f64 = 1e-4;
const SSIM_C2: f64 = 9e-4;

const SAM_NORM_GUARD: f64 = 1e-12;

/// Which peak value the PSNR formula uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PsnrPeak {
    /// Fixed 1.0 peak: comparable across images since all data is in [0,1].
    #[default]
    Unit,
    /// The reference cube's own maximum.
    PerImageMax,
}

fn check_shapes(y: &HsiCube, yh: &HsiCube, context: &str) -> Result<()> {
    if y.width() != yh.width() || y.height() != yh.height() || y.bands() != yh.bands() {
        return Err(Error::dimension(
            context,
            format!("{}×{}×{}", y.width(), y.height(), y.bands()),
            format!("{}×{}×{}", yh.width(), yh.height(), yh.bands()),
        ));
    }
    Ok(())
}

/// Per-band PSNR in dB plus the mean over bands.
#[derive(Debug, Clone)]
pub struct PsnrResult {
    pub per_band: Vec<f64>,
    pub mean: f64,
}

pub fn psnr(y: &HsiCube, yh: &HsiCube) -> Result<PsnrResult> {
    psnr_with_peak(y, yh, PsnrPeak::Unit)
}

pub fn psnr_with_peak(y: &HsiCube, yh: &HsiCube, peak: PsnrPeak) -> Result<PsnrResult> {
    check_shapes(y, yh, "psnr")?;
    let peak_value = match peak {
        PsnrPeak::Unit => 1.0,
        PsnrPeak::PerImageMax => y.data().iter().fold(0f32, |m, &v| m.max(v)) as f64,
    };
    let plane = y.width() * y.height();
    let mut per_band = Vec::with_capacity(y.bands());
    for b in 0..y.bands() {
        let (ya, yb) = (y.band(b)?, yh.band(b)?);
        let mut acc = 0f64;
        for (&a, &p) in ya.iter().zip(yb) {
            let d = a as f64 - p as f64;
            acc += d * d;
        }
        let mse = acc / plane as f64;
        per_band.push(if mse > 0.0 {
            10.0 * (peak_value * peak_value / mse).log10()
        } else {
            f64::INFINITY
        });
    }
    let mean = per_band.iter().sum::<f64>() / per_band.len() as f64;
    Ok(PsnrResult { per_band, mean })
}

/// Per-band mean SSIM plus the mean over bands. `global_fallback` marks
/// images too small for the 11×11 window, scored from whole-band statistics
/// instead.
#[derive(Debug, Clone)]
pub struct SsimResult {
    pub per_band: Vec<f64>,
    pub mean: f64,
    pub global_fallback: bool,
}

fn gaussian_kernel_1d() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut k: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = (i as f64 - half) / SSIM_SIGMA;
            (-0.5 * d * d).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Valid-mode separable filtering: horizontal then vertical pass.
fn filter_valid(img: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let kw = k.len();
    let w_out = w - kw + 1;
    let h_out = h - kw + 1;
    let mut horiz = vec![0f64; h * w_out];
    for r in 0..h {
        for c in 0..w_out {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * img[r * w + c + i];
            }
            horiz[r * w_out + c] = acc;
        }
    }
    let mut out = vec![0f64; h_out * w_out];
    for r in 0..h_out {
        for c in 0..w_out {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * horiz[(r + i) * w_out + c];
            }
            out[r * w_out + c] = acc;
        }
    }
    out
}

fn ssim_band_windowed(a: &[f64], b: &[f64], w: usize, h: usize, k: &[f64]) -> f64 {
    let a2: Vec<f64> = a.iter().map(|&v| v * v).collect();
    let b2: Vec<f64> = b.iter().map(|&v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| x * y).collect();

    let mu_a = filter_valid(a, w, h, k);
    let mu_b = filter_valid(b, w, h, k);
    let e_a2 = filter_valid(&a2, w, h, k);
    let e_b2 = filter_valid(&b2, w, h, k);
    let e_ab = filter_valid(&ab, w, h, k);

    let mut acc = 0f64;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_a2[i] - ma * ma;
        let vb = e_b2[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        acc += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
            / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
    }
    acc / mu_a.len() as f64
}

fn ssim_band_global(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut va = 0f64;
    let mut vb = 0f64;
    let mut cov = 0f64;
    for (&x, &y) in a.iter().zip(b) {
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
        cov += (x - ma) * (y - mb);
    }
    va /= n;
    vb /= n;
    cov /= n;
    ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2))
}

pub fn ssim(y: &HsiCube, yh: &HsiCube) -> Result<SsimResult> {
    check_shapes(y, yh, "ssim")?;
    let (w, h) = (y.width(), y.height());
    let global_fallback = w < SSIM_WINDOW || h < SSIM_WINDOW;
    let k = gaussian_kernel_1d();
    let mut per_band = Vec::with_capacity(y.bands());
    for b in 0..y.bands() {
        let a: Vec<f64> = y.band(b)?.iter().map(|&v| v as f64).collect();
        let p: Vec<f64> = yh.band(b)?.iter().map(|&v| v as f64).collect();
        per_band.push(if global_fallback {
            ssim_band_global(&a, &p)
        } else {
            ssim_band_windowed(&a, &p, w, h, &k)
        });
    }
    let mean = per_band.iter().sum::<f64>() / per_band.len() as f64;
    Ok(SsimResult {
        per_band,
        mean,
        global_fallback,
    })
}

/// Per-pixel spectral angles in degrees plus the spatial mean.
#[derive(Debug, Clone)]
pub struct SamResult {
    pub angles_deg: Vec<f64>,
    pub mean_deg: f64,
}

pub fn sam(y: &HsiCube, yh: &HsiCube) -> Result<SamResult> {
    check_shapes(y, yh, "sam")?;
    let plane = y.width() * y.height();
    let bands = y.bands();
    let mut angles = Vec::with_capacity(plane);
    for p in 0..plane {
        let mut dot = 0f64;
        let mut na = 0f64;
        let mut nb = 0f64;
        for b in 0..bands {
            let a = y.data()[b * plane + p] as f64;
            let v = yh.data()[b * plane + p] as f64;
            dot += a * v;
            na += a * a;
            nb += v * v;
        }
        let denom = (na.sqrt() * nb.sqrt()).max(SAM_NORM_GUARD);
        let cos = (dot / denom).clamp(-1.0, 1.0);
        angles.push(cos.acos().to_degrees());
    }
    let mean_deg = angles.iter().sum::<f64>() / angles.len() as f64;
    Ok(SamResult { angles_deg: angles, mean_deg })
}

/// PSNR / SSIM / SAM for one (reference, reconstruction) pair.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub psnr_mean: f64,
    pub ssim_mean: f64,
    pub sam_mean_deg: f64,
    pub psnr_per_band: Vec<f64>,
    pub ssim_per_band: Vec<f64>,
    pub ssim_global_fallback: bool,
}

/// Compute all three metrics.
pub fn evaluate(y: &HsiCube, yh: &HsiCube) -> Result<MetricReport> {
    let p = psnr(y, yh)?;
    let s = ssim(y, yh)?;
    let a = sam(y, yh)?;
    Ok(MetricReport {
        psnr_mean: p.mean,
        ssim_mean: s.mean,
        sam_mean_deg: a.mean_deg,
        psnr_per_band: p.per_band,
        ssim_per_band: s.per_band,
        ssim_global_fallback: s.global_fallback,
    })
}

fn fmt_metric(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn json_metric(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(fmt_metric(v))
    }
}

impl MetricReport {
    /// Line-oriented `key=value` rendering.
    pub fn to_key_value_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("psnr_mean={}\n", fmt_metric(self.psnr_mean)));
        out.push_str(&format!("ssim_mean={}\n", fmt_metric(self.ssim_mean)));
        out.push_str(&format!("sam_mean_deg={}\n", fmt_metric(self.sam_mean_deg)));
        out.push_str(&format!(
            "ssim_global_fallback={}\n",
            self.ssim_global_fallback
        ));
        for (b, v) in self.psnr_per_band.iter().enumerate() {
            out.push_str(&format!("psnr_band.{b}={}\n", fmt_metric(*v)));
        }
        for (b, v) in self.ssim_per_band.iter().enumerate() {
            out.push_str(&format!("ssim_band.{b}={}\n", fmt_metric(*v)));
        }
        out
    }

    /// Structured single-document rendering (JSON; non-finite values appear
    /// as the strings "inf"/"-inf").
    pub fn to_json(&self) -> Value {
        json!({
            "psnr_mean": json_metric(self.psnr_mean),
            "ssim_mean": json_metric(self.ssim_mean),
            "sam_mean_deg": json_metric(self.sam_mean_deg),
            "ssim_global_fallback": self.ssim_global_fallback,
            "psnr_per_band": self.psnr_per_band.iter().map(|&v| json_metric(v)).collect::<Vec<_>>(),
            "ssim_per_band": self.ssim_per_band.iter().map(|&v| json_metric(v)).collect::<Vec<_>>(),
        })
    }
}

/// One per-band absolute-difference image.
#[derive(Debug, Clone)]
pub struct DiffMap {
    pub band: usize,
    pub wavelength: f32,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
    pub max_abs: f32,
}

/// `|Y_b − Ŷ_b|` for each requested band.
pub fn diff_maps(y: &HsiCube, yh: &HsiCube, bands: &[usize]) -> Result<Vec<DiffMap>> {
    check_shapes(y, yh, "diff_maps")?;
    let mut maps = Vec::with_capacity(bands.len());
    for &b in bands {
        if b >= y.bands() {
            return Err(Error::Index(format!(
                "band {b} out of range for {} bands",
                y.bands()
            )));
        }
        let (ya, yb) = (y.band(b)?, yh.band(b)?);
        let data: Vec<f32> = ya.iter().zip(yb).map(|(&a, &p)| (a - p).abs()).collect();
        let max_abs = data.iter().fold(0f32, |m, &v| m.max(v));
        maps.push(DiffMap {
            band: b,
            wavelength: y.wavelengths()[b],
            width: y.width(),
            height: y.height(),
            data,
            max_abs,
        });
    }
    Ok(maps)
}

/// Mean absolute discontinuity across cell boundaries minus the same
/// statistic over non-boundary transitions, pooled over rows and columns.
/// Positive scores indicate blocking artifacts at the cell seams.
pub fn block_seam_score(cube: &HsiCube, cell: usize) -> Result<f64> {
    let (w, h) = (cube.width(), cube.height());
    if cell < 2 || cell >= w || cell >= h {
        return Err(Error::Config(format!(
            "cell size {cell} leaves no seam/non-seam transitions in a {w}×{h} image"
        )));
    }
    if w % cell != 0 || h % cell != 0 {
        return Err(Error::Config(format!(
            "cell size {cell} must divide the image dimensions {w}×{h}"
        )));
    }
    let plane = w * h;
    let mut seam = (0f64, 0usize);
    let mut interior = (0f64, 0usize);
    for b in 0..cube.bands() {
        let band = &cube.data()[b * plane..(b + 1) * plane];
        // column transitions c-1 -> c
        for r in 0..h {
            for c in 1..w {
                let d = (band[r * w + c] as f64 - band[r * w + c - 1] as f64).abs();
                let bucket = if c % cell == 0 { &mut seam } else { &mut interior };
                bucket.0 += d;
                bucket.1 += 1;
            }
        }
        // row transitions r-1 -> r
        for r in 1..h {
            for c in 0..w {
                let d = (band[r * w + c] as f64 - band[(r - 1) * w + c] as f64).abs();
                let bucket = if r % cell == 0 { &mut seam } else { &mut interior };
                bucket.0 += d;
                bucket.1 += 1;
            }
        }
    }
    Ok(seam.0 / seam.1 as f64 - interior.0 / interior.1 as f64)
}
