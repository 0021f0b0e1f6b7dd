//! Deterministic synthetic scenes: desk-scale stand-ins for real captured
//! cubes. Spectra are smooth mixtures of Gaussian basis functions; spatial
//! mixing patterns span low frequencies (gradients, disks) and high
//! frequencies (checkerboards).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

use super::cube::HsiCube;
use super::response::SpectralResponse;

/// Wavelengths 400…700 nm, evenly spaced; a single band sits at 550 nm.
pub fn default_wavelengths(bands: usize) -> Vec<f32> {
    if bands == 1 {
        return vec![550.0];
    }
    let step = 300.0 / (bands as f64 - 1.0);
    (0..bands)
        .map(|i| (400.0 + i as f64 * step) as f32)
        .collect()
}

fn gaussian_basis(wavelengths: &[f32], center: f64, sigma: f64) -> Vec<f64> {
    wavelengths
        .iter()
        .map(|&wl| {
            let d = (wl as f64 - center) / sigma;
            (-0.5 * d * d).exp()
        })
        .collect()
}

/// Deterministic scene of smooth spectral basis functions mixed by spatial
/// patterns (gradients, a checkerboard, disks), normalized into [0.02, 0.98].
pub fn synth_scene(width: usize, height: usize, bands: usize, seed: u64) -> Result<HsiCube> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wavelengths = default_wavelengths(bands);

    // Spatial patterns, each in [0,1].
    let tile = rng.gen_range(2..=4usize);
    let n_disks = rng.gen_range(2..=3usize);
    let disks: Vec<(f64, f64, f64)> = (0..n_disks)
        .map(|_| {
            (
                rng.gen_range(0.1..0.9),
                rng.gen_range(0.1..0.9),
                rng.gen_range(0.1..0.3),
            )
        })
        .collect();

    let mut patterns: Vec<Vec<f64>> = Vec::new();
    let mut grad_x = Vec::with_capacity(width * height);
    let mut grad_y = Vec::with_capacity(width * height);
    let mut checker = Vec::with_capacity(width * height);
    let mut disk_map = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            let x = (c as f64 + 0.5) / width as f64;
            let y = (r as f64 + 0.5) / height as f64;
            grad_x.push(x);
            grad_y.push(y);
            checker.push((((r / tile) + (c / tile)) % 2) as f64);
            let inside = disks
                .iter()
                .any(|&(cx, cy, rad)| (x - cx).powi(2) + (y - cy).powi(2) < rad * rad);
            disk_map.push(if inside { 1.0 } else { 0.0 });
        }
    }
    patterns.push(grad_x);
    patterns.push(grad_y);
    patterns.push(checker);
    patterns.push(disk_map);
    patterns.push(vec![1.0; width * height]); // constant floor

    // One smooth spectrum per pattern.
    let bases: Vec<Vec<f64>> = (0..patterns.len())
        .map(|_| {
            let center = rng.gen_range(400.0..700.0);
            let sigma = rng.gen_range(60.0..120.0);
            let amplitude = rng.gen_range(0.3..1.0);
            gaussian_basis(&wavelengths, center, sigma)
                .into_iter()
                .map(|v| v * amplitude)
                .collect()
        })
        .collect();

    let plane = width * height;
    let mut raw = vec![0f64; bands * plane];
    for (pattern, basis) in patterns.iter().zip(&bases) {
        for (n, &bv) in basis.iter().enumerate() {
            let dst = &mut raw[n * plane..(n + 1) * plane];
            for (d, &pv) in dst.iter_mut().zip(pattern) {
                *d += pv * bv;
            }
        }
    }

    // Affine-normalize into [0.02, 0.98].
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &raw {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let data: Vec<f32> = raw
        .iter()
        .map(|&v| (0.02 + 0.96 * (v - lo) / span) as f32)
        .collect();

    HsiCube::new(width, height, wavelengths, data)
}

/// High-spatial-frequency scene whose checkerboard component is invisible
/// to the RGB projection: the alternating spectral perturbation lies in the
/// null space of the given response, so pixel position (not color) is the
/// only cue that distinguishes the two interleaved materials.
pub fn synth_metameric_scene(
    width: usize,
    height: usize,
    bands: usize,
    tile: usize,
    amplitude: f64,
    resp: &SpectralResponse,
    seed: u64,
) -> Result<HsiCube> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wavelengths = default_wavelengths(bands);

    // Orthonormalize the three response rows, then project a smooth bump
    // onto their orthogonal complement.
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for c in 0..3 {
        let mut v: Vec<f64> = resp.channel(c).iter().map(|&w| w as f64).collect();
        for q in &basis {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= dot * qi;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for vi in v.iter_mut() {
                *vi /= norm;
            }
            basis.push(v);
        }
    }
    let center = rng.gen_range(480.0..620.0);
    let mut null_dir = gaussian_basis(&wavelengths, center, 55.0);
    for q in &basis {
        let dot: f64 = null_dir.iter().zip(q).map(|(a, b)| a * b).sum();
        for (ni, qi) in null_dir.iter_mut().zip(q) {
            *ni -= dot * qi;
        }
    }
    let peak = null_dir.iter().fold(0f64, |m, v| m.max(v.abs()));
    if peak > 1e-9 {
        for v in null_dir.iter_mut() {
            *v /= peak;
        }
    }

    // Smooth mid-range base spectrum plus a gentle spatial gradient that the
    // RGB projection does see.
    let base = gaussian_basis(&wavelengths, rng.gen_range(450.0..650.0), 110.0);
    let grad_spec = gaussian_basis(&wavelengths, rng.gen_range(420.0..680.0), 90.0);

    let plane = width * height;
    let mut data = vec![0f32; bands * plane];
    let amp = amplitude.min(0.2);
    for r in 0..height {
        for c in 0..width {
            let p = r * width + c;
            let x = (c as f64 + 0.5) / width as f64;
            let y = (r as f64 + 0.5) / height as f64;
            let chi = if ((r / tile) + (c / tile)) % 2 == 0 { 1.0 } else { -1.0 };
            let grad = 0.5 * (x + y) - 0.5; // in [-0.5, 0.5]
            for n in 0..bands {
                let v = 0.5 + 0.12 * base[n] + 0.15 * grad * grad_spec[n]
                    + chi * amp * null_dir[n];
                data[n * plane + p] = v.clamp(0.01, 0.99) as f32;
            }
        }
    }

    HsiCube::new(width, height, wavelengths, data)
}
