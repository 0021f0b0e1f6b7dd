//! Differentiable operations. Forward passes write plain loops arranged so
//! the innermost dimension is contiguous; each op registers a closure that
//! routes the upstream gradient to the parents that track gradients.

use crate::error::{Error, Result};

use super::element::Element;
use super::tensor::{BackwardFn, Tensor};

fn shape_err(context: &str, expected: String, got: String) -> Error {
    Error::dimension(context, expected, got)
}

/// Affine layer: `out[i,j] = Σ_k x[i,k]·w[k,j] + b[j]`.
pub fn dense_forward<E: Element>(
    x: &Tensor<E>,
    w: &Tensor<E>,
    b: &Tensor<E>,
) -> Result<Tensor<E>> {
    let (xs, ws, bs) = (x.shape(), w.shape(), b.shape());
    if xs.len() != 2 || ws.len() != 2 || bs.len() != 1 || xs[1] != ws[0] || ws[1] != bs[0] {
        return Err(shape_err(
            "dense_forward",
            "x [batch×in], w [in×out], b [out]".to_string(),
            format!("x {xs:?}, w {ws:?}, b {bs:?}"),
        ));
    }
    let (batch, in_dim, out_dim) = (xs[0], xs[1], ws[1]);

    let mut out = vec![E::zero(); batch * out_dim];
    for row in out.chunks_exact_mut(out_dim) {
        row.copy_from_slice(b.data());
    }
    for i in 0..batch {
        let x_row = &x.data()[i * in_dim..(i + 1) * in_dim];
        let out_row = &mut out[i * out_dim..(i + 1) * out_dim];
        for (k, &xv) in x_row.iter().enumerate() {
            let w_row = &w.data()[k * out_dim..(k + 1) * out_dim];
            for (o, &wv) in out_row.iter_mut().zip(w_row) {
                *o += xv * wv;
            }
        }
    }

    let needs = x.requires_grad() || w.requires_grad() || b.requires_grad();
    let backward: Option<BackwardFn<E>> = if needs {
        let (xc, wc, bc) = (x.clone(), w.clone(), b.clone());
        Some(Box::new(move |g: &[E]| {
            if xc.requires_grad() {
                // dx[i,k] = Σ_j g[i,j]·w[k,j]
                let mut dx = vec![E::zero(); batch * in_dim];
                for i in 0..batch {
                    let g_row = &g[i * out_dim..(i + 1) * out_dim];
                    let dx_row = &mut dx[i * in_dim..(i + 1) * in_dim];
                    for (k, dxv) in dx_row.iter_mut().enumerate() {
                        let w_row = &wc.data()[k * out_dim..(k + 1) * out_dim];
                        let mut acc = E::zero();
                        for (&gv, &wv) in g_row.iter().zip(w_row) {
                            acc += gv * wv;
                        }
                        *dxv = acc;
                    }
                }
                xc.accumulate_grad(&dx);
            }
            if wc.requires_grad() {
                // dw[k,j] = Σ_i x[i,k]·g[i,j]
                let mut dw = vec![E::zero(); in_dim * out_dim];
                for i in 0..batch {
                    let x_row = &xc.data()[i * in_dim..(i + 1) * in_dim];
                    let g_row = &g[i * out_dim..(i + 1) * out_dim];
                    for (k, &xv) in x_row.iter().enumerate() {
                        let dw_row = &mut dw[k * out_dim..(k + 1) * out_dim];
                        for (d, &gv) in dw_row.iter_mut().zip(g_row) {
                            *d += xv * gv;
                        }
                    }
                }
                wc.accumulate_grad(&dw);
            }
            if bc.requires_grad() {
                let mut db = vec![E::zero(); out_dim];
                for g_row in g.chunks_exact(out_dim) {
                    for (d, &gv) in db.iter_mut().zip(g_row) {
                        *d += gv;
                    }
                }
                bc.accumulate_grad(&db);
            }
        }))
    } else {
        None
    };

    Tensor::from_op(
        vec![batch, out_dim],
        out,
        vec![x.clone(), w.clone(), b.clone()],
        backward,
        "dense_forward",
    )
}

fn pad_chw<E: Element>(x: &[E], c: usize, h: usize, w: usize, p: usize) -> Vec<E> {
    if p == 0 {
        return x.to_vec();
    }
    let (hp, wp) = (h + 2 * p, w + 2 * p);
    let mut out = vec![E::zero(); c * hp * wp];
    for ch in 0..c {
        for r in 0..h {
            let src = &x[ch * h * w + r * w..ch * h * w + (r + 1) * w];
            let dst_off = ch * hp * wp + (r + p) * wp + p;
            out[dst_off..dst_off + w].copy_from_slice(src);
        }
    }
    out
}

/// Strided 2-D cross-correlation over a `[C_in × H × W]` input with
/// `[C_out × C_in × k × k]` kernels. Only exact-fit geometries are accepted:
/// `(H + 2·padding − k)` must divide evenly by `stride`.
pub fn conv2d_forward<E: Element>(
    x: &Tensor<E>,
    kernels: &Tensor<E>,
    bias: &Tensor<E>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<E>> {
    let (xs, ks, bs) = (x.shape(), kernels.shape(), bias.shape());
    if xs.len() != 3 || ks.len() != 4 || bs.len() != 1 {
        return Err(shape_err(
            "conv2d_forward",
            "x [C×H×W], kernels [O×C×k×k], bias [O]".to_string(),
            format!("x {xs:?}, kernels {ks:?}, bias {bs:?}"),
        ));
    }
    let (c_in, h, w) = (xs[0], xs[1], xs[2]);
    let (c_out, kc, kh, kw) = (ks[0], ks[1], ks[2], ks[3]);
    if kc != c_in || kh != kw || bs[0] != c_out {
        return Err(shape_err(
            "conv2d_forward",
            format!("kernels [{c_out}×{c_in}×k×k] (square), bias [{c_out}]"),
            format!("kernels {ks:?}, bias {bs:?}"),
        ));
    }
    let k = kh;
    if stride == 0 {
        return Err(Error::Config("conv2d stride must be positive".to_string()));
    }
    let (hp, wp) = (h + 2 * padding, w + 2 * padding);
    if hp < k || wp < k || (hp - k) % stride != 0 || (wp - k) % stride != 0 {
        return Err(Error::Config(format!(
            "conv2d geometry is not exact-fit: input {h}×{w}, kernel {k}, \
             stride {stride}, padding {padding}"
        )));
    }
    let h_out = (hp - k) / stride + 1;
    let w_out = (wp - k) / stride + 1;

    let xp = pad_chw(x.data(), c_in, h, w, padding);
    let mut out = vec![E::zero(); c_out * h_out * w_out];
    for o in 0..c_out {
        let plane = &mut out[o * h_out * w_out..(o + 1) * h_out * w_out];
        let bv = bias.data()[o];
        for v in plane.iter_mut() {
            *v = bv;
        }
        for ci in 0..c_in {
            for i in 0..k {
                for j in 0..k {
                    let kv = kernels.data()[((o * c_in + ci) * k + i) * k + j];
                    for ho in 0..h_out {
                        let src_row = ci * hp * wp + (ho * stride + i) * wp + j;
                        let dst_row = ho * w_out;
                        for wo in 0..w_out {
                            plane[dst_row + wo] += kv * xp[src_row + wo * stride];
                        }
                    }
                }
            }
        }
    }

    let needs = x.requires_grad() || kernels.requires_grad() || bias.requires_grad();
    let backward: Option<BackwardFn<E>> = if needs {
        let (xc, kc_t, bc) = (x.clone(), kernels.clone(), bias.clone());
        Some(Box::new(move |g: &[E]| {
            let xp = pad_chw(xc.data(), c_in, h, w, padding);
            if bc.requires_grad() {
                let mut db = vec![E::zero(); c_out];
                for (o, d) in db.iter_mut().enumerate() {
                    for &gv in &g[o * h_out * w_out..(o + 1) * h_out * w_out] {
                        *d += gv;
                    }
                }
                bc.accumulate_grad(&db);
            }
            if kc_t.requires_grad() {
                let mut dk = vec![E::zero(); c_out * c_in * k * k];
                for o in 0..c_out {
                    let g_plane = &g[o * h_out * w_out..(o + 1) * h_out * w_out];
                    for ci in 0..c_in {
                        for i in 0..k {
                            for j in 0..k {
                                let mut acc = E::zero();
                                for ho in 0..h_out {
                                    let src_row = ci * hp * wp + (ho * stride + i) * wp + j;
                                    let g_row = ho * w_out;
                                    for wo in 0..w_out {
                                        acc += g_plane[g_row + wo] * xp[src_row + wo * stride];
                                    }
                                }
                                dk[((o * c_in + ci) * k + i) * k + j] = acc;
                            }
                        }
                    }
                }
                kc_t.accumulate_grad(&dk);
            }
            if xc.requires_grad() {
                let mut dxp = vec![E::zero(); c_in * hp * wp];
                for o in 0..c_out {
                    let g_plane = &g[o * h_out * w_out..(o + 1) * h_out * w_out];
                    for ci in 0..c_in {
                        for i in 0..k {
                            for j in 0..k {
                                let kv = kc_t.data()[((o * c_in + ci) * k + i) * k + j];
                                for ho in 0..h_out {
                                    let dst_row = ci * hp * wp + (ho * stride + i) * wp + j;
                                    let g_row = ho * w_out;
                                    for wo in 0..w_out {
                                        dxp[dst_row + wo * stride] += kv * g_plane[g_row + wo];
                                    }
                                }
                            }
                        }
                    }
                }
                // crop the padding border back off
                let mut dx = vec![E::zero(); c_in * h * w];
                for ci in 0..c_in {
                    for r in 0..h {
                        let src = ci * hp * wp + (r + padding) * wp + padding;
                        let dst = ci * h * w + r * w;
                        dx[dst..dst + w].copy_from_slice(&dxp[src..src + w]);
                    }
                }
                xc.accumulate_grad(&dx);
            }
        }))
    } else {
        None
    };

    Tensor::from_op(
        vec![c_out, h_out, w_out],
        out,
        vec![x.clone(), kernels.clone(), bias.clone()],
        backward,
        "conv2d_forward",
    )
}

/// `out = x` for `x ≥ 0`, `slope·x` otherwise. `slope` must lie in (0, 1).
pub fn leaky_relu<E: Element>(x: &Tensor<E>, slope: f64) -> Result<Tensor<E>> {
    assert!(slope > 0.0 && slope < 1.0, "leaky_relu slope must be in (0,1)");
    let s = E::from_f64(slope);
    let out: Vec<E> = x
        .data()
        .iter()
        .map(|&v| if v >= E::zero() { v } else { s * v })
        .collect();

    let backward: Option<BackwardFn<E>> = if x.requires_grad() {
        let xc = x.clone();
        Some(Box::new(move |g: &[E]| {
            let dx: Vec<E> = xc
                .data()
                .iter()
                .zip(g)
                .map(|(&v, &gv)| if v >= E::zero() { gv } else { s * gv })
                .collect();
            xc.accumulate_grad(&dx);
        }))
    } else {
        None
    };

    Tensor::from_op(
        x.shape().to_vec(),
        out,
        vec![x.clone()],
        backward,
        "leaky_relu",
    )
}

/// Numerically stable logistic squashing to (0, 1).
pub fn sigmoid<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    let out: Vec<E> = x
        .data()
        .iter()
        .map(|&v| {
            if v >= E::zero() {
                E::one() / (E::one() + (-v).exp())
            } else {
                let e = v.exp();
                e / (E::one() + e)
            }
        })
        .collect();

    let backward: Option<BackwardFn<E>> = if x.requires_grad() {
        let xc = x.clone();
        let y = out.clone();
        Some(Box::new(move |g: &[E]| {
            let dx: Vec<E> = y
                .iter()
                .zip(g)
                .map(|(&yv, &gv)| gv * yv * (E::one() - yv))
                .collect();
            xc.accumulate_grad(&dx);
        }))
    } else {
        None
    };

    Tensor::from_op(x.shape().to_vec(), out, vec![x.clone()], backward, "sigmoid")
}

/// Mean absolute difference. The subgradient at exact ties is 0, so a
/// zero-loss state is a fixed point of training.
pub fn l1_loss<E: Element>(pred: &Tensor<E>, target: &Tensor<E>) -> Result<Tensor<E>> {
    if pred.shape() != target.shape() {
        return Err(shape_err(
            "l1_loss",
            format!("{:?}", pred.shape()),
            format!("{:?}", target.shape()),
        ));
    }
    let n = E::from_f64(pred.len() as f64);
    let mut acc = E::zero();
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        acc += (p - t).abs();
    }
    let loss = acc / n;

    let needs = pred.requires_grad() || target.requires_grad();
    let backward: Option<BackwardFn<E>> = if needs {
        let (pc, tc) = (pred.clone(), target.clone());
        Some(Box::new(move |g: &[E]| {
            let g0 = g[0] / n;
            let signs: Vec<E> = pc
                .data()
                .iter()
                .zip(tc.data())
                .map(|(&p, &t)| {
                    if p > t {
                        g0
                    } else if p < t {
                        -g0
                    } else {
                        E::zero()
                    }
                })
                .collect();
            if pc.requires_grad() {
                pc.accumulate_grad(&signs);
            }
            if tc.requires_grad() {
                let neg: Vec<E> = signs.iter().map(|&v| -v).collect();
                tc.accumulate_grad(&neg);
            }
        }))
    } else {
        None
    };

    Tensor::from_op(
        vec![1],
        vec![loss],
        vec![pred.clone(), target.clone()],
        backward,
        "l1_loss",
    )
}

/// Elementwise sum of two same-shape tensors.
pub fn add<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    if a.shape() != b.shape() {
        return Err(shape_err(
            "add",
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    let out: Vec<E> = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    let needs = a.requires_grad() || b.requires_grad();
    let backward: Option<BackwardFn<E>> = if needs {
        let (ac, bc) = (a.clone(), b.clone());
        Some(Box::new(move |g: &[E]| {
            if ac.requires_grad() {
                ac.accumulate_grad(g);
            }
            if bc.requires_grad() {
                bc.accumulate_grad(g);
            }
        }))
    } else {
        None
    };
    Tensor::from_op(
        a.shape().to_vec(),
        out,
        vec![a.clone(), b.clone()],
        backward,
        "add",
    )
}

/// Elementwise product of two same-shape tensors.
pub fn mul<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    if a.shape() != b.shape() {
        return Err(shape_err(
            "mul",
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    let out: Vec<E> = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
    let needs = a.requires_grad() || b.requires_grad();
    let backward: Option<BackwardFn<E>> = if needs {
        let (ac, bc) = (a.clone(), b.clone());
        Some(Box::new(move |g: &[E]| {
            if ac.requires_grad() {
                let da: Vec<E> = g.iter().zip(bc.data()).map(|(&gv, &y)| gv * y).collect();
                ac.accumulate_grad(&da);
            }
            if bc.requires_grad() {
                let db: Vec<E> = g.iter().zip(ac.data()).map(|(&gv, &x)| gv * x).collect();
                bc.accumulate_grad(&db);
            }
        }))
    } else {
        None
    };
    Tensor::from_op(
        a.shape().to_vec(),
        out,
        vec![a.clone(), b.clone()],
        backward,
        "mul",
    )
}

/// Multiply every element by a constant.
pub fn scale<E: Element>(x: &Tensor<E>, factor: f64) -> Result<Tensor<E>> {
    let f = E::from_f64(factor);
    let out: Vec<E> = x.data().iter().map(|&v| v * f).collect();
    let backward: Option<BackwardFn<E>> = if x.requires_grad() {
        let xc = x.clone();
        Some(Box::new(move |g: &[E]| {
            let dx: Vec<E> = g.iter().map(|&gv| gv * f).collect();
            xc.accumulate_grad(&dx);
        }))
    } else {
        None
    };
    Tensor::from_op(x.shape().to_vec(), out, vec![x.clone()], backward, "scale")
}

/// Add a constant to every element.
pub fn add_scalar<E: Element>(x: &Tensor<E>, value: f64) -> Result<Tensor<E>> {
    let v = E::from_f64(value);
    let out: Vec<E> = x.data().iter().map(|&e| e + v).collect();
    let backward: Option<BackwardFn<E>> = if x.requires_grad() {
        let xc = x.clone();
        Some(Box::new(move |g: &[E]| xc.accumulate_grad(g)))
    } else {
        None
    };
    Tensor::from_op(
        x.shape().to_vec(),
        out,
        vec![x.clone()],
        backward,
        "add_scalar",
    )
}

/// Per-channel normalization of a `[C × H × W]` tensor over its spatial
/// positions: each channel is shifted to zero mean and scaled by
/// `1/sqrt(var + eps)`.
pub fn spatial_instance_norm<E: Element>(x: &Tensor<E>, eps: f64) -> Result<Tensor<E>> {
    let xs = x.shape();
    if xs.len() != 3 {
        return Err(shape_err(
            "spatial_instance_norm",
            "[C×H×W]".to_string(),
            format!("{xs:?}"),
        ));
    }
    let (c, hw) = (xs[0], xs[1] * xs[2]);
    let inv_hw = E::from_f64(1.0 / hw as f64);
    let epsv = E::from_f64(eps);

    let mut out = vec![E::zero(); c * hw];
    let mut inv_std = vec![E::zero(); c];
    for ch in 0..c {
        let src = &x.data()[ch * hw..(ch + 1) * hw];
        let mut mean = E::zero();
        for &v in src {
            mean += v;
        }
        mean = mean * inv_hw;
        let mut var = E::zero();
        for &v in src {
            let d = v - mean;
            var += d * d;
        }
        var = var * inv_hw;
        let inv = E::one() / (var + epsv).sqrt();
        inv_std[ch] = inv;
        for (o, &v) in out[ch * hw..(ch + 1) * hw].iter_mut().zip(src) {
            *o = (v - mean) * inv;
        }
    }

    let backward: Option<BackwardFn<E>> = if x.requires_grad() {
        let xc = x.clone();
        let y = out.clone();
        Some(Box::new(move |g: &[E]| {
            // dx = inv_std · (g − mean(g) − y · mean(g ⊙ y)), per channel
            let mut dx = vec![E::zero(); c * hw];
            for ch in 0..c {
                let gs = &g[ch * hw..(ch + 1) * hw];
                let ys = &y[ch * hw..(ch + 1) * hw];
                let mut g_mean = E::zero();
                let mut gy_mean = E::zero();
                for (&gv, &yv) in gs.iter().zip(ys) {
                    g_mean += gv;
                    gy_mean += gv * yv;
                }
                g_mean = g_mean * inv_hw;
                gy_mean = gy_mean * inv_hw;
                let inv = inv_std[ch];
                for ((d, &gv), &yv) in dx[ch * hw..(ch + 1) * hw].iter_mut().zip(gs).zip(ys) {
                    *d = inv * (gv - g_mean - yv * gy_mean);
                }
            }
            xc.accumulate_grad(&dx);
        }))
    } else {
        None
    };

    Tensor::from_op(
        xs.to_vec(),
        out,
        vec![x.clone()],
        backward,
        "spatial_instance_norm",
    )
}

/// Contiguous slice of a 1-D tensor.
pub fn narrow<E: Element>(x: &Tensor<E>, start: usize, len: usize) -> Result<Tensor<E>> {
    if x.shape().len() != 1 {
        return Err(shape_err(
            "narrow",
            "1-D tensor".to_string(),
            format!("{:?}", x.shape()),
        ));
    }
    let n = x.len();
    if start + len > n || len == 0 {
        return Err(Error::Index(format!(
            "narrow range {start}..{} out of bounds for length {n}",
            start + len
        )));
    }
    let out = x.data()[start..start + len].to_vec();
    let backward: Option<BackwardFn<E>> = if x.requires_grad() {
        let xc = x.clone();
        Some(Box::new(move |g: &[E]| {
            let mut dx = vec![E::zero(); n];
            dx[start..start + len].copy_from_slice(g);
            xc.accumulate_grad(&dx);
        }))
    } else {
        None
    };
    Tensor::from_op(vec![len], out, vec![x.clone()], backward, "narrow")
}

/// Reinterpret a tensor under a new shape with the same element count.
pub fn reshape<E: Element>(x: &Tensor<E>, shape: Vec<usize>) -> Result<Tensor<E>> {
    let numel: usize = shape.iter().product();
    if numel != x.len() {
        return Err(shape_err(
            "reshape",
            format!("{} elements", x.len()),
            format!("shape {shape:?} ({numel} elements)"),
        ));
    }
    let backward: Option<BackwardFn<E>> = if x.requires_grad() {
        let xc = x.clone();
        Some(Box::new(move |g: &[E]| xc.accumulate_grad(g)))
    } else {
        None
    };
    Tensor::from_op(shape, x.data().to_vec(), vec![x.clone()], backward, "reshape")
}

/// Extract the channel vector at grid position `(i, j)` of a `[C × S × S]`
/// tensor as a flat `[C]` tensor.
pub fn channel_fiber<E: Element>(grid: &Tensor<E>, i: usize, j: usize) -> Result<Tensor<E>> {
    let gs = grid.shape();
    if gs.len() != 3 {
        return Err(shape_err(
            "channel_fiber",
            "[C×S×S]".to_string(),
            format!("{gs:?}"),
        ));
    }
    let (c, sh, sw) = (gs[0], gs[1], gs[2]);
    if i >= sh || j >= sw {
        return Err(Error::Index(format!(
            "grid position ({i},{j}) out of range for {sh}×{sw}"
        )));
    }
    let plane = sh * sw;
    let offset = i * sw + j;
    let out: Vec<E> = (0..c).map(|k| grid.data()[k * plane + offset]).collect();

    let backward: Option<BackwardFn<E>> = if grid.requires_grad() {
        let gc = grid.clone();
        Some(Box::new(move |g: &[E]| {
            let mut dg = vec![E::zero(); c * plane];
            for (k, &gv) in g.iter().enumerate() {
                dg[k * plane + offset] = gv;
            }
            gc.accumulate_grad(&dg);
        }))
    } else {
        None
    };
    Tensor::from_op(vec![c], out, vec![grid.clone()], backward, "channel_fiber")
}

/// Rearrange a `[h·w × L]` matrix of per-pixel rows (row-major pixels) into
/// a `[L × h × w]` image tensor.
pub fn permute_to_chw<E: Element>(x: &Tensor<E>, h: usize, w: usize) -> Result<Tensor<E>> {
    let xs = x.shape();
    if xs.len() != 2 || xs[0] != h * w {
        return Err(shape_err(
            "permute_to_chw",
            format!("[{}×L]", h * w),
            format!("{xs:?}"),
        ));
    }
    let l = xs[1];
    let hw = h * w;
    let mut out = vec![E::zero(); l * hw];
    for p in 0..hw {
        let row = &x.data()[p * l..(p + 1) * l];
        for (band, &v) in row.iter().enumerate() {
            out[band * hw + p] = v;
        }
    }
    let backward: Option<BackwardFn<E>> = if x.requires_grad() {
        let xc = x.clone();
        Some(Box::new(move |g: &[E]| {
            let mut dx = vec![E::zero(); hw * l];
            for p in 0..hw {
                for band in 0..l {
                    dx[p * l + band] = g[band * hw + p];
                }
            }
            xc.accumulate_grad(&dx);
        }))
    } else {
        None
    };
    Tensor::from_op(vec![l, h, w], out, vec![x.clone()], backward, "permute_to_chw")
}

/// Sum of all elements as a scalar tensor.
pub fn sum<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    let mut acc = E::zero();
    for &v in x.data() {
        acc += v;
    }
    let backward: Option<BackwardFn<E>> = if x.requires_grad() {
        let xc = x.clone();
        Some(Box::new(move |g: &[E]| {
            let dx = vec![g[0]; xc.len()];
            xc.accumulate_grad(&dx);
        }))
    } else {
        None
    };
    Tensor::from_op(vec![1], vec![acc], vec![x.clone()], backward, "sum")
}

/// Assemble an S×S grid of `[L × h × w]` cell outputs (row-major cell order)
/// into one `[L × S·h × S·w]` tensor. The cells partition the output; a
/// coverage count verifies every pixel is written exactly once.
pub fn stitch_grid<E: Element>(cells: &[Tensor<E>], s: usize) -> Result<Tensor<E>> {
    if cells.len() != s * s || s == 0 {
        return Err(Error::dimension(
            "stitch_grid",
            format!("{} cells for grid factor {s}", s * s),
            format!("{} cells", cells.len()),
        ));
    }
    let first = cells[0].shape().to_vec();
    if first.len() != 3 {
        return Err(shape_err(
            "stitch_grid",
            "[L×h×w] cells".to_string(),
            format!("{first:?}"),
        ));
    }
    for cell in cells {
        if cell.shape() != first.as_slice() {
            return Err(shape_err(
                "stitch_grid",
                format!("{first:?}"),
                format!("{:?}", cell.shape()),
            ));
        }
    }
    let (l, h, w) = (first[0], first[1], first[2]);
    let (hh, ww) = (s * h, s * w);
    let mut out = vec![E::zero(); l * hh * ww];
    let mut coverage = vec![0u8; hh * ww];
    for (idx, cell) in cells.iter().enumerate() {
        let (ci, cj) = (idx / s, idx % s);
        for band in 0..l {
            for r in 0..h {
                let src = band * h * w + r * w;
                let dst = band * hh * ww + (ci * h + r) * ww + cj * w;
                out[dst..dst + w].copy_from_slice(&cell.data()[src..src + w]);
                if band == 0 {
                    for cov in &mut coverage[(ci * h + r) * ww + cj * w..][..w] {
                        *cov += 1;
                    }
                }
            }
        }
    }
    if coverage.iter().any(|&c| c != 1) {
        return Err(Error::Numeric(
            "stitch_grid coverage violated: some pixel written != once".to_string(),
        ));
    }

    let needs = cells.iter().any(|c| c.requires_grad());
    let backward: Option<BackwardFn<E>> = if needs {
        let cells_c: Vec<Tensor<E>> = cells.to_vec();
        Some(Box::new(move |g: &[E]| {
            for (idx, cell) in cells_c.iter().enumerate() {
                if !cell.requires_grad() {
                    continue;
                }
                let (ci, cj) = (idx / s, idx % s);
                let mut dc = vec![E::zero(); l * h * w];
                for band in 0..l {
                    for r in 0..h {
                        let dst = band * h * w + r * w;
                        let src = band * hh * ww + (ci * h + r) * ww + cj * w;
                        dc[dst..dst + w].copy_from_slice(&g[src..src + w]);
                    }
                }
                cell.accumulate_grad(&dc);
            }
        }))
    } else {
        None
    };

    Tensor::from_op(
        vec![l, hh, ww],
        out,
        cells.to_vec(),
        backward,
        "stitch_grid",
    )
}
