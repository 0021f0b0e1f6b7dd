//! Kernel verification: brute-force oracle equality in 64-bit mode and
//! finite-difference gradient checks for every registered operation.

mod common;

use common::{naive_conv2d, naive_dense, naive_l1, random_vec, ReferenceAdam};
use hsinr::autodiff::{
    adam_step, add, add_scalar, channel_fiber, conv2d_forward, dense_forward, grad_check, l1_loss,
    leaky_relu, mul, narrow, permute_to_chw, reshape, scale, sigmoid, spatial_instance_norm,
    stitch_grid, sum, AdamState, FnObjective, Tensor,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

// ── oracle equality (verification mode) ──────────────────────────────────

#[test]
fn dense_matches_triple_loop_oracle_exactly() {
    let mut rng = StdRng::seed_from_u64(100);
    for _ in 0..20 {
        let (batch, in_dim, out_dim) = (
            rng.gen_range(1..6),
            rng.gen_range(1..8),
            rng.gen_range(1..8),
        );
        let x = random_vec(&mut rng, batch * in_dim, -2.0, 2.0);
        let w = random_vec(&mut rng, in_dim * out_dim, -2.0, 2.0);
        let b = random_vec(&mut rng, out_dim, -2.0, 2.0);
        let got = dense_forward(
            &Tensor::from_vec(vec![batch, in_dim], x.clone()).unwrap(),
            &Tensor::from_vec(vec![in_dim, out_dim], w.clone()).unwrap(),
            &Tensor::from_vec(vec![out_dim], b.clone()).unwrap(),
        )
        .unwrap();
        let want = naive_dense(&x, &w, &b, batch, in_dim, out_dim);
        assert_eq!(got.data(), want.as_slice(), "bitwise mismatch vs oracle");
    }
}

#[test]
fn dense_random_3x4_case() {
    let mut rng = StdRng::seed_from_u64(101);
    let x = random_vec(&mut rng, 12, -1.0, 1.0);
    let w = random_vec(&mut rng, 4 * 5, -1.0, 1.0);
    let b = random_vec(&mut rng, 5, -1.0, 1.0);
    let got = dense_forward(
        &Tensor::from_vec(vec![3, 4], x.clone()).unwrap(),
        &Tensor::from_vec(vec![4, 5], w.clone()).unwrap(),
        &Tensor::from_vec(vec![5], b.clone()).unwrap(),
    )
    .unwrap();
    assert_eq!(got.data(), naive_dense(&x, &w, &b, 3, 4, 5).as_slice());
}

fn random_conv_geometry(rng: &mut StdRng) -> (usize, usize, usize, usize, usize, usize, usize) {
    // exact-fit by construction: H = (h_out-1)·stride + k − 2·padding
    loop {
        let k = rng.gen_range(1..=4usize);
        let stride = rng.gen_range(1..=2usize);
        let padding = rng.gen_range(0..=1usize);
        let h_out = rng.gen_range(1..=4usize);
        let w_out = rng.gen_range(1..=4usize);
        let h = ((h_out - 1) * stride + k).checked_sub(2 * padding);
        let w = ((w_out - 1) * stride + k).checked_sub(2 * padding);
        if let (Some(h), Some(w)) = (h, w) {
            if h >= 1 && w >= 1 {
                let c_in = rng.gen_range(1..4usize);
                let c_out = rng.gen_range(1..4usize);
                return (c_in, h, w, c_out, k, stride, padding);
            }
        }
    }
}

#[test]
fn conv_matches_direct_loop_oracle_exactly() {
    let mut rng = StdRng::seed_from_u64(102);
    for _ in 0..20 {
        let (c_in, h, w, c_out, k, stride, padding) = random_conv_geometry(&mut rng);
        let x = random_vec(&mut rng, c_in * h * w, -1.5, 1.5);
        let kern = random_vec(&mut rng, c_out * c_in * k * k, -1.5, 1.5);
        let bias = random_vec(&mut rng, c_out, -1.0, 1.0);
        let got = conv2d_forward(
            &Tensor::from_vec(vec![c_in, h, w], x.clone()).unwrap(),
            &Tensor::from_vec(vec![c_out, c_in, k, k], kern.clone()).unwrap(),
            &Tensor::from_vec(vec![c_out], bias.clone()).unwrap(),
            stride,
            padding,
        )
        .unwrap();
        let want = naive_conv2d(&x, &kern, &bias, c_in, h, w, c_out, k, stride, padding);
        assert_eq!(
            got.data(),
            want.as_slice(),
            "mismatch for c_in={c_in} h={h} w={w} c_out={c_out} k={k} s={stride} p={padding}"
        );
    }
}

#[test]
fn conv_random_2x8x8_case() {
    let mut rng = StdRng::seed_from_u64(103);
    let x = random_vec(&mut rng, 2 * 8 * 8, -1.0, 1.0);
    let kern = random_vec(&mut rng, 3 * 2 * 3 * 3, -1.0, 1.0);
    let bias = random_vec(&mut rng, 3, -1.0, 1.0);
    let got = conv2d_forward(
        &Tensor::from_vec(vec![2, 8, 8], x.clone()).unwrap(),
        &Tensor::from_vec(vec![3, 2, 3, 3], kern.clone()).unwrap(),
        &Tensor::from_vec(vec![3], bias.clone()).unwrap(),
        1,
        1,
    )
    .unwrap();
    let want = naive_conv2d(&x, &kern, &bias, 2, 8, 8, 3, 3, 1, 1);
    assert_eq!(got.data(), want.as_slice());
}

#[test]
fn l1_matches_direct_summation_oracle() {
    let mut rng = StdRng::seed_from_u64(104);
    for _ in 0..20 {
        let n = rng.gen_range(1..40usize);
        let pred = random_vec(&mut rng, n, -2.0, 2.0);
        let target = random_vec(&mut rng, n, -2.0, 2.0);
        let got = l1_loss(
            &Tensor::from_vec(vec![n], pred.clone()).unwrap(),
            &Tensor::from_vec(vec![n], target.clone()).unwrap(),
        )
        .unwrap();
        assert_eq!(got.item().unwrap(), naive_l1(&pred, &target));
    }
}

#[test]
fn l1_sixteen_element_case() {
    let mut rng = StdRng::seed_from_u64(105);
    let pred = random_vec(&mut rng, 16, 0.0, 1.0);
    let target = random_vec(&mut rng, 16, 0.0, 1.0);
    let got = l1_loss(
        &Tensor::from_vec(vec![16], pred.clone()).unwrap(),
        &Tensor::from_vec(vec![16], target.clone()).unwrap(),
    )
    .unwrap();
    assert_eq!(got.item().unwrap(), naive_l1(&pred, &target));
}

#[test]
fn adam_matches_reference_trajectories_exactly() {
    let mut rng = StdRng::seed_from_u64(106);
    for _ in 0..20 {
        let n = rng.gen_range(1..12usize);
        let steps = rng.gen_range(1..8usize);
        let lr = rng.gen_range(1e-4..1e-1);
        let mut params = random_vec(&mut rng, n, -1.0, 1.0);
        let mut reference = params.clone();
        let mut state = AdamState::<f64>::new(n);
        let mut oracle = ReferenceAdam::new(n);
        for _ in 0..steps {
            let grads = random_vec(&mut rng, n, -1.0, 1.0);
            adam_step(&mut params, &grads, &mut state, lr).unwrap();
            oracle.step(&mut reference, &grads, lr);
        }
        assert_eq!(params, reference);
        assert_eq!(state.m, oracle.m);
        assert_eq!(state.v, oracle.v);
    }
}

#[test]
fn adam_three_steps_on_a_quadratic() {
    // f(θ) = θ², θ₀ = 1, gradient 2θ.
    let mut params = vec![1.0f64];
    let mut reference = vec![1.0f64];
    let mut state = AdamState::<f64>::new(1);
    let mut oracle = ReferenceAdam::new(1);
    for _ in 0..3 {
        let g = [2.0 * params[0]];
        let g_ref = [2.0 * reference[0]];
        adam_step(&mut params, &g, &mut state, 0.1).unwrap();
        oracle.step(&mut reference, &g_ref, 0.1);
    }
    assert_eq!(params, reference);
    assert!(params[0] < 1.0);
}

// ── finite-difference sweeps over every registered op ────────────────────

/// Check one graph builder against central differences: θ feeds the leaves,
/// the output is projected to a scalar by a fixed random vector, and the
/// analytic gradient must match the numeric one within `tol`.
fn fd_check<F>(theta: &[f64], build: F, h: f64) -> f64
where
    F: Fn(&[f64]) -> hsinr::Result<(Tensor<f64>, Vec<Tensor<f64>>)>,
{
    let (probe_out, _) = build(theta).expect("probe build");
    let mut rng = StdRng::seed_from_u64(0xfd);
    let r = random_vec(&mut rng, probe_out.len(), -1.0, 1.0);
    let shape = probe_out.shape().to_vec();

    let eval = |t: &[f64]| -> hsinr::Result<(f64, Vec<f64>)> {
        let (out, leaves) = build(t)?;
        let proj = Tensor::from_vec(shape.clone(), r.clone())?;
        let loss = sum(&mul(&out, &proj)?)?;
        let value = loss.item()?;
        loss.backward()?;
        let mut grad = Vec::with_capacity(t.len());
        for leaf in &leaves {
            match leaf.grad() {
                Some(g) => grad.extend(g),
                None => grad.extend(std::iter::repeat(0.0).take(leaf.len())),
            }
        }
        Ok((value, grad))
    };
    let objective = FnObjective {
        value: |t: &[f64]| eval(t).map(|(v, _)| v),
        value_and_grad: |t: &[f64]| eval(t),
    };
    grad_check(&objective, theta, h).expect("grad_check run")
}

const FD_TOL: f64 = 1e-6;
const FD_H: f64 = 1e-6;

#[test]
fn gradients_match_finite_differences_for_every_op() {
    let mut rng = StdRng::seed_from_u64(107);
    let configs = 20;

    // dense_forward: differentiate x, w, b jointly.
    for _ in 0..configs {
        let (batch, in_dim, out_dim) = (
            rng.gen_range(1..4),
            rng.gen_range(1..5),
            rng.gen_range(1..5),
        );
        let theta = random_vec(
            &mut rng,
            batch * in_dim + in_dim * out_dim + out_dim,
            -1.0,
            1.0,
        );
        let err = fd_check(
            &theta,
            |t| {
                let (xs, rest) = t.split_at(batch * in_dim);
                let (ws, bs) = rest.split_at(in_dim * out_dim);
                let x = Tensor::param(vec![batch, in_dim], xs.to_vec())?;
                let w = Tensor::param(vec![in_dim, out_dim], ws.to_vec())?;
                let b = Tensor::param(vec![out_dim], bs.to_vec())?;
                Ok((dense_forward(&x, &w, &b)?, vec![x, w, b]))
            },
            FD_H,
        );
        assert!(err <= FD_TOL, "dense fd error {err}");
    }

    // conv2d_forward: differentiate x, kernels, bias jointly.
    for _ in 0..configs {
        let (c_in, h, w, c_out, k, stride, padding) = {
            let mut g = StdRng::seed_from_u64(rng.gen());
            random_conv_geometry(&mut g)
        };
        let n = c_in * h * w + c_out * c_in * k * k + c_out;
        let theta = random_vec(&mut rng, n, -1.0, 1.0);
        let err = fd_check(
            &theta,
            |t| {
                let (xs, rest) = t.split_at(c_in * h * w);
                let (ks, bs) = rest.split_at(c_out * c_in * k * k);
                let x = Tensor::param(vec![c_in, h, w], xs.to_vec())?;
                let kern = Tensor::param(vec![c_out, c_in, k, k], ks.to_vec())?;
                let bias = Tensor::param(vec![c_out], bs.to_vec())?;
                Ok((conv2d_forward(&x, &kern, &bias, stride, padding)?, vec![
                    x, kern, bias,
                ]))
            },
            FD_H,
        );
        assert!(err <= FD_TOL, "conv fd error {err}");
    }

    // elementwise / shape ops, instance norm, losses, reductions
    for _ in 0..configs {
        let n = rng.gen_range(2..24usize);

        // leaky_relu at points clear of the kink
        let theta: Vec<f64> = (0..n)
            .map(|_| {
                let v: f64 = rng.gen_range(0.05..1.0);
                if rng.gen::<bool>() {
                    v
                } else {
                    -v
                }
            })
            .collect();
        let err = fd_check(
            &theta,
            |t| {
                let x = Tensor::param(vec![t.len()], t.to_vec())?;
                Ok((leaky_relu(&x, 0.01)?, vec![x]))
            },
            FD_H,
        );
        assert!(err <= FD_TOL, "leaky_relu fd error {err}");

        let theta = random_vec(&mut rng, n, -2.0, 2.0);
        let err = fd_check(
            &theta,
            |t| {
                let x = Tensor::param(vec![t.len()], t.to_vec())?;
                Ok((sigmoid(&x)?, vec![x]))
            },
            FD_H,
        );
        assert!(err <= FD_TOL, "sigmoid fd error {err}");

        // add and mul differentiate both operands
        let theta = random_vec(&mut rng, 2 * n, -1.0, 1.0);
        let err = fd_check(
            &theta,
            |t| {
                let (aa, bb) = t.split_at(n);
                let a = Tensor::param(vec![n], aa.to_vec())?;
                let b = Tensor::param(vec![n], bb.to_vec())?;
                Ok((add(&a, &b)?, vec![a, b]))
            },
            FD_H,
        );
        assert!(err <= FD_TOL, "add fd error {err}");

        let theta = random_vec(&mut rng, 2 * n, -1.0, 1.0);
        let err = fd_check(
            &theta,
            |t| {
                let (aa, bb) = t.split_at(n);
                let a = Tensor::param(vec![n], aa.to_vec())?;
                let b = Tensor::param(vec![n], bb.to_vec())?;
                Ok((mul(&a, &b)?, vec![a, b]))
            },
            FD_H,
        );
        assert!(err <= FD_TOL, "mul fd error {err}");

        let factor = rng.gen_range(-2.0..2.0);
        let theta = random_vec(&mut rng, n, -1.0, 1.0);
        let err = fd_check(
            &theta,
            |t| {
                let x = Tensor::param(vec![n], t.to_vec())?;
                Ok((scale(&x, factor)?, vec![x]))
            },
            FD_H,
        );
        assert!(err <= FD_TOL, "scale fd error {err}");

        let shift = rng.gen_range(-2.0..2.0);
        let theta = random_vec(&mut rng, n, -1.0, 1.0);
        let err = fd_check(
            &theta,
            |t| {
                let x = Tensor::param(vec![n], t.to_vec())?;
                Ok((add_scalar(&x, shift)?, vec![x]))
            },
            FD_H,
        );
        assert!(err <= FD_TOL, "add_scalar fd error {err}");

        // l1 with ties excluded by construction
        let pred = random_vec(&mut rng, n, 0.0, 1.0);
        let target: Vec<f64> = pred.iter().map(|&v| v + 0.4).collect();
        let err = fd_check(
            &pred,
            |t| {
                let p = Tensor::param(vec![n], t.to_vec())?;
                let y = Tensor::from_vec(vec![n], target.clone())?;
                Ok((l1_loss(&p, &y)?, vec![p]))
            },
            FD_H,
        );
        assert!(err <= FD_TOL, "l1 fd error {err}");

        let theta = random_vec(&mut rng, n, -1.0, 1.0);
        let err = fd_check(
            &theta,
            |t| {
                let x = Tensor::param(vec![n], t.to_vec())?;
                Ok((sum(&x)?, vec![x]))
            },
            FD_H,
        );
        assert!(err <= FD_TOL, "sum fd error {err}");
    }

    // spatial_instance_norm over [C×H×W]
    for _ in 0..configs {
        let (c, h, w) = (
            rng.gen_range(1..3usize),
            rng.gen_range(2..4usize),
            rng.gen_range(2..4usize),
        );
        let theta = random_vec(&mut rng, c * h * w, -1.0, 1.0);
        let err = fd_check(
            &theta,
            |t| {
                let x = Tensor::param(vec![c, h, w], t.to_vec())?;
                Ok((spatial_instance_norm(&x, 1e-5)?, vec![x]))
            },
            FD_H,
        );
        assert!(err <= FD_TOL, "instance_norm fd error {err}");
    }

    // narrow / reshape / channel_fiber / permute / stitch
    for _ in 0..configs {
        let n = rng.gen_range(4..20usize);
        let start = rng.gen_range(0..n - 1);
        let len = rng.gen_range(1..=n - start);
        let theta = random_vec(&mut rng, n, -1.0, 1.0);
        let err = fd_check(
            &theta,
            |t| {
                let x = Tensor::param(vec![n], t.to_vec())?;
                Ok((narrow(&x, start, len)?, vec![x]))
            },
            FD_H,
        );
        assert!(err <= FD_TOL, "narrow fd error {err}");

        let (a, b) = (rng.gen_range(1..4usize), rng.gen_range(1..4usize));
        let theta = random_vec(&mut rng, a * b, -1.0, 1.0);
        let err = fd_check(
            &theta,
            |t| {
                let x = Tensor::param(vec![a * b], t.to_vec())?;
                Ok((reshape(&x, vec![a, b])?, vec![x]))
            },
            FD_H,
        );
        assert!(err <= FD_TOL, "reshape fd error {err}");

        let (c, s) = (rng.gen_range(1..5usize), rng.gen_range(1..4usize));
        let (i, j) = (rng.gen_range(0..s), rng.gen_range(0..s));
        let theta = random_vec(&mut rng, c * s * s, -1.0, 1.0);
        let err = fd_check(
            &theta,
            |t| {
                let g = Tensor::param(vec![c, s, s], t.to_vec())?;
                Ok((channel_fiber(&g, i, j)?, vec![g]))
            },
            FD_H,
        );
        assert!(err <= FD_TOL, "channel_fiber fd error {err}");

        let (h, w, l) = (
            rng.gen_range(1..4usize),
            rng.gen_range(1..4usize),
            rng.gen_range(1..4usize),
        );
        let theta = random_vec(&mut rng, h * w * l, -1.0, 1.0);
        let err = fd_check(
            &theta,
            |t| {
                let x = Tensor::param(vec![h * w, l], t.to_vec())?;
                Ok((permute_to_chw(&x, h, w)?, vec![x]))
            },
            FD_H,
        );
        assert!(err <= FD_TOL, "permute fd error {err}");

        let (s, l, ch, cw) = (
            rng.gen_range(1..3usize),
            rng.gen_range(1..3usize),
            rng.gen_range(1..3usize),
            rng.gen_range(1..3usize),
        );
        let cell_len = l * ch * cw;
        let theta = random_vec(&mut rng, s * s * cell_len, -1.0, 1.0);
        let err = fd_check(
            &theta,
            |t| {
                let mut cells = Vec::with_capacity(s * s);
                for idx in 0..s * s {
                    cells.push(Tensor::param(
                        vec![l, ch, cw],
                        t[idx * cell_len..(idx + 1) * cell_len].to_vec(),
                    )?);
                }
                Ok((stitch_grid(&cells, s)?, cells))
            },
            FD_H,
        );
        assert!(err <= FD_TOL, "stitch fd error {err}");
    }
}

#[test]
fn determinism_identical_inputs_identical_bits() {
    let mut rng = StdRng::seed_from_u64(108);
    let x = random_vec(&mut rng, 3 * 6 * 6, -1.0, 1.0);
    let k = random_vec(&mut rng, 4 * 3 * 3 * 3, -1.0, 1.0);
    let b = random_vec(&mut rng, 4, -1.0, 1.0);
    let run = || {
        let xt = Tensor::from_vec(vec![3, 6, 6], x.clone()).unwrap();
        let kt = Tensor::from_vec(vec![4, 3, 3, 3], k.clone()).unwrap();
        let bt = Tensor::from_vec(vec![4], b.clone()).unwrap();
        let y = conv2d_forward(&xt, &kt, &bt, 1, 1).unwrap();
        let act = leaky_relu(&y, 0.01).unwrap();
        sigmoid(&act).unwrap().data().to_vec()
    };
    let a = run();
    let bb = run();
    let bits_a: Vec<u64> = a.iter().map(|v| v.to_bits()).collect();
    let bits_b: Vec<u64> = bb.iter().map(|v| v.to_bits()).collect();
    assert_eq!(bits_a, bits_b);
}
