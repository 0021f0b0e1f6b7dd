// Scratch harness for sizing the acceptance-test budgets. Not part of the
// test suite.

use std::time::Instant;

use hsinr::autodiff::{grad_check, l1_loss, FnObjective, Precision, Tensor};
use hsinr::dataio::{project_rgb, synth_metameric_scene, synth_scene, SpectralResponse};
use hsinr::hypernet::{init_params, HyperNetWeights, WeightInit};
use hsinr::metrics::{block_seam_score, psnr};
use hsinr::pipeline::{forward_full, reconstruct, ModelSpec, TrainConfig, Trainer, TrainingScene};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn overfit(steps: usize, s: usize, hidden: usize, channels: Vec<usize>, lr: f64) {
    let t0 = Instant::now();
    let cube = synth_scene(32, 32, 31, 4242).unwrap();
    let resp = SpectralResponse::gaussian_default(cube.wavelengths()).unwrap();
    let rgb = project_rgb::<f32>(&cube, &resp).unwrap();
    let scene = TrainingScene { cube: cube.clone(), rgb: rgb.clone() };
    let cfg = TrainConfig {
        lr0: lr,
        epochs: steps,
        decay_factor: 1.0,
        decay_every: 1_000_000,
        patch: 32,
        patches_per_image: 1,
        batch_size: 1,
        seed: 1,
        grid_factor: s,
        n_freqs: 5,
        hidden_width: hidden,
        channels,
        precision: Precision::Standard,
    };
    let mut trainer = Trainer::<f32>::new(cfg, &[scene]).unwrap();
    for step in 0..steps {
        let stat = trainer.run_epoch().unwrap();
        if step % 100 == 0 || step == steps - 1 {
            let recon = reconstruct(&rgb, trainer.spec(), trainer.store()).unwrap();
            let p = psnr(&cube, &recon.cube).unwrap();
            println!(
                "step {:4}  loss {:.5}  psnr {:.2} dB  elapsed {:.1}s",
                step + 1,
                stat.loss,
                p.mean,
                t0.elapsed().as_secs_f64()
            );
            if p.mean >= 40.0 {
                println!("reached 40 dB at step {} in {:.1}s", step + 1, t0.elapsed().as_secs_f64());
                break;
            }
        } else {
            trainer_noop(&stat);
        }
    }
}

fn trainer_noop(_s: &hsinr::pipeline::EpochStat) {}

fn ablate_lr(steps: usize, n_freqs: usize, seed: u64, lr: f64) -> f64 {
    let wl_count = 31;
    let resp = SpectralResponse::gaussian_default(
        &(0..wl_count).map(|i| 400.0 + 10.0 * i as f32).collect::<Vec<_>>(),
    )
    .unwrap();
    let cube = synth_metameric_scene(32, 32, wl_count, 2, 0.18, &resp, 900 + seed).unwrap();
    let rgb = project_rgb::<f32>(&cube, &resp).unwrap();
    let scene = TrainingScene { cube: cube.clone(), rgb: rgb.clone() };
    let cfg = TrainConfig {
        lr0: lr,
        epochs: steps,
        decay_factor: 1.0,
        decay_every: 1_000_000,
        patch: 32,
        patches_per_image: 1,
        batch_size: 1,
        seed,
        grid_factor: 4,
        n_freqs,
        hidden_width: 32,
        channels: vec![32, 64, 64],
        precision: Precision::Standard,
    };
    let mut trainer = Trainer::<f32>::new(cfg, &[scene]).unwrap();
    for _ in 0..steps {
        trainer.run_epoch().unwrap();
    }
    let recon = reconstruct(&rgb, trainer.spec(), trainer.store()).unwrap();
    psnr(&cube, &recon.cube).unwrap().mean
}

fn seam(steps: usize, s: usize, seed: u64) -> f64 {
    let cube = synth_scene(32, 32, 31, 4242).unwrap();
    let resp = SpectralResponse::gaussian_default(cube.wavelengths()).unwrap();
    let rgb = project_rgb::<f32>(&cube, &resp).unwrap();
    let scene = TrainingScene { cube: cube.clone(), rgb: rgb.clone() };
    let cfg = TrainConfig {
        lr0: 1e-3,
        epochs: steps,
        decay_factor: 1.0,
        decay_every: 1_000_000,
        patch: 32,
        patches_per_image: 1,
        batch_size: 1,
        seed,
        grid_factor: s,
        n_freqs: 5,
        hidden_width: 32,
        channels: vec![32, 64, 64],
        precision: Precision::Standard,
    };
    let mut trainer = Trainer::<f32>::new(cfg, &[scene]).unwrap();
    for _ in 0..steps {
        trainer.run_epoch().unwrap();
    }
    let recon = reconstruct(&rgb, trainer.spec(), trainer.store()).unwrap();
    block_seam_score(&recon.cube, 32 / s).unwrap()
}


fn probe(steps: usize, lr: f64, tile: usize, n_freqs: usize, seed: u64) {
    let t0 = Instant::now();
    let wl: Vec<f32> = (0..31).map(|i| 400.0 + 10.0 * i as f32).collect();
    let resp = SpectralResponse::gaussian_default(&wl).unwrap();
    let cube = synth_metameric_scene(32, 32, 31, tile, 0.18, &resp, 900 + seed).unwrap();
    let rgb = project_rgb::<f32>(&cube, &resp).unwrap();
    let scene = TrainingScene { cube: cube.clone(), rgb: rgb.clone() };
    let cfg = TrainConfig {
        lr0: lr,
        epochs: steps,
        decay_factor: 1.0,
        decay_every: 1_000_000,
        patch: 32,
        patches_per_image: 1,
        batch_size: 1,
        seed,
        grid_factor: 4,
        n_freqs,
        hidden_width: 32,
        channels: vec![32, 64, 64],
        precision: Precision::Standard,
    };
    let mut trainer = Trainer::<f32>::new(cfg, &[scene]).unwrap();
    for step in 0..steps {
        let stat = trainer.run_epoch().unwrap();
        if (step + 1) % 200 == 0 || step == 0 {
            let recon = reconstruct(&rgb, trainer.spec(), trainer.store()).unwrap();
            let p = psnr(&cube, &recon.cube).unwrap();
            println!(
                "tile {tile} N={n_freqs} seed {seed} step {:4} loss {:.5} psnr {:.2} ({:.0}s)",
                step + 1, stat.loss, p.mean, t0.elapsed().as_secs_f64()
            );
        }
    }
}


fn debug_grads(steps: usize, lr: f64, tile: usize, n_freqs: usize, seed: u64) {
    use hsinr::autodiff::l1_loss as l1;
    let wl: Vec<f32> = (0..31).map(|i| 400.0 + 10.0 * i as f32).collect();
    let resp = SpectralResponse::gaussian_default(&wl).unwrap();
    let cube = synth_metameric_scene(32, 32, 31, tile, 0.18, &resp, 900 + seed).unwrap();
    let rgb = project_rgb::<f32>(&cube, &resp).unwrap();
    let scene = TrainingScene { cube: cube.clone(), rgb: rgb.clone() };
    let cfg = TrainConfig {
        lr0: lr, epochs: steps, decay_factor: 1.0, decay_every: 1_000_000,
        patch: 32, patches_per_image: 1, batch_size: 1, seed,
        grid_factor: 4, n_freqs, hidden_width: 32, channels: vec![32, 64, 64],
        precision: Precision::Standard,
    };
    let mut trainer = Trainer::<f32>::new(cfg, &[scene]).unwrap();
    for step in 0..steps {
        // manual step to inspect gradients
        let leaves = trainer.store().leaf_tensors().unwrap();
        let weights = HyperNetWeights::from_tensors(trainer.spec().hypernet(), &leaves).unwrap();
        let x = Tensor::from_f32_slice(vec![3, 32, 32], rgb.data()).unwrap();
        let yd: Vec<f32> = cube.data().to_vec();
        let y = Tensor::from_f32_slice(vec![31, 32, 32], &yd).unwrap();
        let pred = forward_full(&x, trainer.spec(), &weights).unwrap();
        let loss = l1(&pred, &y).unwrap();
        loss.backward().unwrap();
        if step % 5 == 0 {
            print!("step {step} loss {:.5} ", loss.item().unwrap());
            let pmin = pred.data().iter().cloned().fold(f32::INFINITY, f32::min);
            let pmax = pred.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            print!("pred range [{pmin:.3},{pmax:.3}] ");
            for (leaf, spec) in leaves.iter().zip(trainer.store().specs()) {
                if spec.name == "head.bias" || spec.name == "head.weight" || spec.name == "extractor.0.weight" {
                    let g = leaf.grad().map(|g| g.iter().fold(0f32, |m, v| m.max(v.abs()))).unwrap_or(0.0);
                    print!("{}|g|max {:.2e} ", spec.name, g);
                }
            }
            println!();
        }
        let stat = trainer.run_epoch().unwrap();
        let _ = stat;
    }
}

fn gradcheck_full() {
    let t0 = Instant::now();
    let wavelengths: Vec<f32> = (0..4).map(|i| 400.0 + 100.0 * i as f32).collect();
    let spec = ModelSpec::new(2, 8, 2, 8, wavelengths, &[8, 8]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let store = init_params::<f64>(spec.hypernet(), WeightInit::Random, &mut rng);
    let n = store.total_len();
    println!("params: {n}");

    let cube = synth_scene(8, 8, 4, 4321).unwrap();
    let resp = SpectralResponse::gaussian_default(cube.wavelengths()).unwrap();
    let rgb = project_rgb::<f64>(&cube, &resp).unwrap();
    let x_data = rgb.data().to_vec();
    let y_data: Vec<f64> = cube.data().iter().map(|&v| v as f64).collect();

    let spec_ref = &spec;
    let store_ref = &store;
    let eval = move |theta: &[f64]| -> hsinr::Result<(f64, Vec<f64>)> {
        let mut probe = store_ref.clone();
        probe.load_flat(theta)?;
        let leaves = probe.leaf_tensors()?;
        let weights = HyperNetWeights::from_tensors(spec_ref.hypernet(), &leaves)?;
        let x = Tensor::from_vec(vec![3, 8, 8], x_data.clone())?;
        let y = Tensor::from_vec(vec![4, 8, 8], y_data.clone())?;
        let loss = l1_loss(&forward_full(&x, spec_ref, &weights)?, &y)?;
        let v = loss.item()?;
        loss.backward()?;
        Ok((v, probe.collect_grads(&leaves)?))
    };
    let objective = FnObjective {
        value: |t: &[f64]| eval(t).map(|(v, _)| v),
        value_and_grad: &eval,
    };
    let err = grad_check(&objective, store.data(), 1e-6).unwrap();
    println!("full-model gradcheck: max rel err {err:.3e} in {:.1}s", t0.elapsed().as_secs_f64());
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    match args.get(1).map(|s| s.as_str()) {
        Some("overfit") => {
            let steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
            let hidden: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(64);
            let lr: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1e-4);
            overfit(steps, 4, hidden, vec![32, 64, 64], lr);
        }
        Some("ablate") => {
            let steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(800);
            let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
            for seed in [1u64, 2, 3] {
                let t0 = Instant::now();
                let with = ablate_lr(steps, 5, seed, lr);
                let without = ablate_lr(steps, 0, seed, lr);
                println!(
                    "seed {seed}: N=5 {with:.2} dB, w/o {without:.2} dB, gap {:.2} ({:.0}s)",
                    with - without,
                    t0.elapsed().as_secs_f64()
                );
            }
        }
        Some("seam") => {
            let steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(400);
            for seed in [1u64, 2, 3] {
                let t0 = Instant::now();
                let coarse = seam(steps, 2, seed);
                let fine = seam(steps, 16, seed);
                println!(
                    "seed {seed}: S=2 score {coarse:.5}, S=16 score {fine:.5} ({:.0}s)",
                    t0.elapsed().as_secs_f64()
                );
            }
        }
        Some("probe") => {
            let steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(800);
            let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
            let tile: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(4);
            let n_freqs: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(5);
            let seed: u64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(2);
            probe(steps, lr, tile, n_freqs, seed);
        }
        Some("dbg") => {
            let steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(30);
            let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
            let tile: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(4);
            let n_freqs: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(5);
            let seed: u64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(2);
            debug_grads(steps, lr, tile, n_freqs, seed);
        }
        Some("gradcheck") => gradcheck_full(),
        _ => println!("usage: tune overfit|ablate|seam|gradcheck [steps] ..."),
    }
}
