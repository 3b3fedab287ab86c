#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stabnet::imaging::Image;
use stabnet::network::{backward, mse_loss, Mode, NetworkModel, Tensor};

pub fn random_image(h: usize, w: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(h, w, |_, _| rng.gen::<f64>())
}

pub fn random_batch(n: usize, h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tensor::zeros(n, 1, h, w);
    t.data.iter_mut().for_each(|v| *v = rng.gen::<f64>());
    t
}

/// Relative error with an absolute floor so vanishing gradients compare on
/// an absolute scale.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Worst relative error between backprop and central differences
/// (step `h`) over every parameter of `model`.
pub fn gradient_check(model: &mut NetworkModel, y: &Tensor, target: &Tensor, mode: Mode, h: f64) -> (f64, usize) {
    backward(model, y, target, mode).unwrap();
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.clone()).collect();
    let loss_at = |m: &mut NetworkModel| {
        let out = m.forward_batch(y, mode).unwrap();
        mse_loss(&out, target).0
    };
    let mut worst = 0.0f64;
    let mut checked = 0;
    let n_params = analytic.len();
    for pi in 0..n_params {
        for j in 0..analytic[pi].len() {
            let orig = model.params()[pi].value[j];
            model.params_mut()[pi].value[j] = orig + h;
            let plus = loss_at(model);
            model.params_mut()[pi].value[j] = orig - h;
            let minus = loss_at(model);
            model.params_mut()[pi].value[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(rel_err(analytic[pi][j], numeric));
            checked += 1;
        }
    }
    (worst, checked)
}

/// Five formula-defined pairs with SSIM values frozen from scikit-image
/// (`gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
/// data_range=1`).
pub fn ssim_reference_pairs() -> Vec<(Image, Image, f64)> {
    let a = |r: usize, c: usize| 0.5 + 0.3 * (0.7 * r as f64).sin() * (0.4 * c as f64).cos();
    let pattern = Image::from_fn(32, 32, a);
    let checker = Image::from_fn(32, 32, |r, c| if (r / 4 + c / 4) % 2 == 0 { 0.2 } else { 0.8 });
    let ramp = Image::from_fn(24, 40, |r, c| r as f64 / 23.0 * 0.6 + c as f64 / 39.0 * 0.4);
    vec![
        (pattern.clone(), pattern.map(|v| 1.0 - v), -0.9055872207200932),
        (pattern.clone(), pattern.map(|v| 0.8 * v + 0.1), 0.9759090021162117),
        (
            pattern.clone(),
            Image::from_fn(32, 32, |r, c| a(r, c) + 0.05 * (1.3 * r as f64 + 0.9 * c as f64).sin()),
            0.9643912478201456,
        ),
        (
            checker,
            Image::from_fn(32, 32, |r, c| 0.5 + 0.2 * (0.3 * (r * c) as f64 / 8.0).cos()),
            0.010260425802860322,
        ),
        (ramp.clone(), ramp.map(|v| v * v), 0.7561211159333401),
    ]
}

/// Spearman rank correlation (no ties expected).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (rank, &i) in idx.iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}
