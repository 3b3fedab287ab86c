mod common;

use proptest::prelude::*;
use stabnet::imaging::{gaussian_psf, BlurOperator, Image, NoiseSpec, Psf};

/// Direct periodic convolution `(K x)[r, c] = Σ w[di, dj] x[r − di, c − dj]`.
fn circular_convolution(psf: &Psf, x: &Image) -> Image {
    let (h, w) = x.shape();
    let r = psf.radius() as isize;
    Image::from_fn(h, w, |i, j| {
        let mut acc = 0.0;
        for di in -r..=r {
            for dj in -r..=r {
                let si = (i as isize - di).rem_euclid(h as isize) as usize;
                let sj = (j as isize - dj).rem_euclid(w as isize) as usize;
                acc += psf.at(di, dj) * x.get(si, sj);
            }
        }
        acc
    })
}

fn image_strategy(h: usize, w: usize) -> impl Strategy<Value = Image> {
    prop::collection::vec(-1.0f64..1.0, h * w).prop_map(move |v| Image::new(h, w, v).unwrap())
}

fn psf_strategy() -> impl Strategy<Value = Psf> {
    (0usize..=3).prop_flat_map(|r| {
        let side = 2 * r + 1;
        prop::collection::vec(0.01f64..1.0, side * side).prop_map(move |w| Psf::from_weights(r, w).unwrap())
    })
}

fn problem() -> impl Strategy<Value = (Psf, Image, Image)> {
    (psf_strategy(), 7usize..=16, 7usize..=16).prop_flat_map(|(psf, h, w)| {
        (Just(psf), image_strategy(h, w), image_strategy(h, w))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn spectral_matches_spatial((psf, x, _) in problem()) {
        let op = BlurOperator::new(psf.clone(), x.shape()).unwrap();
        let direct = circular_convolution(&psf, &x);
        prop_assert!(op.apply(&x).unwrap().max_abs_diff(&direct).unwrap() < 1e-10);
    }

    #[test]
    fn blur_is_linear((psf, x, y) in problem(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let op = BlurOperator::new(psf, x.shape()).unwrap();
        let lhs = op.apply(&x.scale(a).add(&y.scale(b)).unwrap()).unwrap();
        let rhs = op.apply(&x).unwrap().scale(a).add(&op.apply(&y).unwrap().scale(b)).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-10);
    }

    #[test]
    fn adjoint_identity((psf, x, y) in problem()) {
        let op = BlurOperator::new(psf, x.shape()).unwrap();
        let lhs = op.apply(&x).unwrap().dot(&y).unwrap();
        let rhs = x.dot(&op.adjoint(&y).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn pseudo_inverse_reproduces_range((psf, x, _) in problem()) {
        let op = BlurOperator::new(psf, x.shape()).unwrap();
        let kx = op.apply(&x).unwrap();
        let back = op.apply(&op.pseudo_inverse(&kx, 1e-10).unwrap()).unwrap();
        prop_assert!(back.max_abs_diff(&kx).unwrap() < 1e-8);
    }

    #[test]
    fn blur_preserves_mean((psf, x, _) in problem()) {
        let op = BlurOperator::new(psf, x.shape()).unwrap();
        prop_assert!((op.apply(&x).unwrap().mean() - x.mean()).abs() < 1e-12);
    }
}

#[test]
fn noise_norm_matches_chi_mean() {
    let (h, w) = (16, 16);
    let n = (h * w) as f64;
    let sigma = 0.05;
    let base = NoiseSpec::new(sigma, 2024).unwrap();
    let mean = (0..1000u64).map(|i| base.stream(i).sample(h, w).norm()).sum::<f64>() / 1000.0;
    let expected = sigma * n.sqrt() * (1.0 - 1.0 / (4.0 * n));
    assert!((mean / expected - 1.0).abs() < 0.01, "{mean} vs {expected}");
}

#[test]
fn noise_on_large_image_has_requested_rms() {
    let e = NoiseSpec::new(0.025, 1).unwrap().sample(256, 256);
    let rms = e.norm() / 256.0;
    assert!((rms / 0.025 - 1.0).abs() < 0.05);
}

#[test]
fn gaussian_psf_center_to_edge_ratio() {
    let p = gaussian_psf(1, 1.3).unwrap();
    // exp(0.5 / 1.69), evaluated independently
    assert!((p.at(0, 0) / p.at(0, 1) - 1.344_279_239_715_459).abs() < 1e-14);
    assert_eq!(p.weights().len(), 9);
}
