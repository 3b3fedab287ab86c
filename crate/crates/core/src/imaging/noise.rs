use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::image::Image;
use crate::error::{Error, Result};

/// Additive white Gaussian noise: per-pixel `N(0, sigma²)`, reproducible from `seed`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid_param(format!(
                "noise sigma must be a finite non-negative number, got {sigma}"
            )));
        }
        Ok(Self { sigma, seed })
    }

    /// Seed for the `index`-th independent stream derived from this spec.
    pub fn stream(&self, index: u64) -> NoiseSpec {
        NoiseSpec {
            sigma: self.sigma,
            seed: mix_seed(self.seed, index),
        }
    }

    /// Draws a noise field of the given shape.
    pub fn sample(&self, height: usize, width: usize) -> Image {
        if self.sigma == 0.0 {
            return Image::zeros(height, width);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let normal = Normal::new(0.0, self.sigma).expect("sigma validated");
        let pixels = (0..height * width).map(|_| normal.sample(&mut rng)).collect();
        Image::from_raw(height, width, pixels)
    }
}

/// SplitMix64 finalizer over `(seed, index)`; gives well-separated child seeds.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Returns `y + e` and the realized `‖e‖₂`.
pub fn add_noise(y: &Image, spec: &NoiseSpec) -> Result<(Image, f64)> {
    NoiseSpec::new(spec.sigma, spec.seed)?;
    let e = spec.sample(y.height(), y.width());
    let norm = e.norm();
    Ok((y.add(&e)?, norm))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_is_identity() {
        let y = Image::from_fn(5, 5, |r, c| (r + c) as f64 / 10.0);
        let (out, norm) = add_noise(&y, &NoiseSpec::new(0.0, 9).unwrap()).unwrap();
        assert_eq!(out, y);
        assert_eq!(norm, 0.0);
    }

    #[test]
    fn same_seed_same_noise() {
        let y = Image::zeros(32, 32);
        let spec = NoiseSpec::new(0.1, 1234).unwrap();
        let (a, na) = add_noise(&y, &spec).unwrap();
        let (b, nb) = add_noise(&y, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(na, nb);
        let (c, _) = add_noise(&y, &spec.stream(1)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn realized_norm_concentrates() {
        let y = Image::zeros(256, 256);
        for seed in 0..5 {
            let (_, norm) = add_noise(&y, &NoiseSpec::new(0.025, seed).unwrap()).unwrap();
            let per_pixel = norm / 256.0;
            assert!((per_pixel - 0.025).abs() / 0.025 < 0.05, "{per_pixel}");
        }
    }

    #[test]
    fn negative_sigma_rejected() {
        assert!(NoiseSpec::new(-0.1, 0).is_err());
        let bad = NoiseSpec { sigma: -1.0, seed: 0 };
        assert!(add_noise(&Image::zeros(2, 2), &bad).is_err());
    }
}
