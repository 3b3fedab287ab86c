use crate::error::{Error, Result};

/// Square point-spread function of odd side `2·radius + 1`, centered at
/// `(radius, radius)` and stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Psf {
    radius: usize,
    weights: Vec<f64>,
}

impl Psf {
    /// Wraps explicit weights. They are normalized to unit sum.
    pub fn from_weights(radius: usize, weights: Vec<f64>) -> Result<Self> {
        let side = 2 * radius + 1;
        if weights.len() != side * side {
            return Err(Error::invalid_param(format!(
                "psf of radius {radius} needs {} weights, got {}",
                side * side,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid_param("psf weights must be finite"));
        }
        let total: f64 = weights.iter().sum();
        if total == 0.0 {
            return Err(Error::invalid_param("psf weights sum to zero"));
        }
        Ok(Self {
            radius,
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    /// The identity kernel: a single unit weight.
    pub fn identity() -> Self {
        Self {
            radius: 0,
            weights: vec![1.0],
        }
    }

    /// Gaussian kernel `exp(-(i² + j²) / (2σ²))` on `i, j ∈ [-radius, radius]`,
    /// normalized to sum one.
    pub fn gaussian(radius: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid_param(format!(
                "gaussian sigma must be positive, got {sigma}"
            )));
        }
        let r = radius as i64;
        let mut weights = Vec::with_capacity((2 * radius + 1).pow(2));
        for i in -r..=r {
            for j in -r..=r {
                let d2 = (i * i + j * j) as f64;
                weights.push((-0.5 * d2 / (sigma * sigma)).exp());
            }
        }
        Self::from_weights(radius, weights)
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at offset `(di, dj)` from the center.
    pub fn at(&self, di: isize, dj: isize) -> f64 {
        let r = self.radius as isize;
        debug_assert!(di.abs() <= r && dj.abs() <= r);
        self.weights[((di + r) * (2 * r + 1) + dj + r) as usize]
    }
}

/// Shorthand for [`Psf::gaussian`].
pub fn gaussian_psf(radius: usize, sigma_g: f64) -> Result<Psf> {
    Psf::gaussian(radius, sigma_g)
}
