//! Pre-processing maps `φ` placed in front of a reconstructor: a Gaussian
//! low-pass filter and `M` iterations of a Tikhonov solver.

mod gain;
mod tikhonov;

pub use gain::{estimate_stabilizer_gain, estimate_stabilizer_gain_with, GainOptions};
pub use tikhonov::{
    cgls_solve, landweber_gain, landweber_mode_gain, landweber_solve, tikhonov_direct,
    TikhonovProblem, OBJECTIVE_CONVENTION,
};

use crate::error::{check_shape, Error, Result};
use crate::imaging::{BlurOperator, Image, Psf};

pub const DEFAULT_LAMBDA: f64 = 1e-2;
pub const DEFAULT_ITERATIONS: usize = 50;
pub const DEFAULT_FILTER_RADIUS: usize = 3;
pub const DEFAULT_FILTER_SIGMA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IterativeMethod {
    Cgls,
    Landweber,
}

/// Gaussian low-pass pre-filter with periodic boundary.
#[derive(Clone, Debug)]
pub struct FilterStabilizer {
    filter: BlurOperator,
}

impl FilterStabilizer {
    pub fn new(psf_f: Psf, shape: (usize, usize)) -> Result<Self> {
        Ok(Self {
            filter: BlurOperator::new(psf_f, shape)?,
        })
    }

    pub fn gaussian(radius: usize, sigma_f: f64, shape: (usize, usize)) -> Result<Self> {
        Self::new(Psf::gaussian(radius, sigma_f)?, shape)
    }

    pub fn psf(&self) -> &Psf {
        self.filter.psf()
    }

    pub fn apply(&self, y: &Image) -> Result<Image> {
        self.filter.apply(y)
    }

    /// Largest spectral gain over all frequencies; the DC gain is 1.
    pub fn gain(&self) -> f64 {
        self.filter.norm()
    }

    pub fn dc_gain(&self) -> f64 {
        self.filter.transfer()[0].norm()
    }

    /// Largest spectral gain excluding the zero frequency.
    pub fn max_nonzero_frequency_gain(&self) -> f64 {
        self.filter.transfer()[1..]
            .iter()
            .map(|t| t.norm())
            .fold(0.0, f64::max)
    }
}

pub fn filter_apply(f: &FilterStabilizer, y: &Image) -> Result<Image> {
    f.apply(y)
}

/// `φ_M`: the iterate reached after `iterations` steps from a fixed start.
#[derive(Clone, Debug)]
pub struct IterativeStabilizer {
    problem: TikhonovProblem,
    method: IterativeMethod,
    iterations: usize,
    x0: Image,
    landweber_step: f64,
}

impl IterativeStabilizer {
    /// Zero starting iterate and the default step `1 / (‖K‖² + 2λ)`.
    pub fn new(problem: TikhonovProblem, method: IterativeMethod, iterations: usize) -> Result<Self> {
        let (h, w) = problem.op().shape();
        let step = problem.default_landweber_step();
        Self::with_start(problem, method, iterations, Image::zeros(h, w), step)
    }

    pub fn with_start(
        problem: TikhonovProblem,
        method: IterativeMethod,
        iterations: usize,
        x0: Image,
        landweber_step: f64,
    ) -> Result<Self> {
        if iterations == 0 {
            return Err(Error::invalid_param("stabilizer needs at least one iteration"));
        }
        check_shape(problem.op().shape(), x0.shape())?;
        tikhonov::validate_step(&problem, landweber_step)?;
        Ok(Self {
            problem,
            method,
            iterations,
            x0,
            landweber_step,
        })
    }

    pub fn problem(&self) -> &TikhonovProblem {
        &self.problem
    }

    pub fn method(&self) -> IterativeMethod {
        self.method
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn landweber_step(&self) -> f64 {
        self.landweber_step
    }

    pub fn apply(&self, y: &Image) -> Result<Image> {
        match self.method {
            IterativeMethod::Cgls => cgls_solve(&self.problem, y, self.iterations, &self.x0),
            IterativeMethod::Landweber => landweber_solve(
                &self.problem,
                y,
                self.iterations,
                self.landweber_step,
                &self.x0,
            ),
        }
    }

    /// Exact gain of the linear part; only defined for Landweber, which is
    /// affine in `y`. CGLS is not.
    pub fn linear_gain(&self) -> Option<f64> {
        match self.method {
            IterativeMethod::Landweber => Some(landweber_gain(
                &self.problem,
                self.iterations,
                self.landweber_step,
            )),
            IterativeMethod::Cgls => None,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Stabilizer {
    Identity,
    Filter(FilterStabilizer),
    Iterative(IterativeStabilizer),
}

impl Stabilizer {
    pub fn apply(&self, y: &Image) -> Result<Image> {
        match self {
            Stabilizer::Identity => Ok(y.clone()),
            Stabilizer::Filter(f) => f.apply(y),
            Stabilizer::Iterative(s) => s.apply(y),
        }
    }

    /// Exactly computable operator norm of the linear part, when `φ` is affine.
    pub fn exact_gain(&self) -> Option<f64> {
        match self {
            Stabilizer::Identity => Some(1.0),
            Stabilizer::Filter(f) => Some(f.gain()),
            Stabilizer::Iterative(s) => s.linear_gain(),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Stabilizer::Identity => "NN",
            Stabilizer::Filter(_) => "FiNN",
            Stabilizer::Iterative(_) => "StNN",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{gaussian_psf, NoiseSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn filter_linearity_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let op = BlurOperator::new(gaussian_psf(5, 1.3).unwrap(), (16, 16)).unwrap();
        let f = FilterStabilizer::gaussian(3, 1.0, (16, 16)).unwrap();
        for i in 0..20 {
            let x = Image::from_fn(16, 16, |_, _| rng.gen::<f64>());
            let kx = op.apply(&x).unwrap();
            let e = NoiseSpec::new(0.05, i).unwrap().sample(16, 16);
            let lhs = f.apply(&kx.add(&e).unwrap()).unwrap();
            let rhs = f.apply(&kx).unwrap().add(&f.apply(&e).unwrap()).unwrap();
            assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
        }
    }

    #[test]
    fn radius_zero_filter_is_identity() {
        let f = FilterStabilizer::gaussian(0, 1.0, (5, 5)).unwrap();
        let y = Image::from_fn(5, 5, |r, c| (r * c) as f64 * 0.1);
        assert!(f.apply(&y).unwrap().max_abs_diff(&y).unwrap() < 1e-15);
    }

    #[test]
    fn filter_shrinks_white_noise() {
        let f = FilterStabilizer::gaussian(3, 1.0, (32, 32)).unwrap();
        let shrunk = (0..1000)
            .filter(|&s| {
                let e = NoiseSpec::new(1.0, s).unwrap().sample(32, 32);
                f.apply(&e).unwrap().norm() < e.norm()
            })
            .count();
        assert!(shrunk >= 990, "{shrunk}");
    }

    #[test]
    fn filter_gain_is_one_at_dc() {
        let f = FilterStabilizer::gaussian(3, 1.0, (16, 16)).unwrap();
        assert!((f.dc_gain() - 1.0).abs() < 1e-15);
        assert!(f.gain() <= 1.0 + 1e-12);
        assert!(f.max_nonzero_frequency_gain() < 1.0);
    }

    #[test]
    fn iterative_needs_iterations() {
        let op = BlurOperator::identity((4, 4)).unwrap();
        let p = TikhonovProblem::new(op, 0.1).unwrap();
        assert!(IterativeStabilizer::new(p.clone(), IterativeMethod::Cgls, 0).is_err());
        let s = IterativeStabilizer::new(p, IterativeMethod::Landweber, 3).unwrap();
        assert!(s.linear_gain().is_some());
    }

    #[test]
    fn tags() {
        assert_eq!(Stabilizer::Identity.tag(), "NN");
        assert_eq!(Stabilizer::Identity.exact_gain(), Some(1.0));
    }
}
