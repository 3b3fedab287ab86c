//! Accuracy and stability measurements for reconstructors.
//!
//! `η̂` is the worst noiseless reconstruction error over a test set and
//! `Ĉ` the worst excess error per unit noise norm,
//! `(‖ψ(Kx + e) − x‖ − η̂) / ‖e‖`. A reconstructor is δ-stable when
//! `Ĉ ∈ [0, 1)`.

mod report;
mod ssim;

pub use report::{
    parse_report_csv, read_report_csv, report_csv, write_report, ReportRow, ReportSummary, REPORT_CSV_HEADER,
};
pub use ssim::{ssim, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW_RADIUS};

use crate::error::{check_shape, Error, Result};
use crate::imaging::{BlurOperator, Image, NoiseSpec, DEFAULT_PINV_TAU};

/// Any map from an observation to an image estimate.
pub trait Reconstructor {
    fn reconstruct(&self, y: &Image) -> Result<Image>;

    fn tag(&self) -> String;
}

/// Wraps a closure as a [`Reconstructor`].
pub struct FnReconstructor<F> {
    tag: String,
    f: F,
}

impl<F: Fn(&Image) -> Result<Image>> FnReconstructor<F> {
    pub fn new(tag: impl Into<String>, f: F) -> Self {
        Self { tag: tag.into(), f }
    }
}

impl<F: Fn(&Image) -> Result<Image>> Reconstructor for FnReconstructor<F> {
    fn reconstruct(&self, y: &Image) -> Result<Image> {
        (self.f)(y)
    }

    fn tag(&self) -> String {
        self.tag.clone()
    }
}

/// `K†` with a relative spectral threshold.
pub struct PseudoInverse<'a> {
    pub op: &'a BlurOperator,
    pub tau: f64,
}

impl<'a> PseudoInverse<'a> {
    pub fn new(op: &'a BlurOperator) -> Self {
        Self {
            op,
            tau: DEFAULT_PINV_TAU,
        }
    }
}

impl Reconstructor for PseudoInverse<'_> {
    fn reconstruct(&self, y: &Image) -> Result<Image> {
        self.op.pseudo_inverse(y, self.tau)
    }

    fn tag(&self) -> String {
        "pinv".into()
    }
}

/// A ground-truth image and its noiseless blurred observation `Kx`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub gt: Image,
    pub blurred: Image,
}

impl Sample {
    pub fn from_gt(op: &BlurOperator, gt: Image) -> Result<Self> {
        let blurred = op.apply(&gt)?;
        Ok(Self { gt, blurred })
    }
}

pub fn reconstruction_error(psi_output: &Image, x_gt: &Image) -> Result<f64> {
    check_shape(x_gt.shape(), psi_output.shape())?;
    Ok(psi_output.sub(x_gt)?.norm())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Accuracy {
    pub eta_hat: f64,
    /// `1 / η̂`, or `+∞` when `η̂ = 0`.
    pub eta_hat_inv: f64,
    pub errors: Vec<f64>,
}

fn inverse_or_inf(v: f64) -> f64 {
    if v > 0.0 {
        1.0 / v
    } else {
        f64::INFINITY
    }
}

/// Worst noiseless error `η̂ = max ‖ψ(Kx) − x‖` over the test set.
pub fn empirical_accuracy(psi: &dyn Reconstructor, test_set: &[Sample]) -> Result<Accuracy> {
    if test_set.is_empty() {
        return Err(Error::InvalidInput("test set is empty".into()));
    }
    let errors = test_set
        .iter()
        .map(|s| reconstruction_error(&psi.reconstruct(&s.blurred)?, &s.gt))
        .collect::<Result<Vec<_>>>()?;
    let eta_hat = errors.iter().copied().fold(0.0, f64::max);
    Ok(Accuracy {
        eta_hat,
        eta_hat_inv: inverse_or_inf(eta_hat),
        errors,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageStability {
    pub err_noiseless: f64,
    pub err_noisy: f64,
    pub noise_norm: f64,
    /// `(err_noisy − η̂) / noise_norm`.
    pub ratio: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub eta_hat: f64,
    pub eta_hat_inv: f64,
    pub c_hat: f64,
    pub delta_stable: bool,
    pub sigma: f64,
    pub seed: u64,
    pub reconstructor_tag: String,
    pub per_image: Vec<ImageStability>,
}

impl StabilityReport {
    pub fn mean_noisy_error(&self) -> f64 {
        self.per_image.iter().map(|p| p.err_noisy).sum::<f64>() / self.per_image.len() as f64
    }

    pub fn mean_ssim(&self) -> f64 {
        self.per_image.iter().map(|p| p.ssim).sum::<f64>() / self.per_image.len() as f64
    }

    /// Images whose excess error stays below their noise norm.
    pub fn stable_count(&self) -> usize {
        self.per_image.iter().filter(|p| p.ratio < 1.0).count()
    }
}

/// Noise realization used for test image `index`. Shared by every
/// reconstructor evaluated with the same `(sigma, seed)`, so comparisons
/// are paired.
pub fn test_noise(sigma: f64, seed: u64, index: usize, shape: (usize, usize)) -> Result<Image> {
    Ok(NoiseSpec::new(sigma, seed)?.stream(index as u64).sample(shape.0, shape.1))
}

/// Estimates `Ĉ` with one fresh noise draw per test image. `η̂` is computed
/// on the same test set first.
pub fn empirical_stability(
    psi: &dyn Reconstructor,
    test_set: &[Sample],
    sigma: f64,
    seed: u64,
) -> Result<StabilityReport> {
    if !(sigma > 0.0) {
        return Err(Error::invalid_param(format!("sigma must be positive, got {sigma}")));
    }
    let acc = empirical_accuracy(psi, test_set)?;
    let mut per_image = Vec::with_capacity(test_set.len());
    for (i, s) in test_set.iter().enumerate() {
        let e = test_noise(sigma, seed, i, s.blurred.shape())?;
        let out = psi.reconstruct(&s.blurred.add(&e)?)?;
        let err_noisy = reconstruction_error(&out, &s.gt)?;
        let noise_norm = e.norm();
        per_image.push(ImageStability {
            err_noiseless: acc.errors[i],
            err_noisy,
            noise_norm,
            ratio: (err_noisy - acc.eta_hat) / noise_norm,
            ssim: ssim(&out, &s.gt)?,
        });
    }
    Ok(assemble(acc, per_image, sigma, seed, psi.tag()))
}

fn assemble(
    acc: Accuracy,
    per_image: Vec<ImageStability>,
    sigma: f64,
    seed: u64,
    tag: String,
) -> StabilityReport {
    let c_hat = per_image
        .iter()
        .map(|p| p.ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    StabilityReport {
        eta_hat: acc.eta_hat,
        eta_hat_inv: acc.eta_hat_inv,
        c_hat,
        delta_stable: (0.0..1.0).contains(&c_hat),
        sigma,
        seed,
        reconstructor_tag: tag,
        per_image,
    }
}

/// Stability estimate against caller-supplied perturbations, one per image.
pub fn stability_with_perturbations(
    psi: &dyn Reconstructor,
    test_set: &[Sample],
    perturbations: &[Image],
    tag_sigma: f64,
) -> Result<StabilityReport> {
    if perturbations.len() != test_set.len() {
        return Err(Error::InvalidInput(format!(
            "{} perturbations for {} images",
            perturbations.len(),
            test_set.len()
        )));
    }
    let acc = empirical_accuracy(psi, test_set)?;
    let mut per_image = Vec::with_capacity(test_set.len());
    for (i, (s, e)) in test_set.iter().zip(perturbations).enumerate() {
        let out = psi.reconstruct(&s.blurred.add(e)?)?;
        let err_noisy = reconstruction_error(&out, &s.gt)?;
        let noise_norm = e.norm();
        per_image.push(ImageStability {
            err_noiseless: acc.errors[i],
            err_noisy,
            noise_norm,
            ratio: (err_noisy - acc.eta_hat) / noise_norm,
            ssim: ssim(&out, &s.gt).unwrap_or(f64::NAN),
        });
    }
    Ok(assemble(acc, per_image, tag_sigma, 0, psi.tag()))
}

#[derive(Clone, Debug)]
pub struct Theorem1Bound {
    pub bound: f64,
    pub e_tilde: Image,
    /// Smallest retained `|transfer|`, the direction `ẽ` lives on.
    pub transfer_min: f64,
    pub frequency: (usize, usize),
}

/// Lower bound `(‖K†ẽ‖ − 2η̂) / ‖ẽ‖` on the stability constant of any
/// reconstructor with accuracy `η̂`, evaluated at `ẽ = δ·` (unit cosine on
/// the retained frequency with the smallest `|transfer|`).
pub fn theorem1_bound(op: &BlurOperator, eta_hat: f64, delta: f64) -> Result<Theorem1Bound> {
    theorem1_bound_with_tau(op, eta_hat, delta, DEFAULT_PINV_TAU)
}

pub fn theorem1_bound_with_tau(
    op: &BlurOperator,
    eta_hat: f64,
    delta: f64,
    tau: f64,
) -> Result<Theorem1Bound> {
    if !(delta > 0.0) {
        return Err(Error::invalid_param(format!("delta must be positive, got {delta}")));
    }
    let cutoff = tau * op.norm();
    let (index, transfer_min) = op
        .transfer()
        .iter()
        .map(|t| t.norm())
        .enumerate()
        .filter(|&(_, m)| m > cutoff && m > 0.0)
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    let (u, v) = op.frequency(index);
    let (h, w) = op.shape();
    let mode = Image::from_fn(h, w, |r, c| {
        let phase = 2.0 * std::f64::consts::PI * ((u * r) as f64 / h as f64 + (v * c) as f64 / w as f64);
        phase.cos()
    });
    let e_tilde = mode.scale(delta / mode.norm());
    let amplified = op.pseudo_inverse(&e_tilde, tau)?.norm();
    Ok(Theorem1Bound {
        bound: (amplified - 2.0 * eta_hat) / e_tilde.norm(),
        e_tilde,
        transfer_min,
        frequency: (u, v),
    })
}
