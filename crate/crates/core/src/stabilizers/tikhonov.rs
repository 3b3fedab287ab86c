//! Solvers for `argmin ½‖Kx − y‖² + λ‖x‖²`.
//!
//! The half on the data term is kept literally, so the normal equations are
//! `(KᵀK + 2λI) x = Kᵀy` and every closed form below carries `2λ`.

use rustfft::num_complex::Complex64;

use crate::error::{check_shape, Error, Result};
use crate::imaging::{BlurOperator, Image};

/// Human-readable statement of the objective convention, echoed in reports.
pub const OBJECTIVE_CONVENTION: &str =
    "argmin_x 0.5*||Kx - y||^2 + lambda*||x||^2  (normal equations: (K^T K + 2*lambda*I) x = K^T y)";

#[derive(Clone, Debug)]
pub struct TikhonovProblem {
    op: BlurOperator,
    lambda: f64,
}

impl TikhonovProblem {
    pub fn new(op: BlurOperator, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid_param(format!(
                "regularization weight must be positive, got {lambda}"
            )));
        }
        Ok(Self { op, lambda })
    }

    pub fn op(&self) -> &BlurOperator {
        &self.op
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The diagonal shift `2λ` of the normal equations.
    pub fn shift(&self) -> f64 {
        2.0 * self.lambda
    }

    /// Lipschitz constant of the objective's gradient, `‖K‖² + 2λ`.
    pub fn gradient_lipschitz(&self) -> f64 {
        self.op.norm().powi(2) + self.shift()
    }

    /// Largest step (exclusive) for which Landweber is a contraction.
    pub fn max_landweber_step(&self) -> f64 {
        2.0 / self.gradient_lipschitz()
    }

    pub fn default_landweber_step(&self) -> f64 {
        1.0 / self.gradient_lipschitz()
    }
}

/// Closed-form minimizer: `x̂ = conj(t)·ŷ / (|t|² + 2λ)` per frequency.
pub fn tikhonov_direct(p: &TikhonovProblem, y: &Image) -> Result<Image> {
    let shift = p.shift();
    p.op.spectral(y, |_, t| t.conj() / (t.norm_sqr() + shift))
}

/// Runs `iterations` CGLS steps on the stacked system `[K; √(2λ) I] x ≈ [y; 0]`
/// starting from `x0`.
///
/// Stops early when the normal-equation residual vanishes or a recurrence
/// denominator is zero, returning the current iterate.
pub fn cgls_solve(p: &TikhonovProblem, y: &Image, iterations: usize, x0: &Image) -> Result<Image> {
    let op = &p.op;
    check_shape(op.shape(), y.shape())?;
    check_shape(op.shape(), x0.shape())?;
    let shift = p.shift();

    let mut x = x0.pixels().to_vec();
    // data-block residual y - Kx; the regularization block is always -√(2λ)·x
    let mut r = y.sub(&op.apply(x0)?)?.into_pixels();
    let mut s = normal_residual(op, &r, &x, shift)?;
    let mut d = s.clone();
    let mut gamma = dot(&s, &s);
    let scale = op.adjoint(y)?.norm();
    let tol = 1e-14 * scale;

    for _ in 0..iterations {
        if gamma == 0.0 || gamma.sqrt() <= tol {
            break;
        }
        let (h, w) = op.shape();
        let kd = op.apply(&Image::from_raw(h, w, d.clone()))?.into_pixels();
        let denom = dot(&kd, &kd) + shift * dot(&d, &d);
        if denom == 0.0 {
            break;
        }
        let alpha = gamma / denom;
        axpy(alpha, &d, &mut x);
        axpy(-alpha, &kd, &mut r);
        s = normal_residual(op, &r, &x, shift)?;
        let gamma_next = dot(&s, &s);
        let beta = gamma_next / gamma;
        for (di, si) in d.iter_mut().zip(&s) {
            *di = si + beta * *di;
        }
        gamma = gamma_next;
    }
    let (h, w) = op.shape();
    Ok(Image::from_raw(h, w, x))
}

/// `Kᵀ(y − Kx) − 2λx`, the negative gradient of the objective.
fn normal_residual(op: &BlurOperator, r: &[f64], x: &[f64], shift: f64) -> Result<Vec<f64>> {
    let (h, w) = op.shape();
    let mut s = op.adjoint(&Image::from_raw(h, w, r.to_vec()))?.into_pixels();
    axpy(-shift, x, &mut s);
    Ok(s)
}

/// Fixed-step gradient descent `x ← x − step·(Kᵀ(Kx − y) + 2λx)`, `iterations` times.
pub fn landweber_solve(
    p: &TikhonovProblem,
    y: &Image,
    iterations: usize,
    step: f64,
    x0: &Image,
) -> Result<Image> {
    let op = &p.op;
    check_shape(op.shape(), y.shape())?;
    check_shape(op.shape(), x0.shape())?;
    validate_step(p, step)?;
    let shift = p.shift();
    // the whole iteration is diagonal in frequency, so run it on the spectrum
    let fft = op.fft();
    let y_hat = fft.forward_real(y.pixels());
    let mut x_hat = fft.forward_real(x0.pixels());
    for _ in 0..iterations {
        for ((xh, &yh), &t) in x_hat.iter_mut().zip(&y_hat).zip(op.transfer()) {
            let grad = t.conj() * (t * *xh - yh) + shift * *xh;
            *xh -= step * grad;
        }
    }
    fft.inverse(&mut x_hat);
    let scale = 1.0 / x_hat.len() as f64;
    let (h, w) = op.shape();
    Ok(Image::from_raw(h, w, x_hat.iter().map(|c| c.re * scale).collect()))
}

pub(crate) fn validate_step(p: &TikhonovProblem, step: f64) -> Result<()> {
    let max = p.max_landweber_step();
    if !(step > 0.0 && step < max) {
        return Err(Error::invalid_param(format!(
            "landweber step {step} outside the contraction range (0, {max})"
        )));
    }
    Ok(())
}

/// Per-frequency gain of the linear part of the Landweber map `y ↦ x_M`:
/// `|t| · step · |Σ_{j<M} (1 − step(|t|² + 2λ))^j|`.
pub fn landweber_mode_gain(p: &TikhonovProblem, t: Complex64, iterations: usize, step: f64) -> f64 {
    let rate = 1.0 - step * (t.norm_sqr() + p.shift());
    let mut acc = 0.0;
    let mut power = 1.0;
    for _ in 0..iterations {
        acc += power;
        power *= rate;
    }
    t.norm() * step * acc.abs()
}

/// Operator norm of the linear part of the Landweber map.
pub fn landweber_gain(p: &TikhonovProblem, iterations: usize, step: f64) -> f64 {
    p.op
        .transfer()
        .iter()
        .map(|&t| landweber_mode_gain(p, t, iterations, step))
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
