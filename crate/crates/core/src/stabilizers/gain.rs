use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Stabilizer;
use crate::error::{Error, Result};
use crate::imaging::{mix_seed, BlurOperator, Image, NoiseSpec};

#[derive(Clone, Copy, Debug)]
pub struct GainOptions {
    pub samples: usize,
    pub sigma: f64,
    pub seed: u64,
    /// Difference-quotient power steps refining each sampled perturbation.
    /// Zero keeps the raw random draw.
    pub power_iterations: usize,
    /// Size of the Krylov basis used for Rayleigh-Ritz refinement after the
    /// power steps. Near-tied top gains make plain power steps crawl; the
    /// Ritz direction converges far faster. Zero disables it.
    pub krylov_dim: usize,
}

impl GainOptions {
    pub fn new(samples: usize, sigma: f64, seed: u64) -> Self {
        Self {
            samples,
            sigma,
            seed,
            power_iterations: 100,
            krylov_dim: 30,
        }
    }
}

/// Empirical `L̂_φ = max ‖φ(Kx + e) − φ(Kx)‖ / ‖e‖` over sampled `(x, e)`.
pub fn estimate_stabilizer_gain(
    phi: &Stabilizer,
    op: &BlurOperator,
    samples: usize,
    sigma: f64,
    seed: u64,
) -> Result<f64> {
    estimate_stabilizer_gain_with(phi, op, &GainOptions::new(samples, sigma, seed))
}

/// Each sample draws a uniform image `x` and white noise `e` with norm fixed
/// at its realized value, then repeatedly replaces `e` by the rescaled
/// response `φ(Kx + e) − φ(Kx)`. For a self-adjoint linear part this is the
/// power method and the ratio climbs to the operator norm. A Rayleigh-Ritz
/// pass over the Krylov space of those responses then sharpens the direction.
pub fn estimate_stabilizer_gain_with(
    phi: &Stabilizer,
    op: &BlurOperator,
    opts: &GainOptions,
) -> Result<f64> {
    if opts.samples == 0 {
        return Err(Error::invalid_param("need at least one sample"));
    }
    if !(opts.sigma > 0.0) {
        return Err(Error::invalid_param(format!(
            "sigma must be positive, got {}",
            opts.sigma
        )));
    }
    if let Stabilizer::Identity = phi {
        // (Kx + e) − Kx = e up to rounding
        return Ok(1.0);
    }
    let (h, w) = op.shape();
    let mut best = 0.0f64;
    for s in 0..opts.samples as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(opts.seed, 2 * s));
        let x = Image::from_fn(h, w, |_, _| rng.gen::<f64>());
        let kx = op.apply(&x)?;
        let base = phi.apply(&kx)?;
        let mut e = NoiseSpec::new(opts.sigma, mix_seed(opts.seed, 2 * s + 1))?.sample(h, w);
        let radius = e.norm();
        for _ in 0..=opts.power_iterations {
            let response = phi.apply(&kx.add(&e)?)?.sub(&base)?;
            let out = response.norm();
            best = best.max(out / e.norm());
            if out == 0.0 {
                break;
            }
            e = response.scale(radius / out);
        }
        if opts.krylov_dim > 0 {
            let respond = |v: &Image| -> Result<Image> {
                Ok(phi.apply(&kx.add(&v.scale(radius))?)?.sub(&base)?.scale(1.0 / radius))
            };
            best = best.max(ritz_refine(respond, e, opts.krylov_dim)?);
        }
    }
    Ok(best)
}

/// Restarted Rayleigh-Ritz on `‖L v‖ / ‖v‖` over the Krylov space of `L`.
/// Every returned value is a measured ratio at an actual direction.
fn ritz_refine(respond: impl Fn(&Image) -> Result<Image>, start: Image, dim: usize) -> Result<f64> {
    const MAX_RESTARTS: usize = 50;
    if start.norm() == 0.0 {
        return Ok(0.0);
    }
    let mut dir = start.scale(1.0 / start.norm());
    let mut best = 0.0f64;
    for _ in 0..MAX_RESTARTS {
        let mut basis = vec![dir];
        let mut images: Vec<Image> = Vec::with_capacity(dim);
        while images.len() < dim {
            let w = respond(&basis[images.len()])?;
            let scale = w.norm();
            images.push(w.clone());
            if images.len() == dim {
                break;
            }
            let mut v = w;
            for _ in 0..2 {
                for b in &basis {
                    v = v.sub(&b.scale(v.dot(b)?))?;
                }
            }
            let n = v.norm();
            if !(n > 1e-12 * scale) {
                break;
            }
            basis.push(v.scale(1.0 / n));
        }
        let m = images.len();
        let mut gram = nalgebra::DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for k in 0..=i {
                let g = images[i].dot(&images[k])?;
                gram[(i, k)] = g;
                gram[(k, i)] = g;
            }
        }
        let eig = nalgebra::SymmetricEigen::new(gram);
        let top = eig.eigenvalues.imax();
        let coeffs = eig.eigenvectors.column(top);
        let mut next = Image::zeros(basis[0].height(), basis[0].width());
        for (b, &c) in basis.iter().zip(coeffs.iter()) {
            next = next.add(&b.scale(c))?;
        }
        next = next.scale(1.0 / next.norm());
        let ratio = respond(&next)?.norm();
        let improved = ratio > best * (1.0 + 1e-14);
        best = best.max(ratio);
        dir = next;
        if !improved {
            break;
        }
    }
    Ok(best)
}
