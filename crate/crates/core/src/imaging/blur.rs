use rustfft::num_complex::Complex64;

use super::fft::Fft2;
use super::image::Image;
use super::psf::Psf;
use crate::error::{check_shape, Error, Result};

/// Default relative threshold below which spectral modes are treated as null.
pub const DEFAULT_PINV_TAU: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
}

/// Circulant blur `K` on a fixed grid, diagonalized by the 2-D DFT.
///
/// `K x` is the circular convolution `y[r, c] = Σ psf(di, dj) · x[r - di, c - dj]`.
/// The transfer array holds the DFT eigenvalues of the circulant embedding, so
/// `Kᵀ` and `K†` reduce to pointwise operations on the spectrum.
#[derive(Clone, Debug)]
pub struct BlurOperator {
    psf: Psf,
    boundary: Boundary,
    shape: (usize, usize),
    transfer: Vec<Complex64>,
    fft: Fft2,
}

impl BlurOperator {
    pub fn new(psf: Psf, shape: (usize, usize)) -> Result<Self> {
        let (h, w) = shape;
        if h == 0 || w == 0 {
            return Err(Error::invalid_param("blur grid must be non-empty"));
        }
        let fft = Fft2::new(h, w);
        let transfer = fft.forward_real(&circulant_kernel(&psf, h, w));
        Ok(Self {
            psf,
            boundary: Boundary::Periodic,
            shape,
            transfer,
            fft,
        })
    }

    pub fn identity(shape: (usize, usize)) -> Result<Self> {
        Self::new(Psf::identity(), shape)
    }

    pub fn psf(&self) -> &Psf {
        &self.psf
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn transfer(&self) -> &[Complex64] {
        &self.transfer
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    /// Operator 2-norm, `max |transfer|`.
    pub fn norm(&self) -> f64 {
        self.transfer.iter().map(|t| t.norm()).fold(0.0, f64::max)
    }

    /// `(row, col)` frequency indices of a flat spectral index.
    pub fn frequency(&self, index: usize) -> (usize, usize) {
        (index / self.shape.1, index % self.shape.1)
    }

    /// A radius-0 PSF is exactly the identity; skipping the FFT keeps it so.
    fn is_identity(&self) -> bool {
        self.psf.radius() == 0
    }

    pub fn apply(&self, x: &Image) -> Result<Image> {
        if self.is_identity() {
            check_shape(self.shape, x.shape())?;
            return Ok(x.clone());
        }
        self.spectral(x, |_, t| t)
    }

    pub fn adjoint(&self, y: &Image) -> Result<Image> {
        if self.is_identity() {
            check_shape(self.shape, y.shape())?;
            return Ok(y.clone());
        }
        self.spectral(y, |_, t| t.conj())
    }

    /// Thresholded spectral inverse: divides by the transfer where
    /// `|t| > tau · max|t|` and zeroes the remaining modes.
    pub fn pseudo_inverse(&self, y: &Image, tau: f64) -> Result<Image> {
        if !(tau >= 0.0) {
            return Err(Error::invalid_param(format!("tau must be >= 0, got {tau}")));
        }
        if self.is_identity() && tau < 1.0 {
            check_shape(self.shape, y.shape())?;
            return Ok(y.clone());
        }
        let cutoff = tau * self.norm();
        self.spectral(y, |_, t| {
            let mag = t.norm();
            if mag > cutoff && mag > 0.0 {
                t.inv()
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// Applies an arbitrary spectral multiplier `m(index, transfer[index])`.
    pub fn spectral<F>(&self, x: &Image, multiplier: F) -> Result<Image>
    where
        F: Fn(usize, Complex64) -> Complex64,
    {
        Ok(self.spectral_with_residual(x, multiplier)?.0)
    }

    /// Like [`Self::spectral`] but also reports the largest imaginary part
    /// discarded when returning to the real domain.
    pub fn spectral_with_residual<F>(&self, x: &Image, multiplier: F) -> Result<(Image, f64)>
    where
        F: Fn(usize, Complex64) -> Complex64,
    {
        check_shape(self.shape, x.shape())?;
        let mut buf = self.fft.forward_real(x.pixels());
        for (i, (b, &t)) in buf.iter_mut().zip(&self.transfer).enumerate() {
            *b *= multiplier(i, t);
        }
        self.fft.inverse(&mut buf);
        let scale = 1.0 / buf.len() as f64;
        let mut residual = 0.0f64;
        let pixels = buf
            .iter()
            .map(|c| {
                residual = residual.max((c.im * scale).abs());
                c.re * scale
            })
            .collect();
        Ok((Image::from_raw(self.shape.0, self.shape.1, pixels), residual))
    }
}

/// Zero-padded PSF with its center moved to `(0, 0)`, wrapping periodically.
fn circulant_kernel(psf: &Psf, h: usize, w: usize) -> Vec<f64> {
    let r = psf.radius() as isize;
    let mut k = vec![0.0; h * w];
    for di in -r..=r {
        for dj in -r..=r {
            let row = di.rem_euclid(h as isize) as usize;
            let col = dj.rem_euclid(w as isize) as usize;
            k[row * w + col] += psf.at(di, dj);
        }
    }
    k
}

pub fn blur_apply(op: &BlurOperator, x: &Image) -> Result<Image> {
    op.apply(x)
}

pub fn blur_adjoint(op: &BlurOperator, y: &Image) -> Result<Image> {
    op.adjoint(y)
}

pub fn pseudo_inverse_apply(op: &BlurOperator, y: &Image, tau: f64) -> Result<Image> {
    op.pseudo_inverse(y, tau)
}
