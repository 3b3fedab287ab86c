//! Forward model: images, Gaussian PSFs, the periodic blur operator and
//! additive Gaussian noise.

mod blur;
mod fft;
mod image;
pub mod io;
mod noise;
mod psf;

pub use blur::{
    blur_adjoint, blur_apply, pseudo_inverse_apply, BlurOperator, Boundary, DEFAULT_PINV_TAU,
};
pub use fft::Fft2;
pub use image::Image;
pub use noise::{add_noise, mix_seed, NoiseSpec};
pub use psf::{gaussian_psf, Psf};
