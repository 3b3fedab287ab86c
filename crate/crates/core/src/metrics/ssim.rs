use crate::error::{check_shape, Error, Result};
use crate::imaging::Image;

pub const SSIM_WINDOW_RADIUS: usize = 5;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Mean structural similarity for unit dynamic range.
///
/// Local statistics use an 11x11 Gaussian window (σ = 1.5) and population
/// (co)variances; the mean is taken over every position where the window
/// fits entirely inside the image.
pub fn ssim(x: &Image, y: &Image) -> Result<f64> {
    check_shape(x.shape(), y.shape())?;
    let (h, w) = x.shape();
    let side = 2 * SSIM_WINDOW_RADIUS + 1;
    if h < side || w < side {
        return Err(Error::InvalidInput(format!(
            "ssim needs at least {side}x{side} pixels, got {h}x{w}"
        )));
    }
    let kernel = gaussian_window();
    let xs = x.pixels();
    let ys = y.pixels();
    let xx: Vec<f64> = xs.iter().map(|a| a * a).collect();
    let yy: Vec<f64> = ys.iter().map(|a| a * a).collect();
    let xy: Vec<f64> = xs.iter().zip(ys).map(|(a, b)| a * b).collect();
    let mu_x = filter_valid(xs, h, w, &kernel);
    let mu_y = filter_valid(ys, h, w, &kernel);
    let e_xx = filter_valid(&xx, h, w, &kernel);
    let e_yy = filter_valid(&yy, h, w, &kernel);
    let e_xy = filter_valid(&xy, h, w, &kernel);

    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let mut total = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = e_xx[i] - mx * mx;
        let vy = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        let num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
        let den = (mx * mx + my * my + c1) * (vx + vy + c2);
        total += num / den;
    }
    Ok(total / mu_x.len() as f64)
}

fn gaussian_window() -> Vec<f64> {
    let r = SSIM_WINDOW_RADIUS as i64;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-0.5 * (i * i) as f64 / (SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Separable correlation keeping only fully supported outputs.
fn filter_valid(data: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        let src = &data[r * w..(r + 1) * w];
        for c in 0..ow {
            rows[r * ow + c] = k.iter().zip(&src[c..c + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..n).map(|i| k[i] * rows[(r + i) * ow + c]).sum();
        }
    }
    out
}
