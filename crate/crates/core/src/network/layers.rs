//! Layer primitives with explicit forward caches and backward passes.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{Param, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in normalization layers; running statistics are updated.
    Train,
    /// Running statistics only.
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Zero,
    Periodic,
}

/// Same-size 2-D convolution (cross-correlation) with odd square kernels.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub padding: Padding,
    pub weight: Param,
    pub bias: Param,
    cols: Vec<Vec<f64>>,
    input_hw: (usize, usize),
}

impl Conv2d {
    /// He-normal weights, zero bias.
    pub fn new<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        padding: Padding,
        rng: &mut R,
    ) -> Self {
        assert!(kernel_size % 2 == 1, "kernel size must be odd");
        let fan_in = in_channels * kernel_size * kernel_size;
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
        let weights = (0..out_channels * fan_in).map(|_| normal.sample(rng)).collect();
        Self {
            in_channels,
            out_channels,
            kernel_size,
            padding,
            weight: Param::new(
                vec![out_channels, in_channels, kernel_size, kernel_size],
                weights,
            ),
            bias: Param::filled(vec![out_channels], 0.0),
            cols: Vec::new(),
            input_hw: (0, 0),
        }
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_size * self.kernel_size
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        assert_eq!(x.c, self.in_channels, "conv input channel mismatch");
        let (h, w) = (x.h, x.w);
        let hw = h * w;
        let k = self.patch_len();
        let mut out = Tensor::zeros(x.n, self.out_channels, h, w);
        self.cols.clear();
        self.input_hw = (h, w);
        for i in 0..x.n {
            let col = im2col(x.sample(i), x.c, h, w, self.kernel_size, self.padding);
            let y = out.sample_mut(i);
            for (o, &b) in self.bias.value.iter().enumerate() {
                y[o * hw..(o + 1) * hw].iter_mut().for_each(|v| *v = b);
            }
            gemm(
                self.out_channels,
                k,
                hw,
                &self.weight.value,
                (k, 1),
                &col,
                (hw, 1),
                y,
                1.0,
            );
            self.cols.push(col);
        }
        out
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let (h, w) = self.input_hw;
        assert_eq!((dy.h, dy.w, dy.c), (h, w, self.out_channels));
        assert_eq!(dy.n, self.cols.len(), "backward without matching forward");
        let hw = h * w;
        let k = self.patch_len();
        let mut dx = Tensor::zeros(dy.n, self.in_channels, h, w);
        let mut dcol = vec![0.0; k * hw];
        for i in 0..dy.n {
            let g = dy.sample(i);
            for o in 0..self.out_channels {
                self.bias.grad[o] += g[o * hw..(o + 1) * hw].iter().sum::<f64>();
            }
            // dW += dY · colᵀ
            gemm(
                self.out_channels,
                hw,
                k,
                g,
                (hw, 1),
                &self.cols[i],
                (1, hw),
                &mut self.weight.grad,
                1.0,
            );
            // dcol = Wᵀ · dY
            dcol.iter_mut().for_each(|v| *v = 0.0);
            gemm(
                k,
                self.out_channels,
                hw,
                &self.weight.value,
                (1, k),
                g,
                (hw, 1),
                &mut dcol,
                0.0,
            );
            col2im(
                &dcol,
                dx.sample_mut(i),
                self.in_channels,
                h,
                w,
                self.kernel_size,
                self.padding,
            );
        }
        dx
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// `C (m x n) = A (m x k) · B (k x n) + beta·C`; strides are `(row, col)`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the slices cover every index reachable from the given shapes
    // and strides (checked above for the packed layouts used in this module).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Rows indexed by `(channel, ki, kj)`, columns by output pixel.
fn im2col(x: &[f64], c: usize, h: usize, w: usize, k: usize, padding: Padding) -> Vec<f64> {
    let hw = h * w;
    let p = (k / 2) as isize;
    let mut col = vec![0.0; c * k * k * hw];
    for ch in 0..c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        for ki in 0..k {
            for kj in 0..k {
                let row = ((ch * k + ki) * k + kj) * hw;
                let dst = &mut col[row..row + hw];
                let dr = ki as isize - p;
                let dc = kj as isize - p;
                for r in 0..h {
                    let sr = r as isize + dr;
                    let out = &mut dst[r * w..(r + 1) * w];
                    match padding {
                        Padding::Zero => {
                            if sr < 0 || sr >= h as isize {
                                continue;
                            }
                            let src = &plane[sr as usize * w..(sr as usize + 1) * w];
                            let lo = (-dc).max(0) as usize;
                            let hi = (w as isize - dc).min(w as isize).max(0) as usize;
                            if lo < hi {
                                let s0 = (lo as isize + dc) as usize;
                                out[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                            }
                        }
                        Padding::Periodic => {
                            let sr = sr.rem_euclid(h as isize) as usize;
                            let src = &plane[sr * w..(sr + 1) * w];
                            for (cidx, o) in out.iter_mut().enumerate() {
                                *o = src[(cidx as isize + dc).rem_euclid(w as isize) as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input grid.
fn col2im(col: &[f64], dx: &mut [f64], c: usize, h: usize, w: usize, k: usize, padding: Padding) {
    let hw = h * w;
    let p = (k / 2) as isize;
    for ch in 0..c {
        let plane = &mut dx[ch * hw..(ch + 1) * hw];
        for ki in 0..k {
            for kj in 0..k {
                let row = ((ch * k + ki) * k + kj) * hw;
                let src = &col[row..row + hw];
                let dr = ki as isize - p;
                let dc = kj as isize - p;
                for r in 0..h {
                    let sr = r as isize + dr;
                    let g = &src[r * w..(r + 1) * w];
                    match padding {
                        Padding::Zero => {
                            if sr < 0 || sr >= h as isize {
                                continue;
                            }
                            let dst = &mut plane[sr as usize * w..(sr as usize + 1) * w];
                            let lo = (-dc).max(0) as usize;
                            let hi = (w as isize - dc).min(w as isize).max(0) as usize;
                            for cidx in lo..hi {
                                dst[(cidx as isize + dc) as usize] += g[cidx];
                            }
                        }
                        Padding::Periodic => {
                            let sr = sr.rem_euclid(h as isize) as usize;
                            let dst = &mut plane[sr * w..(sr + 1) * w];
                            for (cidx, &gv) in g.iter().enumerate() {
                                dst[(cidx as isize + dc).rem_euclid(w as isize) as usize] += gv;
                            }
                        }
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Relu {
    mask: Vec<bool>,
}

impl Relu {
    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        self.mask = x.data.iter().map(|&v| v > 0.0).collect();
        for (o, &m) in out.data.iter_mut().zip(&self.mask) {
            if !m {
                *o = 0.0;
            }
        }
        out
    }

    pub fn backward(&self, dy: &Tensor) -> Tensor {
        let mut dx = dy.clone();
        for (d, &m) in dx.data.iter_mut().zip(&self.mask) {
            if !m {
                *d = 0.0;
            }
        }
        dx
    }
}

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPSILON: f64 = 1e-5;

/// Per-channel batch normalization over `(N, H, W)`.
///
/// Running statistics follow `r ← momentum·r + (1 − momentum)·batch`, with the
/// unbiased batch variance.
#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub channels: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    mode: Mode,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: Param::filled(vec![channels], 1.0),
            beta: Param::filled(vec![channels], 0.0),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
            xhat: Vec::new(),
            inv_std: Vec::new(),
            mode: Mode::Eval,
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        assert_eq!(x.c, self.channels, "batchnorm channel mismatch");
        self.mode = mode;
        let count = (x.n * x.plane()) as f64;
        let mut mean = vec![0.0; self.channels];
        let mut var = vec![0.0; self.channels];
        match mode {
            Mode::Train => {
                for ch in 0..self.channels {
                    let mut s = 0.0;
                    for i in 0..x.n {
                        s += x.channel(i, ch).iter().sum::<f64>();
                    }
                    let m = s / count;
                    let mut v = 0.0;
                    for i in 0..x.n {
                        v += x.channel(i, ch).iter().map(|a| (a - m) * (a - m)).sum::<f64>();
                    }
                    mean[ch] = m;
                    var[ch] = v / count;
                    let unbiased = if count > 1.0 { v / (count - 1.0) } else { 0.0 };
                    self.running_mean[ch] =
                        self.momentum * self.running_mean[ch] + (1.0 - self.momentum) * m;
                    self.running_var[ch] =
                        self.momentum * self.running_var[ch] + (1.0 - self.momentum) * unbiased;
                }
            }
            Mode::Eval => {
                mean.copy_from_slice(&self.running_mean);
                var.copy_from_slice(&self.running_var);
            }
        }
        self.inv_std = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let mut out = x.clone();
        self.xhat = vec![0.0; x.data.len()];
        let plane = x.plane();
        for i in 0..x.n {
            for ch in 0..self.channels {
                let start = (i * self.channels + ch) * plane;
                let (g, b, m, s) = (self.gamma.value[ch], self.beta.value[ch], mean[ch], self.inv_std[ch]);
                for idx in start..start + plane {
                    let xh = (x.data[idx] - m) * s;
                    self.xhat[idx] = xh;
                    out.data[idx] = g * xh + b;
                }
            }
        }
        out
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let plane = dy.plane();
        let count = (dy.n * plane) as f64;
        let mut dx = dy.clone();
        for ch in 0..self.channels {
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for i in 0..dy.n {
                let start = (i * self.channels + ch) * plane;
                for idx in start..start + plane {
                    sum_dy += dy.data[idx];
                    sum_dy_xhat += dy.data[idx] * self.xhat[idx];
                }
            }
            self.gamma.grad[ch] += sum_dy_xhat;
            self.beta.grad[ch] += sum_dy;
            let g = self.gamma.value[ch] * self.inv_std[ch];
            for i in 0..dy.n {
                let start = (i * self.channels + ch) * plane;
                for idx in start..start + plane {
                    dx.data[idx] = match self.mode {
                        Mode::Train => {
                            g / count * (count * dy.data[idx] - sum_dy - self.xhat[idx] * sum_dy_xhat)
                        }
                        Mode::Eval => g * dy.data[idx],
                    };
                }
            }
        }
        dx
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

/// 2x2 average pooling; spatial dims must be even.
pub fn avg_pool2(x: &Tensor) -> Tensor {
    let (oh, ow) = (x.h / 2, x.w / 2);
    let mut out = Tensor::zeros(x.n, x.c, oh, ow);
    for i in 0..x.n {
        for ch in 0..x.c {
            let src = x.channel(i, ch);
            let dst = out.channel_mut(i, ch);
            for r in 0..oh {
                for c in 0..ow {
                    let a = 2 * r * x.w + 2 * c;
                    dst[r * ow + c] = 0.25 * (src[a] + src[a + 1] + src[a + x.w] + src[a + x.w + 1]);
                }
            }
        }
    }
    out
}

pub fn avg_pool2_backward(dy: &Tensor) -> Tensor {
    let (h, w) = (dy.h * 2, dy.w * 2);
    let mut dx = Tensor::zeros(dy.n, dy.c, h, w);
    for i in 0..dy.n {
        for ch in 0..dy.c {
            let g = dy.channel(i, ch);
            let dst = dx.channel_mut(i, ch);
            for r in 0..h {
                for c in 0..w {
                    dst[r * w + c] = 0.25 * g[(r / 2) * dy.w + c / 2];
                }
            }
        }
    }
    dx
}

/// Nearest-neighbor 2x upsampling.
pub fn upsample2(x: &Tensor) -> Tensor {
    let (h, w) = (x.h * 2, x.w * 2);
    let mut out = Tensor::zeros(x.n, x.c, h, w);
    for i in 0..x.n {
        for ch in 0..x.c {
            let src = x.channel(i, ch);
            let dst = out.channel_mut(i, ch);
            for r in 0..h {
                for c in 0..w {
                    dst[r * w + c] = src[(r / 2) * x.w + c / 2];
                }
            }
        }
    }
    out
}

pub fn upsample2_backward(dy: &Tensor) -> Tensor {
    let (oh, ow) = (dy.h / 2, dy.w / 2);
    let mut dx = Tensor::zeros(dy.n, dy.c, oh, ow);
    for i in 0..dy.n {
        for ch in 0..dy.c {
            let g = dy.channel(i, ch);
            let dst = dx.channel_mut(i, ch);
            for r in 0..dy.h {
                for c in 0..dy.w {
                    dst[(r / 2) * ow + c / 2] += g[r * dy.w + c];
                }
            }
        }
    }
    dx
}
