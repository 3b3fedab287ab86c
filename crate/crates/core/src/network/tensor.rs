use crate::error::{Error, Result};
use crate::imaging::Image;

/// Dense `N x C x H x W` activation buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let len = self.sample_len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f64] {
        let len = self.sample_len();
        &mut self.data[i * len..(i + 1) * len]
    }

    pub fn channel(&self, i: usize, ch: usize) -> &[f64] {
        let p = self.plane();
        let start = (i * self.c + ch) * p;
        &self.data[start..start + p]
    }

    pub fn channel_mut(&mut self, i: usize, ch: usize) -> &mut [f64] {
        let p = self.plane();
        let start = (i * self.c + ch) * p;
        &mut self.data[start..start + p]
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        (self.n, self.c, self.h, self.w) == (other.n, other.c, other.h, other.w)
    }

    /// Stacks equally sized single-channel images into an `N x 1 x H x W` batch.
    pub fn from_images(images: &[&Image]) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::InvalidInput("empty image batch".into()))?;
        let (h, w) = first.shape();
        let mut data = Vec::with_capacity(images.len() * h * w);
        for img in images {
            if img.shape() != (h, w) {
                return Err(Error::Dimension {
                    expected: (h, w),
                    actual: img.shape(),
                });
            }
            data.extend_from_slice(img.pixels());
        }
        Ok(Self {
            n: images.len(),
            c: 1,
            h,
            w,
            data,
        })
    }

    pub fn to_images(&self) -> Vec<Image> {
        assert_eq!(self.c, 1, "only single-channel tensors convert to images");
        (0..self.n)
            .map(|i| Image::from_raw(self.h, self.w, self.sample(i).to_vec()))
            .collect()
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Channel-wise concatenation `[self, other]`.
    pub fn concat(&self, other: &Tensor) -> Tensor {
        assert_eq!((self.n, self.h, self.w), (other.n, other.h, other.w));
        let mut out = Tensor::zeros(self.n, self.c + other.c, self.h, self.w);
        for i in 0..self.n {
            let dst = out.sample_mut(i);
            let a = self.sample(i);
            dst[..a.len()].copy_from_slice(a);
            dst[a.len()..].copy_from_slice(other.sample(i));
        }
        out
    }

    /// Inverse of [`Tensor::concat`]: splits after `first` channels.
    pub fn split_channels(&self, first: usize) -> (Tensor, Tensor) {
        let mut a = Tensor::zeros(self.n, first, self.h, self.w);
        let mut b = Tensor::zeros(self.n, self.c - first, self.h, self.w);
        let cut = first * self.plane();
        for i in 0..self.n {
            let src = self.sample(i);
            a.sample_mut(i).copy_from_slice(&src[..cut]);
            b.sample_mut(i).copy_from_slice(&src[cut..]);
        }
        (a, b)
    }
}

/// A trainable tensor together with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn new(shape: Vec<usize>, value: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let grad = vec![0.0; value.len()];
        Self { shape, value, grad }
    }

    pub fn filled(shape: Vec<usize>, v: f64) -> Self {
        let len = shape.iter().product();
        Self::new(shape, vec![v; len])
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}
