use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{
    avg_pool2, avg_pool2_backward, upsample2, upsample2_backward, BatchNorm2d, Conv2d, Mode,
    Padding, Relu,
};
use super::tensor::{Param, Tensor};
use crate::error::{Error, Result};
use crate::imaging::Image;

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    /// Three single-scale conv layers; `widths` are the two hidden feature
    /// counts, the third layer maps back to one channel.
    Ssnet3l {
        widths: [usize; 2],
        kernel_sizes: [usize; 3],
        skip: bool,
    },
    MiniUnet {
        base_width: usize,
    },
}

impl Architecture {
    pub fn tag(&self) -> &'static str {
        match self {
            Architecture::Ssnet3l { .. } => "3L-SSNet",
            Architecture::MiniUnet { .. } => "MiniUNet",
        }
    }

    /// Closed-form trainable parameter count.
    pub fn parameter_count(&self) -> usize {
        let conv = |i: usize, o: usize, k: usize| o * i * k * k + o;
        let bn = |c: usize| 2 * c;
        match *self {
            Architecture::Ssnet3l {
                widths: [w1, w2],
                kernel_sizes: [k1, k2, k3],
                ..
            } => conv(1, w1, k1) + bn(w1) + conv(w1, w2, k2) + bn(w2) + conv(w2, 1, k3),
            Architecture::MiniUnet { base_width: w } => {
                let res = |c: usize| 2 * (conv(c, c, 3) + bn(c));
                conv(1, w, 3)
                    + res(w)
                    + conv(w, 2 * w, 3)
                    + bn(2 * w)
                    + res(2 * w)
                    + conv(2 * w, w, 3)
                    + conv(2 * w, w, 3)
                    + bn(w)
                    + res(w)
                    + conv(w, 1, 3)
            }
        }
    }
}

/// conv → ReLU → BN.
#[derive(Clone, Debug)]
struct ConvReluBn {
    conv: Conv2d,
    relu: Relu,
    bn: BatchNorm2d,
}

impl ConvReluBn {
    fn new(i: usize, o: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            conv: Conv2d::new(i, o, k, Padding::Zero, rng),
            relu: Relu::default(),
            bn: BatchNorm2d::new(o),
        }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let z = self.conv.forward(x);
        let a = self.relu.forward(&z);
        self.bn.forward(&a, mode)
    }

    fn backward(&mut self, dy: &Tensor) -> Tensor {
        let g = self.bn.backward(dy);
        let g = self.relu.backward(&g);
        self.conv.backward(&g)
    }

    fn params(&self) -> Vec<&Param> {
        let mut p = self.conv.params();
        p.extend(self.bn.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.conv.params_mut();
        p.extend(self.bn.params_mut());
        p
    }

    fn norms_mut(&mut self) -> Vec<&mut BatchNorm2d> {
        vec![&mut self.bn]
    }

    fn norms(&self) -> Vec<&BatchNorm2d> {
        vec![&self.bn]
    }
}

/// `x + CRB(CRB(x))`, channel count preserved.
#[derive(Clone, Debug)]
struct ResBlock {
    a: ConvReluBn,
    b: ConvReluBn,
}

impl ResBlock {
    fn new(c: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            a: ConvReluBn::new(c, c, 3, rng),
            b: ConvReluBn::new(c, c, 3, rng),
        }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let h = self.a.forward(x, mode);
        let mut out = self.b.forward(&h, mode);
        out.add_assign(x);
        out
    }

    fn backward(&mut self, dy: &Tensor) -> Tensor {
        let g = self.b.backward(dy);
        let mut dx = self.a.backward(&g);
        dx.add_assign(dy);
        dx
    }

    fn params(&self) -> Vec<&Param> {
        let mut p = self.a.params();
        p.extend(self.b.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.a.params_mut();
        p.extend(self.b.params_mut());
        p
    }

    fn norms(&self) -> Vec<&BatchNorm2d> {
        let mut n = self.a.norms();
        n.extend(self.b.norms());
        n
    }

    fn norms_mut(&mut self) -> Vec<&mut BatchNorm2d> {
        let mut n = self.a.norms_mut();
        n.extend(self.b.norms_mut());
        n
    }
}

#[derive(Clone, Debug)]
struct Ssnet3l {
    l1: ConvReluBn,
    l2: ConvReluBn,
    head: Conv2d,
    skip: bool,
}

impl Ssnet3l {
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let h = self.l1.forward(x, mode);
        let h = self.l2.forward(&h, mode);
        let mut out = self.head.forward(&h);
        if self.skip {
            out.add_assign(x);
        }
        out
    }

    fn backward(&mut self, dy: &Tensor) {
        let g = self.head.backward(dy);
        let g = self.l2.backward(&g);
        self.l1.backward(&g);
    }

    fn params(&self) -> Vec<&Param> {
        let mut p = self.l1.params();
        p.extend(self.l2.params());
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.l1.params_mut();
        p.extend(self.l2.params_mut());
        p.extend(self.head.params_mut());
        p
    }

    fn norms(&self) -> Vec<&BatchNorm2d> {
        let mut n = self.l1.norms();
        n.extend(self.l2.norms());
        n
    }

    fn norms_mut(&mut self) -> Vec<&mut BatchNorm2d> {
        let mut n = self.l1.norms_mut();
        n.extend(self.l2.norms_mut());
        n
    }
}

/// Two-level U-shaped network with residual blocks, average-pool
/// downsampling, nearest upsampling, skip concatenation and an
/// input-to-output residual.
#[derive(Clone, Debug)]
struct MiniUnet {
    width: usize,
    stem: Conv2d,
    enc1: ResBlock,
    down: ConvReluBn,
    enc2: ResBlock,
    up: Conv2d,
    fuse: ConvReluBn,
    dec1: ResBlock,
    tail: Conv2d,
}

impl MiniUnet {
    fn new(w: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            width: w,
            stem: Conv2d::new(1, w, 3, Padding::Zero, rng),
            enc1: ResBlock::new(w, rng),
            down: ConvReluBn::new(w, 2 * w, 3, rng),
            enc2: ResBlock::new(2 * w, rng),
            up: Conv2d::new(2 * w, w, 3, Padding::Zero, rng),
            fuse: ConvReluBn::new(2 * w, w, 3, rng),
            dec1: ResBlock::new(w, rng),
            tail: Conv2d::new(w, 1, 3, Padding::Zero, rng),
        }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let s = self.stem.forward(x);
        let e1 = self.enc1.forward(&s, mode);
        let d = self.down.forward(&avg_pool2(&e1), mode);
        let e2 = self.enc2.forward(&d, mode);
        let u = self.up.forward(&upsample2(&e2));
        let f = self.fuse.forward(&u.concat(&e1), mode);
        let d1 = self.dec1.forward(&f, mode);
        let mut out = self.tail.forward(&d1);
        out.add_assign(x);
        out
    }

    fn backward(&mut self, dy: &Tensor) {
        let g = self.tail.backward(dy);
        let g = self.dec1.backward(&g);
        let g = self.fuse.backward(&g);
        let (g_up, g_skip) = g.split_channels(self.width);
        let g = self.up.backward(&g_up);
        let g = self.enc2.backward(&upsample2_backward(&g));
        let g = self.down.backward(&g);
        let mut g_e1 = avg_pool2_backward(&g);
        g_e1.add_assign(&g_skip);
        let g = self.enc1.backward(&g_e1);
        self.stem.backward(&g);
    }

    fn params(&self) -> Vec<&Param> {
        let mut p = self.stem.params();
        p.extend(self.enc1.params());
        p.extend(self.down.params());
        p.extend(self.enc2.params());
        p.extend(self.up.params());
        p.extend(self.fuse.params());
        p.extend(self.dec1.params());
        p.extend(self.tail.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.stem.params_mut();
        p.extend(self.enc1.params_mut());
        p.extend(self.down.params_mut());
        p.extend(self.enc2.params_mut());
        p.extend(self.up.params_mut());
        p.extend(self.fuse.params_mut());
        p.extend(self.dec1.params_mut());
        p.extend(self.tail.params_mut());
        p
    }

    fn norms(&self) -> Vec<&BatchNorm2d> {
        let mut n = self.enc1.norms();
        n.extend(self.down.norms());
        n.extend(self.enc2.norms());
        n.extend(self.fuse.norms());
        n.extend(self.dec1.norms());
        n
    }

    fn norms_mut(&mut self) -> Vec<&mut BatchNorm2d> {
        let mut n = self.enc1.norms_mut();
        n.extend(self.down.norms_mut());
        n.extend(self.enc2.norms_mut());
        n.extend(self.fuse.norms_mut());
        n.extend(self.dec1.norms_mut());
        n
    }
}

#[derive(Clone, Debug)]
enum Body {
    Ssnet(Ssnet3l),
    Unet(MiniUnet),
}

/// A single-channel image-to-image convolutional reconstructor.
#[derive(Clone, Debug)]
pub struct NetworkModel {
    architecture: Architecture,
    body: Body,
}

impl NetworkModel {
    pub fn new(architecture: Architecture, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let body = match architecture {
            Architecture::Ssnet3l {
                widths: [w1, w2],
                kernel_sizes: [k1, k2, k3],
                skip,
            } => {
                if [k1, k2, k3].iter().any(|k| k % 2 == 0) {
                    return Err(Error::invalid_param(format!(
                        "kernel sizes must be odd, got {:?}",
                        [k1, k2, k3]
                    )));
                }
                if w1 == 0 || w2 == 0 {
                    return Err(Error::invalid_param("hidden widths must be positive"));
                }
                Body::Ssnet(Ssnet3l {
                    l1: ConvReluBn::new(1, w1, k1, &mut rng),
                    l2: ConvReluBn::new(w1, w2, k2, &mut rng),
                    head: Conv2d::new(w2, 1, k3, Padding::Zero, &mut rng),
                    skip,
                })
            }
            Architecture::MiniUnet { base_width } => {
                if base_width == 0 {
                    return Err(Error::invalid_param("base width must be at least 1"));
                }
                Body::Unet(MiniUnet::new(base_width, &mut rng))
            }
        };
        Ok(Self { architecture, body })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        if let Body::Unet(_) = self.body {
            if h % 2 != 0 || w % 2 != 0 {
                return Err(Error::Dimension {
                    expected: (h + h % 2, w + w % 2),
                    actual: (h, w),
                });
            }
        }
        Ok(())
    }

    pub fn forward_batch(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        if x.c != 1 {
            return Err(Error::InvalidInput(format!(
                "network expects one input channel, got {}",
                x.c
            )));
        }
        self.check_input(x.h, x.w)?;
        Ok(match &mut self.body {
            Body::Ssnet(n) => n.forward(x, mode),
            Body::Unet(n) => n.forward(x, mode),
        })
    }

    /// Backpropagates `d loss / d output` from the most recent forward pass,
    /// accumulating into every parameter's `grad`.
    pub fn backward_batch(&mut self, dy: &Tensor) {
        match &mut self.body {
            Body::Ssnet(n) => n.backward(dy),
            Body::Unet(n) => n.backward(dy),
        }
    }

    pub fn forward(&mut self, y: &Image, mode: Mode) -> Result<Image> {
        let out = self.forward_batch(&Tensor::from_images(&[y])?, mode)?;
        Ok(out.to_images().pop().expect("one output"))
    }

    /// Eval-mode inference; leaves every piece of state untouched.
    pub fn predict(&self, y: &Image) -> Result<Image> {
        self.clone().forward(y, Mode::Eval)
    }

    pub fn params(&self) -> Vec<&Param> {
        match &self.body {
            Body::Ssnet(n) => n.params(),
            Body::Unet(n) => n.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match &mut self.body {
            Body::Ssnet(n) => n.params_mut(),
            Body::Unet(n) => n.params_mut(),
        }
    }

    pub fn norms(&self) -> Vec<&BatchNorm2d> {
        match &self.body {
            Body::Ssnet(n) => n.norms(),
            Body::Unet(n) => n.norms(),
        }
    }

    pub fn norms_mut(&mut self) -> Vec<&mut BatchNorm2d> {
        match &mut self.body {
            Body::Ssnet(n) => n.norms_mut(),
            Body::Unet(n) => n.norms_mut(),
        }
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    /// The final (output) convolution.
    pub fn head_mut(&mut self) -> &mut Conv2d {
        match &mut self.body {
            Body::Ssnet(n) => &mut n.head,
            Body::Unet(n) => &mut n.tail,
        }
    }
}

pub fn build_ssnet3l(widths: [usize; 2], kernel_sizes: [usize; 3], seed: u64) -> Result<NetworkModel> {
    NetworkModel::new(
        Architecture::Ssnet3l {
            widths,
            kernel_sizes,
            skip: false,
        },
        seed,
    )
}

pub fn build_mini_unet(base_width: usize, seed: u64) -> Result<NetworkModel> {
    NetworkModel::new(Architecture::MiniUnet { base_width }, seed)
}

/// Mean squared error over every output element.
pub fn mse_loss(output: &Tensor, target: &Tensor) -> (f64, Tensor) {
    assert!(output.same_shape(target), "loss shape mismatch");
    let count = output.data.len() as f64;
    let mut grad = output.clone();
    let mut loss = 0.0;
    for (g, t) in grad.data.iter_mut().zip(&target.data) {
        let r = *g - t;
        loss += r * r;
        *g = 2.0 * r / count;
    }
    (loss / count, grad)
}

/// Forward in `mode`, MSE against `target`, backward. Gradients are reset
/// first. Returns the loss.
pub fn backward(model: &mut NetworkModel, y: &Tensor, target: &Tensor, mode: Mode) -> Result<f64> {
    model.zero_grad();
    let out = model.forward_batch(y, mode)?;
    if !out.same_shape(target) {
        return Err(Error::Dimension {
            expected: (out.h, out.w),
            actual: (target.h, target.w),
        });
    }
    let (loss, grad) = mse_loss(&out, target);
    model.backward_batch(&grad);
    Ok(loss)
}
