//! Convolutional reconstructors written from scratch: layers with explicit
//! backward passes, the three-layer single-scale network, a two-level
//! U-shaped network, MSE loss, Adam and a reproducible training loop.

mod adam;
pub mod checkpoint;
mod layers;
mod model;
mod tensor;
mod train;

pub use adam::{adam_step, Adam, AdamConfig};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use layers::{BatchNorm2d, Conv2d, Mode, Padding, Relu, BN_EPSILON, BN_MOMENTUM};
pub use model::{backward, build_mini_unet, build_ssnet3l, mse_loss, Architecture, NetworkModel};
pub use tensor::{Param, Tensor};
pub use train::{train, train_with, write_loss_csv, TrainConfig, TrainOutcome};
