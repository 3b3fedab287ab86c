use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{Adam, AdamConfig};
use super::layers::Mode;
use super::model::{backward, NetworkModel};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::imaging::{mix_seed, Image, NoiseSpec};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    /// Standard deviation of the fresh Gaussian noise added to every input
    /// each epoch. Zero disables injection.
    pub injection_sigma: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.9,
            batch_size: 8,
            injection_sigma: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.injection_sigma >= 0.0) {
            return Err(Error::Config("injection_sigma must be non-negative".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Sample-weighted mean training loss per epoch.
    pub loss_history: Vec<f64>,
}

/// Trains on `(input, target)` pairs with MSE and Adam.
pub fn train(
    model: &mut NetworkModel,
    pairs: &[(Image, Image)],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(model, pairs, config, &|y: &Image| Ok(y.clone()))
}

/// Like [`train`], but every (possibly noise-injected) input is passed
/// through `preprocess` before reaching the network.
pub fn train_with(
    model: &mut NetworkModel,
    pairs: &[(Image, Image)],
    config: &TrainConfig,
    preprocess: &dyn Fn(&Image) -> Result<Image>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let (first_in, _) = pairs
        .first()
        .ok_or_else(|| Error::InvalidInput("training set is empty".into()))?;
    let shape = first_in.shape();
    for (y, x) in pairs {
        if y.shape() != shape || x.shape() != shape {
            return Err(Error::Dimension {
                expected: shape,
                actual: if y.shape() != shape { y.shape() } else { x.shape() },
            });
        }
    }
    model.check_input(shape.0, shape.1)?;

    // without injection the preprocessed inputs never change
    let fixed_inputs = if config.injection_sigma == 0.0 {
        Some(pairs.iter().map(|(y, _)| preprocess(y)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };

    let mut adam = Adam::new(config.adam(), &model.params());
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, epoch as u64));
        order.shuffle(&mut rng);
        let epoch_noise = mix_seed(config.seed ^ 0x6e6f_6973_6500_0000, epoch as u64);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut inputs = Vec::with_capacity(batch.len());
            for &i in batch {
                let input = match &fixed_inputs {
                    Some(fixed) => fixed[i].clone(),
                    None => {
                        let noise = NoiseSpec::new(config.injection_sigma, mix_seed(epoch_noise, i as u64))?
                            .sample(shape.0, shape.1);
                        preprocess(&pairs[i].0.add(&noise)?)?
                    }
                };
                inputs.push(input);
            }
            let input = Tensor::from_images(&inputs.iter().collect::<Vec<_>>())?;
            let target = Tensor::from_images(&batch.iter().map(|&i| &pairs[i].1).collect::<Vec<_>>())?;
            let loss = backward(model, &input, &target, Mode::Train)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    reason: format!("non-finite loss {loss}; try a smaller learning rate"),
                });
            }
            adam.step(model.params_mut());
            total += loss * batch.len() as f64;
        }
        let mean = total / pairs.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.6e}");
        history.push(mean);
    }
    Ok(TrainOutcome {
        loss_history: history,
    })
}

/// `epoch,mean_loss` rows, epochs counted from 1.
pub fn write_loss_csv(path: &Path, history: &[f64]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "epoch,mean_loss").unwrap();
    for (i, l) in history.iter().enumerate() {
        writeln!(out, "{},{:e}", i + 1, l).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
