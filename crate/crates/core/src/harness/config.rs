use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::data::DEFAULT_TRAIN_FRACTION;
use crate::error::{Error, Result};
use crate::imaging::{BlurOperator, Psf};
use crate::network::{Architecture, TrainConfig};
use crate::stabilizers::{
    FilterStabilizer, IterativeMethod, IterativeStabilizer, Stabilizer, TikhonovProblem,
    DEFAULT_FILTER_RADIUS, DEFAULT_FILTER_SIGMA, DEFAULT_ITERATIONS, DEFAULT_LAMBDA,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    /// Train on noiseless blurred data.
    A,
    /// Train with noise injected into the inputs.
    B,
    /// Noise-level sweep only.
    #[serde(alias = "sweep")]
    Sweep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "NN")]
    Nn,
    #[serde(rename = "FiNN")]
    Finn,
    #[serde(rename = "StNN")]
    Stnn,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Nn, Variant::Finn, Variant::Stnn];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Nn => "NN",
            Variant::Finn => "FiNN",
            Variant::Stnn => "StNN",
        }
    }
}

/// Where the stabilizer sits relative to training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Each stabilized variant trains its own network on `φ(y)`.
    Pretrain,
    /// One network is trained on `y`; `φ` is composed in front afterwards.
    PostHoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synth {
        train: usize,
        test: usize,
    },
    Dir {
        path: PathBuf,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
    },
    /// A directory previously written by `Dataset::save`.
    Saved {
        path: PathBuf,
    },
}

fn default_train_fraction() -> f64 {
    DEFAULT_TRAIN_FRACTION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsfConfig {
    pub radius: usize,
    pub sigma_g: f64,
}

impl Default for PsfConfig {
    fn default() -> Self {
        Self {
            radius: 5,
            sigma_g: 1.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub radius: usize,
    pub sigma_f: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            radius: DEFAULT_FILTER_RADIUS,
            sigma_f: DEFAULT_FILTER_SIGMA,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterativeConfig {
    pub method: IterativeMethod,
    pub lambda: f64,
    pub iterations: usize,
    /// Landweber step; `None` selects `1 / (‖K‖² + 2λ)`.
    pub step: Option<f64>,
}

impl Default for IterativeConfig {
    fn default() -> Self {
        Self {
            method: IterativeMethod::Cgls,
            lambda: DEFAULT_LAMBDA,
            iterations: DEFAULT_ITERATIONS,
            step: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilizerConfig {
    pub filter: FilterConfig,
    pub iterative: IterativeConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub data: DataSource,
    #[serde(default = "default_patch")]
    pub patch_size: usize,
    /// Noise injected during training; must be 0 for experiment A.
    #[serde(default)]
    pub train_sigma: f64,
    /// Noise levels with a full stability report per variant.
    #[serde(default = "default_test_sigmas")]
    pub test_sigmas: Vec<f64>,
    /// Noise levels for the mean-error sweep table.
    #[serde(default = "default_sweep_sigmas")]
    pub sweep_sigmas: Vec<f64>,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "default_placement")]
    pub placement: Placement,
    #[serde(default)]
    pub psf: PsfConfig,
    #[serde(default)]
    pub stabilizer: StabilizerConfig,
    #[serde(default = "default_network")]
    pub network: Architecture,
    #[serde(default)]
    pub train: TrainConfig,
    /// Test-set indices written as images.
    #[serde(default = "default_gallery")]
    pub gallery: Vec<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_seed() -> u64 {
    0
}
fn default_patch() -> usize {
    64
}
fn default_test_sigmas() -> Vec<f64> {
    vec![0.025]
}
fn default_sweep_sigmas() -> Vec<f64> {
    vec![0.0, 0.0125, 0.025, 0.05, 0.075, 0.1]
}
fn default_variants() -> Vec<Variant> {
    Variant::ALL.to_vec()
}
fn default_placement() -> Placement {
    Placement::Pretrain
}
fn default_network() -> Architecture {
    Architecture::Ssnet3l {
        widths: [16, 16],
        kernel_sizes: [9, 5, 3],
        skip: false,
    }
}
fn default_gallery() -> Vec<usize> {
    vec![0]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Desk-scale experiment A on synthetic scenes.
    pub fn desk_default() -> Self {
        Self {
            experiment: ExperimentKind::A,
            seed: default_seed(),
            data: DataSource::Synth {
                train: 200,
                test: 60,
            },
            patch_size: default_patch(),
            train_sigma: 0.0,
            test_sigmas: default_test_sigmas(),
            sweep_sigmas: default_sweep_sigmas(),
            variants: default_variants(),
            placement: default_placement(),
            psf: PsfConfig::default(),
            stabilizer: StabilizerConfig::default(),
            network: default_network(),
            train: TrainConfig::default(),
            gallery: default_gallery(),
            output_dir: default_output_dir(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// Parses `text` after applying `key.path=value` overrides. Values are
    /// read as TOML and fall back to a bare string.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let user: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut value = toml::Value::try_from(Self::desk_default()).expect("defaults serialize");
        merge(&mut value, user);
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: Self = value.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match self.experiment {
            ExperimentKind::A if self.train_sigma != 0.0 => {
                return bad(format!("experiment A trains on noiseless data; train_sigma = {}", self.train_sigma))
            }
            ExperimentKind::B if !(self.train_sigma > 0.0) => {
                return bad("experiment B needs train_sigma > 0".into())
            }
            _ => {}
        }
        if !(self.train_sigma >= 0.0 && self.train_sigma.is_finite()) {
            return bad(format!("train_sigma must be finite and >= 0, got {}", self.train_sigma));
        }
        if self.patch_size < 11 {
            return bad(format!("patch_size must be at least 11, got {}", self.patch_size));
        }
        if let Some(s) = self.test_sigmas.iter().find(|s| !(**s > 0.0)) {
            return bad(format!("test sigmas must be positive, got {s}"));
        }
        if let Some(s) = self.sweep_sigmas.iter().find(|s| !(**s >= 0.0)) {
            return bad(format!("sweep sigmas must be non-negative, got {s}"));
        }
        if self.variants.is_empty() {
            return bad("at least one variant is required".into());
        }
        match &self.data {
            DataSource::Synth { train, test } if *train == 0 || *test == 0 => {
                return bad("synthetic data needs train > 0 and test > 0".into())
            }
            DataSource::Dir { train_fraction, .. } if !(*train_fraction > 0.0 && *train_fraction < 1.0) => {
                return bad(format!("train_fraction must lie in (0, 1), got {train_fraction}"))
            }
            _ => {}
        }
        if !(self.psf.sigma_g > 0.0) || !(self.stabilizer.filter.sigma_f > 0.0) {
            return bad("Gaussian widths must be positive".into());
        }
        if !(self.stabilizer.iterative.lambda > 0.0) || self.stabilizer.iterative.iterations == 0 {
            return bad("iterative stabilizer needs lambda > 0 and iterations >= 1".into());
        }
        if self.train.injection_sigma != 0.0 {
            return bad("set train_sigma instead of train.injection_sigma".into());
        }
        self.train.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Effective training-noise level passed to the trainer.
    pub fn injection_sigma(&self) -> f64 {
        match self.experiment {
            ExperimentKind::A => 0.0,
            _ => self.train_sigma,
        }
    }

    pub fn blur_operator(&self) -> Result<BlurOperator> {
        BlurOperator::new(Psf::gaussian(self.psf.radius, self.psf.sigma_g)?, (self.patch_size, self.patch_size))
    }

    pub fn stabilizer(&self, variant: Variant, op: &BlurOperator) -> Result<Stabilizer> {
        Ok(match variant {
            Variant::Nn => Stabilizer::Identity,
            Variant::Finn => {
                let f = &self.stabilizer.filter;
                Stabilizer::Filter(FilterStabilizer::gaussian(f.radius, f.sigma_f, op.shape())?)
            }
            Variant::Stnn => {
                let c = &self.stabilizer.iterative;
                let problem = TikhonovProblem::new(op.clone(), c.lambda)?;
                let mut s = IterativeStabilizer::new(problem, c.method, c.iterations)?;
                if let Some(step) = c.step {
                    let (h, w) = op.shape();
                    s = IterativeStabilizer::with_start(
                        s.problem().clone(),
                        c.method,
                        c.iterations,
                        crate::imaging::Image::zeros(h, w),
                        step,
                    )?;
                }
                Stabilizer::Iterative(s)
            }
        })
    }
}

/// Tagged sections are replaced wholesale when the user names a new tag, so
/// fields of the default variant do not leak into a different one.
const TAGGED: [(&str, &str); 2] = [("network", "kind"), ("data", "source")];

fn merge(base: &mut toml::Value, user: toml::Value) {
    match (base, user) {
        (toml::Value::Table(b), toml::Value::Table(u)) => {
            for (k, v) in u {
                let replace = TAGGED.iter().any(|(sec, tag)| {
                    k == *sec && v.get(tag).is_some() && b.get(&k).and_then(|x| x.get(tag)) != v.get(tag)
                });
                match b.get_mut(&k) {
                    Some(slot) if !replace => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = root;
    for part in &parts[..parts.len() - 1] {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key}: {part} is not a table")))?;
        cur = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    cur.as_table_mut()
        .ok_or_else(|| Error::Config(format!("override {key}: parent is not a table")))?
        .insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
