use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::{DataSource, ExperimentConfig, Placement, Variant};
use super::data::{ingest, synthesize, Dataset};
use crate::error::{Error, Result};
use crate::imaging::io::{write_pgm, PgmDepth};
use crate::imaging::{mix_seed, BlurOperator, Image};
use crate::metrics::{
    empirical_stability, reconstruction_error, ssim, test_noise, write_report, Reconstructor, StabilityReport,
};
use crate::network::{load_checkpoint, save_checkpoint, train_with, write_loss_csv, NetworkModel};
use crate::stabilizers::Stabilizer;

/// Salt for the test-noise stream. All variants and noise levels share it,
/// so comparisons are paired and noise at `σ₂` is `σ₂/σ₁` times noise at `σ₁`.
const TEST_NOISE_STREAM: u64 = 0x7465_7374;

/// Network `ψ` behind stabilizer `φ`.
pub struct Pipeline {
    pub variant: Variant,
    pub stabilizer: Stabilizer,
    pub model: NetworkModel,
}

impl Reconstructor for Pipeline {
    fn reconstruct(&self, y: &Image) -> Result<Image> {
        self.model.predict(&self.stabilizer.apply(y)?)
    }

    fn tag(&self) -> String {
        self.variant.tag().into()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub variant: Variant,
    pub sigma: f64,
    pub mean_error: f64,
    pub mean_ssim: f64,
}

#[derive(Debug, Default)]
pub struct ExperimentOutcome {
    pub reports: Vec<(Variant, StabilityReport)>,
    pub sweep: Vec<SweepRow>,
    pub losses: Vec<(Variant, Vec<f64>)>,
    pub diverged: Vec<(Variant, String)>,
}

impl ExperimentOutcome {
    /// Report for `variant` at `sigma`, matched up to rounding so that
    /// derived levels such as `3.0 * 0.025` still find their entry.
    pub fn report(&self, variant: Variant, sigma: f64) -> Option<&StabilityReport> {
        self.reports
            .iter()
            .find(|(v, r)| *v == variant && (r.sigma - sigma).abs() <= 1e-9 * sigma.abs().max(r.sigma.abs()))
            .map(|(_, r)| r)
    }
}

pub fn test_noise_seed(cfg: &ExperimentConfig) -> u64 {
    mix_seed(cfg.seed, TEST_NOISE_STREAM)
}

pub fn load_dataset(cfg: &ExperimentConfig, op: &BlurOperator) -> Result<Dataset> {
    let ds = match &cfg.data {
        DataSource::Synth { train, test } => synthesize(train + test, *train, op, cfg.seed)?,
        DataSource::Dir { path, train_fraction } => ingest(path, cfg.patch_size, op, *train_fraction, cfg.seed)?,
        DataSource::Saved { path } => {
            let ds = Dataset::load(path)?;
            if ds.shape() != op.shape() {
                return Err(Error::Config(format!(
                    "saved dataset has shape {:?}, config patch_size is {}",
                    ds.shape(),
                    cfg.patch_size
                )));
            }
            ds
        }
    };
    ds.check_disjoint()?;
    Ok(ds)
}

pub fn checkpoint_path(cfg: &ExperimentConfig, variant: Variant) -> PathBuf {
    let owner = match cfg.placement {
        Placement::Pretrain => variant,
        Placement::PostHoc => Variant::Nn,
    };
    cfg.output_dir.join("checkpoints").join(format!("{}.ckpt", owner.tag()))
}

/// Variants whose network is trained; post-hoc placement trains only the
/// plain network and reuses it.
fn trained_variants(cfg: &ExperimentConfig) -> Vec<Variant> {
    match cfg.placement {
        Placement::Pretrain => cfg.variants.clone(),
        Placement::PostHoc => vec![Variant::Nn],
    }
}

/// Trains one network per needed variant, writing checkpoints and loss
/// curves. A diverged variant is recorded and skipped.
pub fn train_all(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    op: &BlurOperator,
    outcome: &mut ExperimentOutcome,
) -> Result<Vec<(Variant, NetworkModel)>> {
    let pairs: Vec<(Image, Image)> = ds.train().iter().map(|s| (s.blurred.clone(), s.gt.clone())).collect();
    let mut tc = cfg.train.clone();
    tc.injection_sigma = cfg.injection_sigma();
    let ckpt_dir = cfg.output_dir.join("checkpoints");
    let loss_dir = cfg.output_dir.join("loss");
    for d in [&ckpt_dir, &loss_dir] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut models = Vec::new();
    for variant in trained_variants(cfg) {
        let phi = cfg.stabilizer(variant, op)?;
        let mut model = NetworkModel::new(cfg.network.clone(), cfg.train.seed)?;
        log::info!("training {} on {} pairs", variant.tag(), pairs.len());
        match train_with(&mut model, &pairs, &tc, &|y: &Image| phi.apply(y)) {
            Ok(out) => {
                write_loss_csv(&loss_dir.join(format!("{}.csv", variant.tag())), &out.loss_history)?;
                save_checkpoint(&checkpoint_path(cfg, variant), &model)?;
                outcome.losses.push((variant, out.loss_history));
                models.push((variant, model));
            }
            Err(e @ Error::Divergence { .. }) => {
                log::error!("{} diverged: {e}", variant.tag());
                outcome.diverged.push((variant, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(models)
}

/// Assembles the evaluation pipelines from trained models, or from
/// checkpoints on disk when `models` is `None`.
pub fn pipelines(
    cfg: &ExperimentConfig,
    op: &BlurOperator,
    models: Option<&[(Variant, NetworkModel)]>,
) -> Result<Vec<Pipeline>> {
    let mut out = Vec::new();
    for &variant in &cfg.variants {
        let owner = match cfg.placement {
            Placement::Pretrain => variant,
            Placement::PostHoc => Variant::Nn,
        };
        let model = match models {
            Some(ms) => match ms.iter().find(|(v, _)| *v == owner) {
                Some((_, m)) => m.clone(),
                None => continue,
            },
            None => load_checkpoint(&checkpoint_path(cfg, variant))?,
        };
        out.push(Pipeline {
            variant,
            stabilizer: cfg.stabilizer(variant, op)?,
            model,
        });
    }
    Ok(out)
}

pub fn sigma_label(sigma: f64) -> String {
    format!("{sigma:.4}")
}

/// Stability reports for every pipeline and test noise level.
pub fn evaluate(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    pipes: &[Pipeline],
    outcome: &mut ExperimentOutcome,
) -> Result<()> {
    let dir = cfg.output_dir.join("reports");
    let seed = test_noise_seed(cfg);
    for p in pipes {
        for &sigma in &cfg.test_sigmas {
            let r = empirical_stability(p, ds.test(), sigma, seed)?;
            log::info!("{} σ={sigma}: η̂={:.4} Ĉ={:.4}", p.variant.tag(), r.eta_hat, r.c_hat);
            write_report(&dir, &format!("{}_sigma{}", p.variant.tag(), sigma_label(sigma)), &r)?;
            outcome.reports.push((p.variant, r));
        }
    }
    write_scatter(&cfg.output_dir.join("scatter.csv"), &outcome.reports)
}

/// One row per (variant, σ, image): the points of an excess-error versus
/// noise-norm plot. `ratio = (err_noisy − eta_hat) / noise_norm`.
pub fn write_scatter(path: &Path, reports: &[(Variant, StabilityReport)]) -> Result<()> {
    let mut s = String::from("variant,sigma,id,noise_norm,err_noisy,eta_hat,excess,ratio,stable\n");
    for (v, r) in reports {
        for (i, p) in r.per_image.iter().enumerate() {
            writeln!(
                s,
                "{},{:e},{i},{:e},{:e},{:e},{:e},{:e},{}",
                v.tag(),
                r.sigma,
                p.noise_norm,
                p.err_noisy,
                r.eta_hat,
                p.err_noisy - r.eta_hat,
                p.ratio,
                p.ratio < 1.0
            )
            .unwrap();
        }
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Mean test error per variant over `cfg.sweep_sigmas` (σ = 0 is the
/// noiseless error).
pub fn sweep(cfg: &ExperimentConfig, ds: &Dataset, pipes: &[Pipeline], outcome: &mut ExperimentOutcome) -> Result<()> {
    let seed = test_noise_seed(cfg);
    let test = ds.test();
    for p in pipes {
        for &sigma in &cfg.sweep_sigmas {
            let (mut err, mut sim) = (0.0, 0.0);
            for (i, s) in test.iter().enumerate() {
                let e = test_noise(sigma, seed, i, s.blurred.shape())?;
                let out = p.reconstruct(&s.blurred.add(&e)?)?;
                err += reconstruction_error(&out, &s.gt)?;
                sim += ssim(&out, &s.gt)?;
            }
            outcome.sweep.push(SweepRow {
                variant: p.variant,
                sigma,
                mean_error: err / test.len() as f64,
                mean_ssim: sim / test.len() as f64,
            });
        }
    }
    let mut s = String::from("variant,sigma,mean_error,mean_ssim\n");
    for r in &outcome.sweep {
        writeln!(s, "{},{:e},{:e},{:e}", r.variant.tag(), r.sigma, r.mean_error, r.mean_ssim).unwrap();
    }
    let path = cfg.output_dir.join("sweep.csv");
    std::fs::write(&path, s).map_err(|e| Error::io(&path, e))
}

/// Writes ground truth, blurred, noisy and every reconstruction for the
/// chosen test indices as 16-bit PGM. Returns the paths written.
pub fn report_gallery(
    ds: &Dataset,
    pipes: &[Pipeline],
    indices: &[usize],
    sigma: f64,
    noise_seed: u64,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let test = ds.test();
    if let Some(&bad) = indices.iter().find(|&&i| i >= test.len()) {
        return Err(Error::InvalidInput(format!(
            "gallery index {bad} out of range for {} test images",
            test.len()
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let label = sigma_label(sigma);
    let mut written = Vec::new();
    let mut put = |name: String, img: &Image| -> Result<()> {
        let path = out_dir.join(name);
        write_pgm(&path, img, PgmDepth::Sixteen)?;
        written.push(path);
        Ok(())
    };
    for &i in indices {
        let s = &test[i];
        let noisy = s.blurred.add(&test_noise(sigma, noise_seed, i, s.blurred.shape())?)?;
        put(format!("test{i:03}_gt.pgm"), &s.gt)?;
        put(format!("test{i:03}_blurred.pgm"), &s.blurred)?;
        put(format!("test{i:03}_noisy_sigma{label}.pgm"), &noisy)?;
        for p in pipes {
            put(format!("test{i:03}_{}_sigma{label}.pgm", p.variant.tag()), &p.reconstruct(&noisy)?)?;
        }
    }
    Ok(written)
}

pub fn gallery(cfg: &ExperimentConfig, ds: &Dataset, pipes: &[Pipeline]) -> Result<Vec<PathBuf>> {
    let mut all = Vec::new();
    for &sigma in &cfg.test_sigmas {
        all.extend(report_gallery(
            ds,
            pipes,
            &cfg.gallery,
            sigma,
            test_noise_seed(cfg),
            &cfg.output_dir.join("gallery"),
        )?);
    }
    Ok(all)
}

fn write_summary(cfg: &ExperimentConfig, ds: &Dataset, op: &BlurOperator, outcome: &ExperimentOutcome) -> Result<()> {
    let variants: Vec<_> = cfg
        .variants
        .iter()
        .map(|&v| {
            let gain = cfg.stabilizer(v, op).ok().and_then(|s| s.exact_gain());
            let reports: Vec<_> = outcome
                .reports
                .iter()
                .filter(|(rv, _)| *rv == v)
                .map(|(_, r)| {
                    serde_json::json!({
                        "sigma": r.sigma,
                        "eta_hat": r.eta_hat,
                        "c_hat": r.c_hat,
                        "delta_stable": r.delta_stable,
                        "mean_err_noisy": r.mean_noisy_error(),
                        "mean_ssim": r.mean_ssim(),
                    })
                })
                .collect();
            serde_json::json!({
                "variant": v.tag(),
                "stabilizer_gain": gain,
                "final_loss": outcome.losses.iter().find(|(lv, _)| *lv == v).and_then(|(_, l)| l.last()),
                "reports": reports,
            })
        })
        .collect();
    let summary = serde_json::json!({
        "experiment": format!("{:?}", cfg.experiment),
        "dataset": ds.provenance,
        "n_train": ds.n_train,
        "n_test": ds.test().len(),
        "train_sigma": cfg.injection_sigma(),
        "test_noise_seed": test_noise_seed(cfg),
        "placement": format!("{:?}", cfg.placement),
        "network": cfg.network.tag(),
        "parameters": cfg.network.parameter_count(),
        "variants": variants,
        "diverged": outcome.diverged.iter().map(|(v, m)| serde_json::json!({"variant": v.tag(), "reason": m})).collect::<Vec<_>>(),
    });
    let path = cfg.output_dir.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary).unwrap() + "\n").map_err(|e| Error::io(&path, e))
}

/// Full pipeline: data, training, stability reports, sweep, scatter,
/// gallery and summary. If any variant diverged the remaining outputs are
/// still written and a divergence error is returned afterwards.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let cfg_path = cfg.output_dir.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).map_err(|e| Error::io(&cfg_path, e))?;
    let op = cfg.blur_operator()?;
    let ds = load_dataset(cfg, &op)?;
    let mut outcome = ExperimentOutcome::default();
    let models = train_all(cfg, &ds, &op, &mut outcome)?;
    let pipes = pipelines(cfg, &op, Some(&models))?;
    evaluate(cfg, &ds, &pipes, &mut outcome)?;
    sweep(cfg, &ds, &pipes, &mut outcome)?;
    if !cfg.gallery.is_empty() {
        gallery(cfg, &ds, &pipes)?;
    }
    write_summary(cfg, &ds, &op, &outcome)?;
    if let Some((v, reason)) = outcome.diverged.first() {
        return Err(Error::Divergence {
            epoch: 0,
            reason: format!("{} (partial report written): {reason}", v.tag()),
        });
    }
    Ok(outcome)
}
