use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stabnet::harness::{
    evaluate, gallery, load_dataset, pipelines, run_experiment, sweep, synthesize, train_all, ExperimentConfig,
    ExperimentOutcome, DEFAULT_TRAIN_FRACTION,
};
use stabnet::imaging::{gaussian_psf, BlurOperator};
use stabnet::{Error, Result};

/// Noise-robust deblurring experiments: train plain, filtered and
/// Tikhonov-stabilized networks and measure their stability.
#[derive(Parser)]
#[command(name = "stabnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration (TOML). Omitted keys take desk-scale defaults.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set output_dir=...`.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(dir) = &self.output_dir {
            overrides.push(format!("output_dir={:?}", dir.display().to_string()));
        }
        match &self.config {
            Some(path) => ExperimentConfig::load(path, &overrides),
            None => ExperimentConfig::from_toml_with_overrides("", &overrides),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and save it.
    Synth {
        #[arg(long, default_value_t = 260)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Training share of the split.
        #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
        train_fraction: f64,
        #[arg(long, default_value_t = 5)]
        psf_radius: usize,
        #[arg(long, default_value_t = 1.3)]
        psf_sigma: f64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Tile a directory of images into a saved dataset.
    Ingest {
        dir: PathBuf,
        #[arg(long, default_value_t = 64)]
        patch_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
        train_fraction: f64,
        #[arg(long, default_value_t = 5)]
        psf_radius: usize,
        #[arg(long, default_value_t = 1.3)]
        psf_sigma: f64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train every configured variant and save checkpoints.
    Train(ConfigArgs),
    /// Stability reports from saved checkpoints.
    Evaluate(ConfigArgs),
    /// Mean error over the configured noise levels from saved checkpoints.
    Sweep(ConfigArgs),
    /// Write reconstructions of the gallery images from saved checkpoints.
    Gallery(ConfigArgs),
    /// Train, evaluate, sweep and write the gallery in one go.
    Run(ConfigArgs),
    /// Print the effective configuration.
    Config(ConfigArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn prepare(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let cfg = args.load()?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    Ok(cfg)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            count,
            size,
            seed,
            train_fraction,
            psf_radius,
            psf_sigma,
            out,
        } => {
            let op = BlurOperator::new(gaussian_psf(psf_radius, psf_sigma)?, (size, size))?;
            let n_train = stabnet::harness::split_count(count, train_fraction);
            let ds = synthesize(count, n_train, &op, seed)?;
            ds.save(&out)?;
            log::info!("wrote {count} pairs ({n_train} train) to {}", out.display());
        }
        Command::Ingest {
            dir,
            patch_size,
            seed,
            train_fraction,
            psf_radius,
            psf_sigma,
            out,
        } => {
            let op = BlurOperator::new(gaussian_psf(psf_radius, psf_sigma)?, (patch_size, patch_size))?;
            let ds = stabnet::harness::ingest(&dir, patch_size, &op, train_fraction, seed)?;
            ds.save(&out)?;
            log::info!("{}; saved to {}", ds.provenance, out.display());
        }
        Command::Train(args) => {
            let cfg = prepare(&args)?;
            let op = cfg.blur_operator()?;
            let ds = load_dataset(&cfg, &op)?;
            let mut outcome = ExperimentOutcome::default();
            train_all(&cfg, &ds, &op, &mut outcome)?;
            if let Some((v, reason)) = outcome.diverged.first() {
                return Err(Error::Divergence {
                    epoch: 0,
                    reason: format!("{}: {reason}", v.tag()),
                });
            }
        }
        Command::Evaluate(args) => {
            let cfg = prepare(&args)?;
            let op = cfg.blur_operator()?;
            let ds = load_dataset(&cfg, &op)?;
            let pipes = pipelines(&cfg, &op, None)?;
            let mut outcome = ExperimentOutcome::default();
            evaluate(&cfg, &ds, &pipes, &mut outcome)?;
            for (v, r) in &outcome.reports {
                println!(
                    "{:<5} sigma={} eta_hat={:.6} c_hat={:.6} delta_stable={}",
                    v.tag(),
                    r.sigma,
                    r.eta_hat,
                    r.c_hat,
                    r.delta_stable
                );
            }
        }
        Command::Sweep(args) => {
            let cfg = prepare(&args)?;
            let op = cfg.blur_operator()?;
            let ds = load_dataset(&cfg, &op)?;
            let pipes = pipelines(&cfg, &op, None)?;
            let mut outcome = ExperimentOutcome::default();
            sweep(&cfg, &ds, &pipes, &mut outcome)?;
            for r in &outcome.sweep {
                println!("{:<5} sigma={:<7} mean_error={:.6}", r.variant.tag(), r.sigma, r.mean_error);
            }
        }
        Command::Gallery(args) => {
            let cfg = prepare(&args)?;
            let op = cfg.blur_operator()?;
            let ds = load_dataset(&cfg, &op)?;
            let pipes = pipelines(&cfg, &op, None)?;
            let files = gallery(&cfg, &ds, &pipes)?;
            log::info!("wrote {} images", files.len());
        }
        Command::Run(args) => {
            let cfg = prepare(&args)?;
            let outcome = run_experiment(&cfg)?;
            for (v, r) in &outcome.reports {
                println!(
                    "{:<5} sigma={} eta_hat={:.6} c_hat={:.6} delta_stable={}",
                    v.tag(),
                    r.sigma,
                    r.eta_hat,
                    r.c_hat,
                    r.delta_stable
                );
            }
        }
        Command::Config(args) => print!("{}", args.load()?.to_toml()),
    }
    Ok(())
}
