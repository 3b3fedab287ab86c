mod common;

use std::path::Path;

use stabnet::harness::{
    ingest, run_experiment, synthesize, DataSource, ExperimentConfig, ExperimentKind, Variant,
};
use stabnet::harness::patches;
use stabnet::imaging::io::{load_luminance, read_pgm};
use stabnet::imaging::{gaussian_psf, BlurOperator};
use stabnet::network::Architecture;

fn op(n: usize) -> BlurOperator {
    BlurOperator::new(gaussian_psf(5, 1.3).unwrap(), (n, n)).unwrap()
}

fn write_png(path: &Path, w: u32, h: u32, f: impl Fn(u32, u32) -> [u8; 3]) {
    image::RgbImage::from_fn(w, h, |x, y| image::Rgb(f(x, y))).save(path).unwrap();
}

#[test]
fn ingest_tiles_and_splits_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    write_png(&dir.path().join("a.png"), 512, 512, |x, y| [(x / 2) as u8, (y / 2) as u8, ((x + y) % 256) as u8]);
    std::fs::write(dir.path().join("notes.txt"), "not an image").unwrap();
    let a = ingest(dir.path(), 256, &op(256), 0.5, 3).unwrap();
    assert_eq!(a.samples.len(), 4);
    assert_eq!(a.n_train, 2);
    a.check_disjoint().unwrap();
    let b = ingest(dir.path(), 256, &op(256), 0.5, 3).unwrap();
    assert_eq!(a, b);
}

#[test]
fn white_image_gives_constant_patches() {
    let dir = tempfile::tempdir().unwrap();
    let white = dir.path().join("white.png");
    write_png(&white, 40, 20, |_, _| [255, 255, 255]);
    let img = load_luminance(&white).unwrap();
    let tiles = patches(&img, 20);
    assert_eq!(tiles.len(), 2);
    assert!(tiles.iter().all(|t| t.pixels().iter().all(|&v| v == 1.0)));
}

#[test]
fn repeated_tiles_are_dropped_before_splitting() {
    let dir = tempfile::tempdir().unwrap();
    write_png(&dir.path().join("white.png"), 40, 20, |_, _| [255, 255, 255]);
    write_png(&dir.path().join("ramp.png"), 20, 20, |x, y| [(x * 10) as u8, (y * 10) as u8, 0]);
    let d = ingest(dir.path(), 20, &op(20), 0.5, 0).unwrap();
    assert_eq!(d.samples.len(), 2);
    d.check_disjoint().unwrap();
}

#[test]
fn ingest_without_images_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("x.png"), b"garbage").unwrap();
    assert!(ingest(dir.path(), 16, &op(16), 0.7, 0).is_err());
}

#[test]
fn synthetic_scenes_preserve_mean_under_blur() {
    let d = synthesize(20, 14, &op(64), 9).unwrap();
    assert_eq!(d.samples.len(), 20);
    for s in &d.samples {
        assert!((s.gt.mean() - s.blurred.mean()).abs() < 1e-10);
        assert!(s.gt.min() >= 0.0 && s.gt.max() <= 1.0);
    }
}

fn small_config(out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::desk_default();
    c.data = DataSource::Synth { train: 8, test: 5 };
    c.patch_size = 24;
    c.network = Architecture::Ssnet3l {
        widths: [3, 3],
        kernel_sizes: [5, 3, 3],
        skip: false,
    };
    c.train.epochs = 3;
    c.train.batch_size = 4;
    c.stabilizer.iterative.iterations = 10;
    c.gallery = vec![0, 2];
    c.output_dir = out.to_owned();
    c
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn identical_runs_write_identical_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&small_config(a.path())).unwrap();
    run_experiment(&small_config(b.path())).unwrap();
    let mut files = vec!["sweep.csv".to_string(), "scatter.csv".to_string()];
    for v in Variant::ALL {
        files.push(format!("checkpoints/{}.ckpt", v.tag()));
        files.push(format!("reports/{}_sigma0.0250.csv", v.tag()));
        files.push(format!("loss/{}.csv", v.tag()));
        files.push(format!("gallery/test002_{}_sigma0.0250.pgm", v.tag()));
    }
    for f in files {
        assert_eq!(read(&a.path().join(&f)), read(&b.path().join(&f)), "{f}");
    }
}

#[test]
fn scatter_ratios_recompute_from_rows() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&small_config(dir.path())).unwrap();
    let text = String::from_utf8(read(&dir.path().join("scatter.csv"))).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let num = |i: usize| f[i].parse::<f64>().unwrap();
        let (noise, err, eta, ratio) = (num(3), num(4), num(5), num(7));
        assert!(((err - eta) / noise - ratio).abs() < 1e-12);
        assert_eq!(f[8] == "true", ratio < 1.0);
        rows += 1;
    }
    assert_eq!(rows, 3 * 5);
}

#[test]
fn gallery_images_are_clamped_sixteen_bit() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&small_config(dir.path())).unwrap();
    let g = dir.path().join("gallery");
    // 2 indices × (gt, blurred, noisy, 3 reconstructions)
    assert_eq!(std::fs::read_dir(&g).unwrap().count(), 12);
    let bytes = read(&g.join("test000_noisy_sigma0.0250.pgm"));
    assert!(bytes.starts_with(b"P5\n"));
    let img = read_pgm(&g.join("test000_noisy_sigma0.0250.pgm")).unwrap();
    assert!(img.min() >= 0.0 && img.max() <= 1.0);
}

#[test]
fn experiment_b_trains_with_injected_noise() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.experiment = ExperimentKind::B;
    cfg.train_sigma = 0.05;
    cfg.variants = vec![Variant::Nn];
    cfg.gallery.clear();
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.reports.len(), 1);
    let summary: serde_json::Value = serde_json::from_slice(&read(&dir.path().join("summary.json"))).unwrap();
    assert_eq!(summary["train_sigma"], 0.05);
}
