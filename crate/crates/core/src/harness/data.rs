use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imaging::io::{load_luminance, read_raw, write_pgm, write_raw, PgmDepth};
use crate::imaging::{mix_seed, BlurOperator, Image};
use crate::metrics::Sample;

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;

/// Sharp/blurred pairs split into a training prefix and a test suffix.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub n_train: usize,
    pub provenance: String,
}

impl Dataset {
    pub fn train(&self) -> &[Sample] {
        &self.samples[..self.n_train]
    }

    pub fn test(&self) -> &[Sample] {
        &self.samples[self.n_train..]
    }

    pub fn shape(&self) -> (usize, usize) {
        self.samples[0].gt.shape()
    }

    /// Fails if any ground-truth image occurs in both splits.
    pub fn check_disjoint(&self) -> Result<()> {
        let train: HashSet<[u8; 32]> = self.train().iter().map(|s| image_digest(&s.gt)).collect();
        match self.test().iter().position(|s| train.contains(&image_digest(&s.gt))) {
            Some(i) => Err(Error::InvalidInput(format!(
                "test image {i} also appears in the training split"
            ))),
            None => Ok(()),
        }
    }

    /// Writes `manifest.json` plus `gt_NNNN.raw` / `blurred_NNNN.raw` and
    /// 16-bit PGM previews.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (h, w) = self.shape();
        let manifest = serde_json::json!({
            "count": self.samples.len(),
            "n_train": self.n_train,
            "height": h,
            "width": w,
            "provenance": self.provenance,
        });
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap() + "\n")
            .map_err(|e| Error::io(&path, e))?;
        for (i, s) in self.samples.iter().enumerate() {
            write_raw(&dir.join(format!("gt_{i:04}.raw")), &s.gt)?;
            write_raw(&dir.join(format!("blurred_{i:04}.raw")), &s.blurred)?;
            write_pgm(&dir.join(format!("gt_{i:04}.pgm")), &s.gt, PgmDepth::Sixteen)?;
            write_pgm(&dir.join(format!("blurred_{i:04}.pgm")), &s.blurred, PgmDepth::Sixteen)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let bad = |reason: String| Error::Format {
            path: path.clone(),
            reason,
        };
        let m: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let field = |k: &str| {
            m[k].as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| bad(format!("missing integer field {k}")))
        };
        let (count, n_train) = (field("count")?, field("n_train")?);
        if n_train > count {
            return Err(bad("n_train exceeds count".into()));
        }
        let samples = (0..count)
            .map(|i| {
                Ok(Sample {
                    gt: read_raw(&dir.join(format!("gt_{i:04}.raw")))?,
                    blurred: read_raw(&dir.join(format!("blurred_{i:04}.raw")))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            samples,
            n_train,
            provenance: m["provenance"].as_str().unwrap_or_default().to_string(),
        })
    }
}

pub fn image_digest(img: &Image) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((img.height() as u64).to_le_bytes());
    h.update((img.width() as u64).to_le_bytes());
    for v in img.pixels() {
        h.update(v.to_le_bytes());
    }
    h.finalize().into()
}

/// Number of training samples for a fractional split, keeping at least one
/// image on each side.
pub fn split_count(total: usize, train_fraction: f64) -> usize {
    ((total as f64 * train_fraction).round() as usize).clamp(1, total.saturating_sub(1).max(1))
}

/// Procedural scene: a linear gradient background with rectangles, disks and
/// a low-frequency texture, clamped to `[0, 1]`.
pub fn synthetic_scene(size: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = size as f64;
    let mut img = {
        let (a, b) = (rng.gen_range(0.2..0.8), rng.gen_range(-0.3..0.3));
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let (ca, sa) = (angle.cos(), angle.sin());
        Image::from_fn(size, size, |r, c| a + b * ((r as f64 * ca + c as f64 * sa) / n))
    };
    for _ in 0..rng.gen_range(3..=6) {
        let (h, w) = (rng.gen_range(size / 8..=size / 2), rng.gen_range(size / 8..=size / 2));
        let (r0, c0) = (rng.gen_range(0..size - h), rng.gen_range(0..size - w));
        let v = rng.gen_range(0.0..1.0);
        for r in r0..r0 + h {
            for c in c0..c0 + w {
                img.set(r, c, v);
            }
        }
    }
    for _ in 0..rng.gen_range(2..=4) {
        let (cr, cc) = (rng.gen_range(0.0..n), rng.gen_range(0.0..n));
        let rad = rng.gen_range(n / 16.0..n / 5.0);
        let v = rng.gen_range(0.0..1.0);
        for r in 0..size {
            for c in 0..size {
                if (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2) <= rad * rad {
                    img.set(r, c, v);
                }
            }
        }
    }
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(1.0..6.0) * std::f64::consts::TAU / n,
                rng.gen_range(1.0..6.0) * std::f64::consts::TAU / n,
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.02..0.06),
            )
        })
        .collect();
    Image::from_fn(size, size, |r, c| {
        let texture: f64 = waves
            .iter()
            .map(|&(fr, fc, ph, amp)| amp * (fr * r as f64 + fc * c as f64 + ph).sin())
            .sum();
        img.get(r, c) + texture
    })
    .clamp01()
}

fn blur_all(gts: Vec<Image>, op: &BlurOperator) -> Result<Vec<Sample>> {
    gts.into_iter().map(|gt| Sample::from_gt(op, gt)).collect()
}

/// `count` procedural scenes of `op`'s shape blurred by `op`; the first
/// `n_train` form the training split.
pub fn synthesize(count: usize, n_train: usize, op: &BlurOperator, seed: u64) -> Result<Dataset> {
    if count < 2 {
        return Err(Error::invalid_param("synthesize needs count >= 2"));
    }
    if n_train == 0 || n_train >= count {
        return Err(Error::invalid_param(format!(
            "training split must leave both sides non-empty, got {n_train} of {count}"
        )));
    }
    let (h, w) = op.shape();
    if h != w {
        return Err(Error::invalid_param("synthetic scenes are square"));
    }
    let gts = (0..count).map(|i| synthetic_scene(h, mix_seed(seed, i as u64))).collect();
    Ok(Dataset {
        samples: blur_all(gts, op)?,
        n_train,
        provenance: format!("synthetic scenes, size {h}, seed {seed}"),
    })
}

/// Non-overlapping `patch_size` tiles in raster order. Trailing rows and
/// columns that do not fill a whole tile are dropped.
pub fn patches(img: &Image, patch_size: usize) -> Vec<Image> {
    let (h, w) = img.shape();
    let mut out = Vec::new();
    for r in (0..h / patch_size).map(|i| i * patch_size) {
        for c in (0..w / patch_size).map(|j| j * patch_size) {
            out.push(img.crop(r, c, patch_size, patch_size).expect("tile inside image"));
        }
    }
    out
}

/// Tiles every readable image in `dir` (sorted by file name), drops
/// repeated tiles, shuffles with `seed` and splits `train_fraction` / rest.
pub fn ingest(
    dir: &Path,
    patch_size: usize,
    op: &BlurOperator,
    train_fraction: f64,
    seed: u64,
) -> Result<Dataset> {
    if patch_size == 0 || op.shape() != (patch_size, patch_size) {
        return Err(Error::invalid_param(format!(
            "blur operator shape {:?} must equal the patch size {patch_size}",
            op.shape()
        )));
    }
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    let mut tiles = Vec::new();
    let mut seen = HashSet::new();
    let (mut used, mut duplicates) = (0, 0);
    for f in &files {
        match load_luminance(f) {
            Ok(img) => {
                for t in patches(&img, patch_size) {
                    // identical tiles would land in both splits
                    if seen.insert(image_digest(&t)) {
                        tiles.push(t);
                    } else {
                        duplicates += 1;
                    }
                }
                used += 1;
            }
            Err(e) => log::warn!("skipping {}: {e}", f.display()),
        }
    }
    if duplicates > 0 {
        log::warn!("dropped {duplicates} duplicate patches");
    }
    if tiles.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "{} yielded {} patches of size {patch_size}; need at least 2",
            dir.display(),
            tiles.len()
        )));
    }
    tiles.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = split_count(tiles.len(), train_fraction);
    let count = tiles.len();
    Ok(Dataset {
        samples: blur_all(tiles, op)?,
        n_train,
        provenance: format!("{count} patches from {used} files in {}", dir.display()),
    })
}
