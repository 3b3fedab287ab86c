use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ImageStability, StabilityReport};
use crate::error::{Error, Result};
use crate::stabilizers::OBJECTIVE_CONVENTION;

pub const REPORT_CSV_HEADER: &str = "id,err_noiseless,err_noisy,noise_norm,ratio,ssim";

/// One parsed row of a per-image report CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub id: usize,
    pub err_noiseless: f64,
    pub err_noisy: f64,
    pub noise_norm: f64,
    pub ratio: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub eta_hat: f64,
    /// Stored as a string so the `η̂ = 0` case can carry `"inf"`.
    pub eta_hat_inv: String,
    pub c_hat: f64,
    pub delta_stable: bool,
    pub sigma: f64,
    pub seed: u64,
    pub reconstructor_tag: String,
    pub images: usize,
    pub stable_images: usize,
    pub mean_err_noisy: f64,
    pub mean_ssim: f64,
    pub objective: String,
}

impl From<&StabilityReport> for ReportSummary {
    fn from(r: &StabilityReport) -> Self {
        Self {
            eta_hat: r.eta_hat,
            eta_hat_inv: if r.eta_hat_inv.is_finite() {
                format!("{:e}", r.eta_hat_inv)
            } else {
                "inf".into()
            },
            c_hat: r.c_hat,
            delta_stable: r.delta_stable,
            sigma: r.sigma,
            seed: r.seed,
            reconstructor_tag: r.reconstructor_tag.clone(),
            images: r.per_image.len(),
            stable_images: r.stable_count(),
            mean_err_noisy: r.mean_noisy_error(),
            mean_ssim: r.mean_ssim(),
            objective: OBJECTIVE_CONVENTION.into(),
        }
    }
}

pub fn report_csv(report: &StabilityReport) -> String {
    let mut s = String::from(REPORT_CSV_HEADER);
    s.push('\n');
    for (i, p) in report.per_image.iter().enumerate() {
        let ImageStability {
            err_noiseless,
            err_noisy,
            noise_norm,
            ratio,
            ssim,
        } = p;
        writeln!(s, "{i},{err_noiseless:e},{err_noisy:e},{noise_norm:e},{ratio:e},{ssim:e}").unwrap();
    }
    s
}

/// Writes `<stem>.csv` and `<stem>.json` and returns both paths.
pub fn write_report(dir: &Path, stem: &str, report: &StabilityReport) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv, report_csv(report)).map_err(|e| Error::io(&csv, e))?;
    let json = dir.join(format!("{stem}.json"));
    let body = serde_json::to_string_pretty(&ReportSummary::from(report)).expect("summary serializes");
    std::fs::write(&json, body + "\n").map_err(|e| Error::io(&json, e))?;
    Ok((csv, json))
}

pub fn parse_report_csv(text: &str) -> std::result::Result<Vec<ReportRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_CSV_HEADER) {
        return Err("missing report header".into());
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(format!("line {}: expected 6 fields", n + 2));
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|e| format!("line {}: {e}", n + 2));
            Ok(ReportRow {
                id: f[0].parse().map_err(|e| format!("line {}: {e}", n + 2))?,
                err_noiseless: num(1)?,
                err_noisy: num(2)?,
                noise_norm: num(3)?,
                ratio: num(4)?,
                ssim: num(5)?,
            })
        })
        .collect()
}

pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_report_csv(&text).map_err(|reason| Error::Format {
        path: path.to_owned(),
        reason,
    })
}
