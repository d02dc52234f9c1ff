//! CSV metrics report: one row per sample plus summary rows.

use std::io::Write;
use std::path::Path;

use crate::error::Result;

#[derive(Debug, Clone)]
pub struct SampleMetrics {
    pub sample_id: String,
    pub psnr_db: f64,
    pub ssim: f64,
    pub rmse: f64,
}

fn fmt(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

/// Mean ignoring infinite entries; `inf` if every entry is infinite.
fn finite_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut acc = 0.0;
    let mut n = 0usize;
    let mut any = false;
    for v in values {
        any = true;
        if v.is_finite() {
            acc += v;
            n += 1;
        }
    }
    if n > 0 {
        acc / n as f64
    } else if any {
        f64::INFINITY
    } else {
        f64::NAN
    }
}

/// Columns: `sample_id, psnr_db, ssim, rmse`. After the samples come a
/// `summary` row with column means and a `summary_ssim_percent` row that
/// restates mean SSIM on a 0-100 scale.
pub fn write_report(path: &Path, samples: &[SampleMetrics]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "sample_id,psnr_db,ssim,rmse")?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{}",
            s.sample_id,
            fmt(s.psnr_db),
            fmt(s.ssim),
            fmt(s.rmse)
        )?;
    }
    let psnr = finite_mean(samples.iter().map(|s| s.psnr_db));
    let ssim = finite_mean(samples.iter().map(|s| s.ssim));
    let rmse = finite_mean(samples.iter().map(|s| s.rmse));
    writeln!(out, "summary,{},{},{}", fmt(psnr), fmt(ssim), fmt(rmse))?;
    writeln!(out, "summary_ssim_percent,,{},", fmt(ssim * 100.0))?;
    out.flush()?;
    Ok(())
}
