//! Synthetic degradation of clean depth maps: low-resolution acquisition
//! (block average down, bilinear up), additive Gaussian noise, and coarse
//! quantization.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::map::{DepthMap, DEPTH_MAX};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DegradeConfig {
    /// Downsample factor; must divide the input side length.
    pub factor: usize,
    /// Standard deviation of the additive Gaussian noise, in depth units.
    pub sigma: f64,
    /// Quantization step in depth units; 0 disables quantization.
    pub quant: f64,
}

impl Default for DegradeConfig {
    fn default() -> Self {
        DegradeConfig {
            factor: 4,
            sigma: 6.0,
            quant: 4.0,
        }
    }
}

/// Apply the degradation pipeline. The mask passes through unchanged and the
/// result is clamped back to `[0, 255]`. Deterministic in `(clean, cfg, seed)`.
pub fn degrade(clean: &DepthMap, cfg: &DegradeConfig, seed: u64) -> Result<DepthMap> {
    let (h, w) = clean.values.dim();
    if cfg.factor == 0 || h % cfg.factor != 0 || w % cfg.factor != 0 {
        return Err(Error::config(format!(
            "degrade factor {} must divide map size {h}x{w}",
            cfg.factor
        )));
    }
    if cfg.sigma < 0.0 || cfg.quant < 0.0 {
        return Err(Error::config("degrade sigma and quant must be >= 0"));
    }
    let f = cfg.factor;
    let (lh, lw) = (h / f, w / f);

    // block-average downsample
    let mut low = Array2::<f64>::zeros((lh, lw));
    for bi in 0..lh {
        for bj in 0..lw {
            let mut acc = 0.0;
            for di in 0..f {
                for dj in 0..f {
                    acc += clean.values[[bi * f + di, bj * f + dj]] as f64;
                }
            }
            low[[bi, bj]] = acc / (f * f) as f64;
        }
    }

    // bilinear upsample back to the original grid (half-pixel centers)
    let mut values = Array2::<f64>::zeros((h, w));
    let sy = lh as f64 / h as f64;
    let sx = lw as f64 / w as f64;
    for i in 0..h {
        let y = ((i as f64 + 0.5) * sy - 0.5).clamp(0.0, (lh - 1) as f64);
        let y0 = y.floor() as usize;
        let y1 = (y0 + 1).min(lh - 1);
        let fy = y - y0 as f64;
        for j in 0..w {
            let x = ((j as f64 + 0.5) * sx - 0.5).clamp(0.0, (lw - 1) as f64);
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(lw - 1);
            let fx = x - x0 as f64;
            values[[i, j]] = low[[y0, x0]] * (1.0 - fy) * (1.0 - fx)
                + low[[y0, x1]] * (1.0 - fy) * fx
                + low[[y1, x0]] * fy * (1.0 - fx)
                + low[[y1, x1]] * fy * fx;
        }
    }

    if cfg.sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, cfg.sigma).expect("sigma checked above");
        for v in values.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }

    if cfg.quant > 0.0 {
        for v in values.iter_mut() {
            *v = (*v / cfg.quant).round() * cfg.quant;
        }
    }

    let values = values.mapv(|v| v.clamp(0.0, DEPTH_MAX) as f32);
    Ok(DepthMap {
        values,
        mask: clean.mask.clone(),
    })
}
