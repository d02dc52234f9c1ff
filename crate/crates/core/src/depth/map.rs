//! Depth-map container and the geometric operations on it.

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

/// Canonical depth-map size after preprocessing.
pub const CANONICAL_SIZE: usize = 128;

/// Depth range used throughout: values live in `[0, 255]`.
pub const DEPTH_MAX: f64 = 255.0;

/// An `H x W` depth grid in `[0, 255]` with a per-pixel validity mask.
/// Values are stored as `f32` so the on-disk format round-trips bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub values: Array2<f32>,
    pub mask: Array2<bool>,
}

impl DepthMap {
    /// Validating constructor: masked-in values must be finite and within
    /// `[0, 255]`, and the mask must not be all-false.
    pub fn new(values: Array2<f32>, mask: Array2<bool>) -> Result<Self> {
        if values.dim() != mask.dim() {
            return Err(Error::invalid("values/mask shape mismatch"));
        }
        let mut any_valid = false;
        for (v, m) in values.iter().zip(mask.iter()) {
            if *m {
                any_valid = true;
                if !v.is_finite() || *v < 0.0 || *v > DEPTH_MAX as f32 {
                    return Err(Error::invalid(format!(
                        "masked-in depth value {v} outside [0, 255]"
                    )));
                }
            }
        }
        if !any_valid {
            return Err(Error::invalid("depth mask is all-false"));
        }
        Ok(DepthMap { values, mask })
    }

    pub fn height(&self) -> usize {
        self.values.dim().0
    }

    pub fn width(&self) -> usize {
        self.values.dim().1
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Values as `f64`, for metric computations.
    pub fn values_f64(&self) -> Array2<f64> {
        self.values.mapv(|v| v as f64)
    }
}

/// Per-pixel unit surface normals, `H x W x 3` with non-negative z.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    pub data: Array3<f64>,
}

impl NormalMap {
    pub fn height(&self) -> usize {
        self.data.dim().0
    }
    pub fn width(&self) -> usize {
        self.data.dim().1
    }
}

fn bilinear_sample(values: &Array2<f32>, y: f64, x: f64) -> f64 {
    let (h, w) = values.dim();
    let yc = y.clamp(0.0, (h - 1) as f64);
    let xc = x.clamp(0.0, (w - 1) as f64);
    let y0 = yc.floor() as usize;
    let x0 = xc.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = yc - y0 as f64;
    let fx = xc - x0 as f64;
    let v00 = values[[y0, x0]] as f64;
    let v01 = values[[y0, x1]] as f64;
    let v10 = values[[y1, x0]] as f64;
    let v11 = values[[y1, x1]] as f64;
    v00 * (1.0 - fy) * (1.0 - fx)
        + v01 * (1.0 - fy) * fx
        + v10 * fy * (1.0 - fx)
        + v11 * fy * fx
}

/// Resize to `out_size` x `out_size` (bilinear values, nearest mask) and
/// min-max rescale the valid values to span exactly `[0, 255]`. A constant
/// input maps to the midpoint 127.5.
pub fn resize_normalize(raw: &DepthMap, out_size: usize) -> Result<DepthMap> {
    if out_size == 0 {
        return Err(Error::invalid("resize_normalize: out_size must be >= 1"));
    }
    if raw.valid_count() == 0 {
        return Err(Error::invalid("resize_normalize: empty mask"));
    }
    let (h, w) = raw.values.dim();
    let sy = h as f64 / out_size as f64;
    let sx = w as f64 / out_size as f64;
    let mut values = Array2::<f32>::zeros((out_size, out_size));
    let mut mask = Array2::<bool>::from_elem((out_size, out_size), true);
    for i in 0..out_size {
        let y = (i as f64 + 0.5) * sy - 0.5;
        for j in 0..out_size {
            let x = (j as f64 + 0.5) * sx - 0.5;
            values[[i, j]] = bilinear_sample(&raw.values, y, x) as f32;
            let yn = (y.round().clamp(0.0, (h - 1) as f64)) as usize;
            let xn = (x.round().clamp(0.0, (w - 1) as f64)) as usize;
            mask[[i, j]] = raw.mask[[yn, xn]];
        }
    }
    if !mask.iter().any(|&m| m) {
        // nearest-mask resampling of a sparse mask can lose every valid pixel
        return Err(Error::invalid("resize_normalize: no valid pixels survive resampling"));
    }
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for (v, m) in values.iter().zip(mask.iter()) {
        if *m {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if hi > lo {
        let scale = DEPTH_MAX as f32 / (hi - lo);
        for v in values.iter_mut() {
            *v = ((*v - lo) * scale).clamp(0.0, DEPTH_MAX as f32);
        }
    } else {
        values.fill(127.5);
    }
    DepthMap::new(values, mask)
}

/// Surface normals from depth by central differences with replicated borders.
/// `gain` converts depth units to spatial units; masked-out pixels get the
/// canonical up-normal `(0, 0, 1)`.
pub fn compute_normal_map(d: &DepthMap, gain: f64) -> NormalMap {
    let (h, w) = d.values.dim();
    let mut out = Array3::<f64>::zeros((h, w, 3));
    let at = |i: isize, j: isize| -> f64 {
        let ic = i.clamp(0, h as isize - 1) as usize;
        let jc = j.clamp(0, w as isize - 1) as usize;
        d.values[[ic, jc]] as f64
    };
    for i in 0..h {
        for j in 0..w {
            if !d.mask[[i, j]] {
                out[[i, j, 2]] = 1.0;
                continue;
            }
            let ii = i as isize;
            let jj = j as isize;
            let ddx = (at(ii, jj + 1) - at(ii, jj - 1)) / 2.0;
            let ddy = (at(ii + 1, jj) - at(ii - 1, jj)) / 2.0;
            let nx = -gain * ddx;
            let ny = -gain * ddy;
            let norm = (nx * nx + ny * ny + 1.0).sqrt();
            out[[i, j, 0]] = nx / norm;
            out[[i, j, 1]] = ny / norm;
            out[[i, j, 2]] = 1.0 / norm;
        }
    }
    NormalMap { data: out }
}
