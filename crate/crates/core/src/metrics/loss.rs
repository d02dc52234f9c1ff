//! The combined denoising objective: weighted L1, SSIM, and perceptual terms
//! built on the tape so it can be differentiated end to end.

use ndarray::{Array2, IxDyn};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Scalar, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::Session;

use super::ssim::ssim_var;

/// Term weights; defaults are the operating point used for training.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub l1: f64,
    pub ssim: f64,
    pub perceptual: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            l1: 1.0,
            ssim: 0.5,
            perceptual: 0.001,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.l1 < 0.0 || self.ssim < 0.0 || self.perceptual < 0.0 {
            return Err(Error::config("loss weights must be nonnegative"));
        }
        Ok(())
    }
}

/// Maps a `[1, 1, H, W]` unit-range depth image to an embedding on the
/// session's tape. Implementations hold frozen (non-trainable) weights.
pub trait PerceptualExtractor<T: Scalar> {
    fn embed(&self, sess: &mut Session<T>, depth: Var) -> Var;
}

/// Mean absolute difference on the tape, optionally restricted to a mask.
pub fn l1_var<T: Scalar>(
    tape: &mut Tape<T>,
    pred: Var,
    gt: Var,
    mask: Option<&Array2<bool>>,
) -> Var {
    let diff = tape.sub(pred, gt);
    let abs = tape.abs(diff);
    match mask {
        None => tape.mean_all(abs),
        Some(m) => {
            let count = m.iter().filter(|&&k| k).count();
            assert!(count > 0, "mask excludes every pixel");
            let shape = tape.value(abs).shape().to_vec();
            let mw: Vec<T> = m
                .iter()
                .map(|&k| if k { T::one() } else { T::zero() })
                .collect();
            let mv = tape.leaf(ndarray::ArrayD::from_shape_vec(IxDyn(&shape), mw).unwrap());
            let masked = tape.mul(abs, mv);
            let s = tape.sum_all(masked);
            tape.mul_scalar(s, T::from_f64(1.0 / count as f64))
        }
    }
}

/// `w.l1 * L1 + w.ssim * (1 - SSIM) + w.perceptual * mean|F(pred) - F(gt)|`.
/// Inputs are `[1, 1, H, W]` on unit range; the perceptual term is skipped
/// when its weight is zero.
pub fn total_denoise_loss<T: Scalar>(
    sess: &mut Session<T>,
    pred: Var,
    gt: Var,
    mask: Option<&Array2<bool>>,
    w: &LossWeights,
    px: Option<&dyn PerceptualExtractor<T>>,
) -> Result<Var> {
    w.validate()?;
    if sess.tape.value(pred).shape() != sess.tape.value(gt).shape() {
        return Err(Error::invalid("total_denoise_loss: shape mismatch"));
    }
    let l1 = l1_var(&mut sess.tape, pred, gt, mask);
    let mut total = sess.tape.mul_scalar(l1, T::from_f64(w.l1));
    if w.ssim > 0.0 {
        let s = ssim_var(&mut sess.tape, pred, gt);
        let neg = sess.tape.mul_scalar(s, T::from_f64(-1.0));
        let one_minus = sess.tape.add_scalar(neg, T::one());
        let term = sess.tape.mul_scalar(one_minus, T::from_f64(w.ssim));
        total = sess.tape.add(total, term);
    }
    if w.perceptual > 0.0 {
        let px = px.ok_or_else(|| {
            Error::config("perceptual weight > 0 but no extractor provided")
        })?;
        let fp = px.embed(sess, pred);
        let fg = px.embed(sess, gt);
        let diff = sess.tape.sub(fp, fg);
        let abs = sess.tape.abs(diff);
        let mean = sess.tape.mean_all(abs);
        let term = sess.tape.mul_scalar(mean, T::from_f64(w.perceptual));
        total = sess.tape.add(total, term);
    }
    Ok(total)
}
