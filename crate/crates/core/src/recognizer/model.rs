//! The assembled three-path recognizer: depth and normal backbones, per-path
//! integration blocks, fusion path, SAV heads, and classifier heads.

use ndarray::{Array3, Array4, ArrayD, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ConvSpec, Scalar, Var};
use crate::depth::{compute_normal_map, DepthMap};
use crate::error::{Error, Result};
use crate::nn::{Linear, ParamStore, Session};

use super::blocks::{BackbonePath, ConvBnRelu, FusionBlock, SavHead};

/// Recognizer hyperparameters. The full configuration uses 128x128 inputs
/// and channel widths 32/64/128/256; tests shrink both.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LdnfConfig {
    pub input_size: usize,
    pub channels: [usize; 4],
    pub fusion_groups: usize,
    pub num_classes: usize,
    /// Gain for normal maps computed from depth, in depth units per pixel.
    pub normal_gain: f64,
}

impl LdnfConfig {
    pub fn paper(num_classes: usize) -> Self {
        LdnfConfig {
            input_size: 128,
            channels: [32, 64, 128, 256],
            fusion_groups: 32,
            num_classes,
            normal_gain: 0.05,
        }
    }

    pub fn msff_channels(&self) -> usize {
        self.channels.iter().sum()
    }

    pub fn embedding_len(&self) -> usize {
        4 * self.msff_channels()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size < 16 || self.input_size % 16 != 0 {
            return Err(Error::config(format!(
                "recognizer input size {} must be a multiple of 16",
                self.input_size
            )));
        }
        if self.channels.iter().any(|&c| c == 0) || self.num_classes == 0 {
            return Err(Error::config("recognizer channels and classes must be >= 1"));
        }
        let m = self.msff_channels();
        if self.fusion_groups == 0 || m % self.fusion_groups != 0 {
            return Err(Error::config(format!(
                "fusion groups {} must divide the {m} fused channels",
                self.fusion_groups
            )));
        }
        Ok(())
    }
}

pub struct LdnfNet {
    pub cfg: LdnfConfig,
    pub path_depth: BackbonePath,
    pub path_normal: BackbonePath,
    pub block6_depth: ConvBnRelu,
    pub block6_normal: ConvBnRelu,
    pub fusion: FusionBlock,
    pub sav_depth: SavHead,
    pub sav_normal: SavHead,
    pub sav_fusion: SavHead,
    pub head_depth: Linear,
    pub head_normal: Linear,
    pub head_fusion: Linear,
}

pub struct RecognizerOutputs {
    pub sav_depth: Var,
    pub sav_normal: Var,
    pub sav_fusion: Var,
    /// Concatenation (depth, normal, fusion), length `4 * msff_channels`.
    pub f_final: Var,
    pub logits_depth: Var,
    pub logits_normal: Var,
    pub logits_fusion: Var,
}

impl LdnfNet {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        cfg: LdnfConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let m = cfg.msff_channels();
        let t = cfg.input_size / 16;
        let spec3 = ConvSpec::square(3, 1, 1, 1);
        Ok(LdnfNet {
            path_depth: BackbonePath::new(
                store,
                rng,
                &format!("{name}/depth"),
                1,
                cfg.channels,
                cfg.input_size,
            ),
            path_normal: BackbonePath::new(
                store,
                rng,
                &format!("{name}/normal"),
                3,
                cfg.channels,
                cfg.input_size,
            ),
            block6_depth: ConvBnRelu::new(store, rng, &format!("{name}/block6_d"), m, m, spec3),
            block6_normal: ConvBnRelu::new(store, rng, &format!("{name}/block6_n"), m, m, spec3),
            fusion: FusionBlock::new(store, rng, &format!("{name}/fusion"), m, cfg.fusion_groups),
            sav_depth: SavHead::new(store, rng, &format!("{name}/sav_d"), m, t),
            sav_normal: SavHead::new(store, rng, &format!("{name}/sav_n"), m, t),
            sav_fusion: SavHead::new(store, rng, &format!("{name}/sav_f"), 2 * m, t),
            head_depth: Linear::new(store, rng, &format!("{name}/head_d"), m, cfg.num_classes),
            head_normal: Linear::new(store, rng, &format!("{name}/head_n"), m, cfg.num_classes),
            head_fusion: Linear::new(
                store,
                rng,
                &format!("{name}/head_f"),
                4 * m,
                cfg.num_classes,
            ),
            cfg,
        })
    }

    /// `depth` is `[n, 1, S, S]` and `normal` `[n, 3, S, S]`, both tape
    /// values in model range.
    pub fn forward<T: Scalar>(
        &self,
        sess: &mut Session<T>,
        depth: Var,
        normal: Var,
        training: bool,
    ) -> Result<RecognizerOutputs> {
        let td = self.path_depth.forward(sess, depth, training)?;
        let tn = self.path_normal.forward(sess, normal, training)?;
        let fd = self.block6_depth.forward(sess, td.msff_out, training);
        let fn_ = self.block6_normal.forward(sess, tn.msff_out, training);
        let fused = self
            .fusion
            .forward(sess, td.msff_out, tn.msff_out, training)?;
        let sav_depth = self.sav_depth.forward(sess, fd);
        let sav_normal = self.sav_normal.forward(sess, fn_);
        let sav_fusion = self.sav_fusion.forward(sess, fused);
        let f_final = sess.tape.concat(&[sav_depth, sav_normal, sav_fusion], 1);
        let logits_depth = self.head_depth.forward(sess, sav_depth);
        let logits_normal = self.head_normal.forward(sess, sav_normal);
        let logits_fusion = self.head_fusion.forward(sess, f_final);
        Ok(RecognizerOutputs {
            sav_depth,
            sav_normal,
            sav_fusion,
            f_final,
            logits_depth,
            logits_normal,
            logits_fusion,
        })
    }

    /// Sum of the three per-path cross-entropies.
    pub fn loss<T: Scalar>(
        &self,
        sess: &mut Session<T>,
        out: &RecognizerOutputs,
        targets: &[usize],
    ) -> Var {
        let ld = sess.tape.cross_entropy(out.logits_depth, targets);
        let ln = sess.tape.cross_entropy(out.logits_normal, targets);
        let lf = sess.tape.cross_entropy(out.logits_fusion, targets);
        let s = sess.tape.add(ld, ln);
        sess.tape.add(s, lf)
    }
}

/// Model-range input tensors for a batch of depth maps: depth mapped by
/// `v/127.5 - 1`, normals from [`compute_normal_map`] with the config gain.
pub fn batch_inputs<T: Scalar>(
    maps: &[&DepthMap],
    cfg: &LdnfConfig,
) -> Result<(ArrayD<T>, ArrayD<T>)> {
    let s = cfg.input_size;
    let n = maps.len();
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let mut depth = Array4::<T>::zeros((n, 1, s, s));
    let mut normal = Array4::<T>::zeros((n, 3, s, s));
    for (b, d) in maps.iter().enumerate() {
        if d.values.dim() != (s, s) {
            return Err(Error::invalid(format!(
                "recognizer expects {s}x{s} maps, got {:?}",
                d.values.dim()
            )));
        }
        let nm: Array3<f64> = compute_normal_map(d, cfg.normal_gain).data;
        for i in 0..s {
            for j in 0..s {
                depth[[b, 0, i, j]] = T::from_f64(d.values[[i, j]] as f64 / 127.5 - 1.0);
                for k in 0..3 {
                    normal[[b, k, i, j]] = T::from_f64(nm[[i, j, k]]);
                }
            }
        }
    }
    Ok((
        depth.into_shape_with_order(IxDyn(&[n, 1, s, s])).unwrap(),
        normal.into_shape_with_order(IxDyn(&[n, 3, s, s])).unwrap(),
    ))
}

/// Evaluation-mode embedding (`f_final`) of one depth map.
pub fn embed_map<T: Scalar>(
    net: &LdnfNet,
    store: &mut ParamStore<T>,
    d: &DepthMap,
) -> Result<Vec<f64>> {
    let (depth, normal) = batch_inputs::<T>(&[d], &net.cfg)?;
    let mut sess = Session::new(store, false);
    let dv = sess.constant(depth);
    let nv = sess.constant(normal);
    let out = net.forward(&mut sess, dv, nv, false)?;
    Ok(sess
        .tape
        .value(out.f_final)
        .iter()
        .map(|&v| Scalar::to_f64(v))
        .collect())
}
