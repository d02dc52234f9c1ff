//! Recognizer building blocks: ConvBlocks, the multi-scale feature fusion
//! taps, the multi-branch fusion block, and the SAV vectorization head.

use rand::Rng;

use crate::autodiff::{ConvSpec, Scalar, Var};
use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, Conv2d, ParamStore, Session};

/// 3x3 (or 1x1) convolution + batch norm + ReLU.
pub struct ConvBnRelu {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
}

impl ConvBnRelu {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        cin: usize,
        cout: usize,
        spec: ConvSpec,
    ) -> Self {
        ConvBnRelu {
            conv: Conv2d::new(store, rng, &format!("{name}/conv"), cin, cout, spec, true),
            bn: BatchNorm2d::new(store, &format!("{name}/bn"), cout),
        }
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<T>, x: Var, training: bool) -> Var {
        let y = self.conv.forward(sess, x);
        let y = self.bn.forward_mode(sess, y, training);
        sess.tape.relu(y)
    }
}

/// Pooling parameters that map a backbone stage of spatial size `a` down to
/// the common `target` size: stride `a/target`, kernel `2*stride + 1`,
/// padding `stride`.
pub fn msff_pool_params(a: usize, target: usize) -> (usize, usize, usize) {
    let stride = a / target;
    (2 * stride + 1, stride, stride)
}

/// One backbone path: four ConvBlocks with 3x3 stride-2-pool downsampling,
/// plus MSFF taps off the first three conv outputs.
pub struct BackbonePath {
    pub blocks: Vec<ConvBnRelu>,
    pub channels: [usize; 4],
    pub input_size: usize,
    pub in_channels: usize,
}

/// Intermediate values of a backbone pass, for shape assertions.
pub struct BackboneTrace {
    pub conv_outs: Vec<Var>,
    pub pool_outs: Vec<Var>,
    pub msff_pools: Vec<Var>,
    pub msff_out: Var,
}

impl BackbonePath {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        in_channels: usize,
        channels: [usize; 4],
        input_size: usize,
    ) -> Self {
        let spec = ConvSpec::square(3, 1, 1, 1);
        let mut blocks = Vec::with_capacity(4);
        let mut prev = in_channels;
        for (b, &c) in channels.iter().enumerate() {
            blocks.push(ConvBnRelu::new(
                store,
                rng,
                &format!("{name}/block{}", b + 1),
                prev,
                c,
                spec,
            ));
            prev = c;
        }
        BackbonePath {
            blocks,
            channels,
            input_size,
            in_channels,
        }
    }

    pub fn msff_channels(&self) -> usize {
        self.channels.iter().sum()
    }

    pub fn forward<T: Scalar>(
        &self,
        sess: &mut Session<T>,
        x: Var,
        training: bool,
    ) -> Result<BackboneTrace> {
        let s = self.input_size;
        let shape = sess.tape.value(x).shape().to_vec();
        if shape.len() != 4 || shape[1] != self.in_channels || shape[2] != s || shape[3] != s {
            return Err(Error::invalid(format!(
                "backbone input must be [n,{},{s},{s}], got {shape:?}",
                self.in_channels
            )));
        }
        let target = s / 16;
        let mut conv_outs = Vec::with_capacity(4);
        let mut pool_outs = Vec::with_capacity(4);
        let mut cur = x;
        for (b, block) in self.blocks.iter().enumerate() {
            let conv = block.forward(sess, cur, training);
            conv_outs.push(conv);
            let pooled = sess.tape.max_pool(conv, 3, 2, 1);
            pool_outs.push(pooled);
            cur = pooled;
            let _ = b;
        }
        let mut msff_pools = Vec::with_capacity(3);
        for b in 0..3 {
            let a = s >> b;
            let (k, stride, pad) = msff_pool_params(a, target);
            msff_pools.push(sess.tape.max_pool(conv_outs[b], k, stride, pad));
        }
        let mut parts = msff_pools.clone();
        parts.push(pool_outs[3]);
        let msff_out = sess.tape.concat(&parts, 1);
        Ok(BackboneTrace {
            conv_outs,
            pool_outs,
            msff_pools,
            msff_out,
        })
    }
}

/// Multi-branch fusion: 1x1 reduce, grouped 3x3, 1x1 expand, each with batch
/// norm and ReLU.
pub struct FusionBlock {
    pub reduce: ConvBnRelu,
    pub grouped: ConvBnRelu,
    pub expand: ConvBnRelu,
    pub channels: usize,
}

impl FusionBlock {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        channels: usize,
        groups: usize,
    ) -> Self {
        FusionBlock {
            reduce: ConvBnRelu::new(
                store,
                rng,
                &format!("{name}/reduce"),
                2 * channels,
                channels,
                ConvSpec::square(1, 1, 0, 1),
            ),
            grouped: ConvBnRelu::new(
                store,
                rng,
                &format!("{name}/grouped"),
                channels,
                channels,
                ConvSpec::square(3, 1, 1, groups),
            ),
            expand: ConvBnRelu::new(
                store,
                rng,
                &format!("{name}/expand"),
                channels,
                2 * channels,
                ConvSpec::square(1, 1, 0, 1),
            ),
            channels,
        }
    }

    /// `depth_feats` and `normal_feats` are `[n, C, t, t]`; output is
    /// `[n, 2C, t, t]`.
    pub fn forward<T: Scalar>(
        &self,
        sess: &mut Session<T>,
        depth_feats: Var,
        normal_feats: Var,
        training: bool,
    ) -> Result<Var> {
        let a = sess.tape.value(depth_feats).shape().to_vec();
        let b = sess.tape.value(normal_feats).shape().to_vec();
        if a != b || a[1] != self.channels {
            return Err(Error::invalid(format!(
                "fusion inputs must both be [n,{},t,t], got {a:?} and {b:?}",
                self.channels
            )));
        }
        let cat = sess.tape.concat(&[depth_feats, normal_feats], 1);
        let y = self.reduce.forward(sess, cat, training);
        let y = self.grouped.forward(sess, y, training);
        Ok(self.expand.forward(sess, y, training))
    }
}

/// SAV: per-path depthwise convolution collapsing the whole spatial extent,
/// yielding one value per channel. No normalization.
pub struct SavHead {
    pub conv: Conv2d,
    pub channels: usize,
}

impl SavHead {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        channels: usize,
        spatial: usize,
    ) -> Self {
        SavHead {
            conv: Conv2d::new(
                store,
                rng,
                &format!("{name}/conv"),
                channels,
                channels,
                ConvSpec::square(spatial, spatial, 0, channels),
                true,
            ),
            channels,
        }
    }

    /// `[n, C, t, t]` to `[n, C]`.
    pub fn forward<T: Scalar>(&self, sess: &mut Session<T>, x: Var) -> Var {
        let y = self.conv.forward(sess, x);
        let n = sess.tape.value(y).shape()[0];
        sess.tape.reshape(y, &[n, self.channels])
    }
}
