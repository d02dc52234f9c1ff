//! Denoiser encoder: dual stems (depth and normal) fused by addition, a
//! residual stack, and three downsampling stages producing the four-level
//! feature pyramid at resolutions S, S/2, S/4, S/8.
//!
//! Residual branches are scaled by [`RES_SCALE`] before the skip addition.
//! Without it the activation variance compounds across the stacked blocks
//! and the decoder's Tanh head starts saturated, which stalls training.

use rand::Rng;

use crate::autodiff::{ConvSpec, Scalar, Var};
use crate::error::{Error, Result};
use crate::nn::{Conv2d, ParamStore, Session};

/// Residual-branch scale keeping activation variance near the input's.
pub const RES_SCALE: f64 = 0.1;

/// Residual block without normalization: conv-relu-conv plus identity.
pub struct ResBlock {
    pub c1: Conv2d,
    pub c2: Conv2d,
}

impl ResBlock {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        c: usize,
    ) -> Self {
        let spec = ConvSpec::square(3, 1, 1, 1);
        ResBlock {
            c1: Conv2d::new(store, rng, &format!("{name}/c1"), c, c, spec, true),
            c2: Conv2d::new(store, rng, &format!("{name}/c2"), c, c, spec, true),
        }
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<T>, x: Var) -> Var {
        let y = self.c1.forward(sess, x);
        let y = sess.tape.relu(y);
        let y = self.c2.forward(sess, y);
        let y = sess.tape.mul_scalar(y, T::from_f64(RES_SCALE));
        sess.tape.add(y, x)
    }
}

/// Downsampling residual block: first convolution has stride 2; the skip is
/// a 1x1 stride-2 projection so the shapes line up.
pub struct DsResBlock {
    pub c1: Conv2d,
    pub c2: Conv2d,
    pub skip: Conv2d,
}

impl DsResBlock {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        c: usize,
    ) -> Self {
        DsResBlock {
            c1: Conv2d::new(store, rng, &format!("{name}/c1"), c, c, ConvSpec::square(3, 2, 1, 1), true),
            c2: Conv2d::new(store, rng, &format!("{name}/c2"), c, c, ConvSpec::square(3, 1, 1, 1), true),
            skip: Conv2d::new(store, rng, &format!("{name}/skip"), c, c, ConvSpec::square(1, 2, 0, 1), true),
        }
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<T>, x: Var) -> Var {
        let y = self.c1.forward(sess, x);
        let y = sess.tape.relu(y);
        let y = self.c2.forward(sess, y);
        let y = sess.tape.mul_scalar(y, T::from_f64(RES_SCALE));
        let s = self.skip.forward(sess, x);
        sess.tape.add(y, s)
    }
}

const RES_PER_STAGE: usize = 3;
pub const PYRAMID_LEVELS: usize = 4;

pub struct Encoder {
    pub stem_depth: Conv2d,
    pub stem_normal: Conv2d,
    pub res: Vec<ResBlock>,
    pub stages: Vec<(DsResBlock, Vec<ResBlock>)>,
    pub channels: usize,
    pub input_size: usize,
}

impl Encoder {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        channels: usize,
        n_res: usize,
        input_size: usize,
    ) -> Self {
        let spec = ConvSpec::square(3, 1, 1, 1);
        let stem_depth = Conv2d::new(store, rng, &format!("{name}/stem_d"), 1, channels, spec, true);
        let stem_normal = Conv2d::new(store, rng, &format!("{name}/stem_n"), 3, channels, spec, true);
        let res = (0..n_res)
            .map(|k| ResBlock::new(store, rng, &format!("{name}/res{k}"), channels))
            .collect();
        let stages = (0..PYRAMID_LEVELS - 1)
            .map(|s| {
                let ds = DsResBlock::new(store, rng, &format!("{name}/ds{s}"), channels);
                let tail = (0..RES_PER_STAGE)
                    .map(|k| ResBlock::new(store, rng, &format!("{name}/ds{s}/res{k}"), channels))
                    .collect();
                (ds, tail)
            })
            .collect();
        Encoder {
            stem_depth,
            stem_normal,
            res,
            stages,
            channels,
            input_size,
        }
    }

    /// `depth` is `[1, 1, S, S]`, `normal` is `[1, 3, S, S]`, both in model
    /// range `[-1, 1]`. Returns the four pyramid levels, finest first.
    pub fn forward<T: Scalar>(
        &self,
        sess: &mut Session<T>,
        depth: Var,
        normal: Var,
    ) -> Result<[Var; PYRAMID_LEVELS]> {
        let s = self.input_size;
        if sess.tape.value(depth).shape() != [1, 1, s, s] {
            return Err(Error::invalid(format!("encoder depth input must be [1,1,{s},{s}]")));
        }
        if sess.tape.value(normal).shape() != [1, 3, s, s] {
            return Err(Error::invalid(format!("encoder normal input must be [1,3,{s},{s}]")));
        }
        let d = self.stem_depth.forward(sess, depth);
        let n = self.stem_normal.forward(sess, normal);
        let mut x = sess.tape.add(d, n);
        for block in &self.res {
            x = block.forward(sess, x);
        }
        let l0 = x;
        let mut levels = vec![l0];
        for (ds, tail) in &self.stages {
            x = ds.forward(sess, x);
            for block in tail {
                x = block.forward(sess, x);
            }
            levels.push(x);
        }
        Ok([levels[0], levels[1], levels[2], levels[3]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};
    use rand::SeedableRng;

    fn rand_input(seed: u64, c: usize, s: usize) -> ArrayD<f64> {
        use rand::Rng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ArrayD::from_shape_fn(IxDyn(&[1, c, s, s]), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn pyramid_shapes_halve_per_level() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let enc = Encoder::new(&mut store, &mut rng, "enc", 8, 2, 32);
        let mut sess = Session::new(&mut store, false);
        let d = sess.constant(rand_input(1, 1, 32));
        let n = sess.constant(rand_input(2, 3, 32));
        let pyr = enc.forward(&mut sess, d, n).unwrap();
        let sizes = [32usize, 16, 8, 4];
        for (level, expect) in pyr.iter().zip(sizes) {
            assert_eq!(sess.tape.value(*level).shape(), &[1, 8, expect, expect]);
        }
    }

    #[test]
    fn zero_weights_give_zero_pyramid() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let enc = Encoder::new(&mut store, &mut rng, "enc", 4, 1, 16);
        for id in store.ids() {
            store.value_mut(id).fill(0.0);
        }
        let mut sess = Session::new(&mut store, false);
        let d = sess.constant(rand_input(3, 1, 16));
        let n = sess.constant(rand_input(4, 3, 16));
        let pyr = enc.forward(&mut sess, d, n).unwrap();
        for level in pyr {
            assert!(sess.tape.value(level).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn stem_preactivation_is_homogeneous() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let enc = Encoder::new(&mut store, &mut rng, "enc", 4, 1, 16);
        let input = rand_input(6, 1, 16);
        let base = {
            let mut sess = Session::new(&mut store, false);
            let d = sess.constant(input.clone());
            let y = enc.stem_depth.forward(&mut sess, d);
            sess.tape.value(y).clone()
        };
        let w = store.value_mut(enc.stem_depth.w);
        w.mapv_inplace(|v| v * 2.0);
        let doubled = {
            let mut sess = Session::new(&mut store, false);
            let d = sess.constant(input);
            let y = enc.stem_depth.forward(&mut sess, d);
            sess.tape.value(y).clone()
        };
        for (a, b) in base.iter().zip(doubled.iter()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let enc = Encoder::new(&mut store, &mut rng, "enc", 4, 1, 16);
        let mut sess = Session::new(&mut store, false);
        let d = sess.constant(rand_input(1, 1, 8));
        let n = sess.constant(rand_input(2, 3, 16));
        assert!(enc.forward(&mut sess, d, n).is_err());
    }
}
