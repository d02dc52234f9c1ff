//! Layer building blocks: thin structs holding parameter ids plus a forward
//! method on a [`Session`].

use ndarray::{Array1, IxDyn};
use rand::Rng;

use crate::autodiff::{ConvSpec, Scalar, Var};

use super::init;
use super::param::{ParamId, ParamStore};
use super::session::Session;

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

/// 2D convolution with optional bias.
pub struct Conv2d {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub spec: ConvSpec,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        cin: usize,
        cout: usize,
        spec: ConvSpec,
        bias: bool,
    ) -> Self {
        let cin_g = cin / spec.groups;
        let fan_in = cin_g * spec.kh * spec.kw;
        let w = store.add(
            format!("{name}/w"),
            init::kaiming(rng, &[cout, cin_g, spec.kh, spec.kw], fan_in),
            true,
        );
        let b = bias.then(|| store.add(format!("{name}/b"), init::zeros(&[cout]), true));
        Conv2d { w, b, spec }
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<T>, x: Var) -> Var {
        let w = sess.param(self.w);
        let y = sess.tape.conv2d(x, w, self.spec);
        match self.b {
            Some(b) => {
                let bv = sess.param(b);
                sess.tape.add_chan(y, bv)
            }
            None => y,
        }
    }
}

/// Affine layer on `[n, in] -> [n, out]`. Weight stored as `[in, out]`.
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        input: usize,
        output: usize,
    ) -> Self {
        let w = store.add(
            format!("{name}/w"),
            init::kaiming(rng, &[input, output], input),
            true,
        );
        let b = store.add(format!("{name}/b"), init::zeros(&[output]), true);
        Linear { w, b }
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<T>, x: Var) -> Var {
        let w = sess.param(self.w);
        let b = sess.param(self.b);
        let y = sess.tape.matmul(x, w);
        sess.tape.add_row(y, b)
    }
}

/// Batch normalization with running statistics. Training mode uses batch
/// statistics and updates the running ones; eval mode normalizes with the
/// stored statistics.
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm2d {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, c: usize) -> Self {
        BatchNorm2d {
            gamma: store.add(format!("{name}/gamma"), init::ones(&[c]), true),
            beta: store.add(format!("{name}/beta"), init::zeros(&[c]), true),
            running_mean: store.add(format!("{name}/running_mean"), init::zeros(&[c]), false),
            running_var: store.add(format!("{name}/running_var"), init::ones(&[c]), false),
        }
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<T>, x: Var) -> Var {
        let training = sess.training;
        self.forward_mode(sess, x, training)
    }

    /// Forward with an explicit mode, so frozen submodels can normalize with
    /// running statistics inside a training session.
    pub fn forward_mode<T: Scalar>(&self, sess: &mut Session<T>, x: Var, training: bool) -> Var {
        let gamma = sess.param(self.gamma);
        let beta = sess.param(self.beta);
        if training {
            let eps = T::from_f64(BN_EPS);
            let (y, mean, var) = sess.tape.batch_norm_train(x, gamma, beta, eps);
            let dims = sess.tape.value(x).shape().to_vec();
            let m = (dims[0] * dims[2] * dims[3]) as f64;
            // unbiased variance for the running estimate
            let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
            let mom = T::from_f64(BN_MOMENTUM);
            let one_m = T::from_f64(1.0 - BN_MOMENTUM);
            let c = mean.len();
            let mut rm = sess.store().value(self.running_mean).clone();
            let mut rv = sess.store().value(self.running_var).clone();
            for ch in 0..c {
                rm[[ch]] = rm[[ch]] * mom + mean[ch] * one_m;
                rv[[ch]] = rv[[ch]] * mom + var[ch] * T::from_f64(unbias) * one_m;
            }
            sess.set_stat(self.running_mean, rm);
            sess.set_stat(self.running_var, rv);
            y
        } else {
            let c = sess.store().value(self.gamma).len();
            let rm = sess.store().value(self.running_mean).clone();
            let rv = sess.store().value(self.running_var).clone();
            let inv_std: Array1<T> = rv
                .iter()
                .map(|&v| T::one() / (v + T::from_f64(BN_EPS)).sqrt())
                .collect();
            let inv_std = sess.constant(inv_std.into_dyn());
            let rm = sess.constant(rm.into_shape_with_order(IxDyn(&[c])).unwrap());
            let scale = sess.tape.mul(gamma, inv_std);
            let shifted = sess.tape.mul(rm, scale);
            let shift = sess.tape.sub(beta, shifted);
            let y = sess.tape.mul_chan(x, scale);
            sess.tape.add_chan(y, shift)
        }
    }
}
