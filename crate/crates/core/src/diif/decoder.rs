//! Decoding function: a five-layer MLP whose trunk (hidden widths 256, 128,
//! 64, 32 with ReLU) is shared across pyramid levels; the final affine plus
//! Tanh runs once on the summed trunk outputs.

use rand::Rng;

use crate::autodiff::{Scalar, Var};
use crate::nn::{Linear, ParamStore, Session};

pub const HIDDEN_WIDTHS: [usize; 4] = [256, 128, 64, 32];

pub struct DiifDecoder {
    pub trunk: Vec<Linear>,
    pub head: Linear,
    pub input_width: usize,
}

impl DiifDecoder {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        input_width: usize,
    ) -> Self {
        let mut trunk = Vec::with_capacity(HIDDEN_WIDTHS.len());
        let mut prev = input_width;
        for (k, &width) in HIDDEN_WIDTHS.iter().enumerate() {
            trunk.push(Linear::new(store, rng, &format!("{name}/fc{k}"), prev, width));
            prev = width;
        }
        let head = Linear::new(store, rng, &format!("{name}/out"), prev, 1);
        DiifDecoder {
            trunk,
            head,
            input_width,
        }
    }

    /// Shared trunk: `[n, input_width]` to `[n, 32]`.
    pub fn trunk_forward<T: Scalar>(&self, sess: &mut Session<T>, x: Var) -> Var {
        let mut h = x;
        for layer in &self.trunk {
            h = layer.forward(sess, h);
            h = sess.tape.relu(h);
        }
        h
    }

    /// Final affine plus Tanh: `[n, 32]` to `[n, 1]` in `[-1, 1]`.
    pub fn head_forward<T: Scalar>(&self, sess: &mut Session<T>, x: Var) -> Var {
        let y = self.head.forward(sess, x);
        sess.tape.tanh(y)
    }
}
