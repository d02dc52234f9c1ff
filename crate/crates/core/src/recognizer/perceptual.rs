//! Frozen-recognizer perceptual feature extraction, including a
//! differentiable normal-from-depth so gradients reach the predicted depth.

use ndarray::{ArrayD, IxDyn};

use crate::autodiff::{ConvSpec, Scalar, Tape, Var};
use crate::metrics::PerceptualExtractor;
use crate::nn::Session;

use super::model::LdnfNet;

/// Central-difference surface normals of a `[n, 1, S, S]` unit-range depth
/// image, on the tape. Matches the eager normal computation on fully valid
/// maps: depth is interpreted on `[0, 255]` (hence the 255 factor) and
/// borders replicate. Output is `[n, 3, S, S]` unit vectors.
pub fn normal_from_depth_var<T: Scalar>(tape: &mut Tape<T>, depth01: Var, gain: f64) -> Var {
    let shape = tape.value(depth01).shape().to_vec();
    assert_eq!(shape.len(), 4, "normal_from_depth_var expects [n,1,S,S]");
    assert_eq!(shape[1], 1);

    let padded = tape.replicate_pad(depth01, 1);
    let kernel = |vals: [[f64; 3]; 3]| {
        let mut w = Vec::with_capacity(9);
        for row in vals {
            for v in row {
                w.push(T::from_f64(v));
            }
        }
        ArrayD::from_shape_vec(IxDyn(&[1, 1, 3, 3]), w).unwrap()
    };
    let spec = ConvSpec::square(3, 1, 0, 1);
    let kx = tape.leaf(kernel([[0.0, 0.0, 0.0], [-0.5, 0.0, 0.5], [0.0, 0.0, 0.0]]));
    let ky = tape.leaf(kernel([[0.0, -0.5, 0.0], [0.0, 0.0, 0.0], [0.0, 0.5, 0.0]]));
    let ddx = tape.conv2d(padded, kx, spec);
    let ddy = tape.conv2d(padded, ky, spec);

    // depth difference in [0,255] units times the gain
    let scale = T::from_f64(-gain * 255.0);
    let nx = tape.mul_scalar(ddx, scale);
    let ny = tape.mul_scalar(ddy, scale);
    let nx2 = tape.mul(nx, nx);
    let ny2 = tape.mul(ny, ny);
    let s = tape.add(nx2, ny2);
    let norm2 = tape.add_scalar(s, T::one());
    let inv = tape.pow_scalar(norm2, T::from_f64(-0.5));
    let ux = tape.mul(nx, inv);
    let uy = tape.mul(ny, inv);
    tape.concat(&[ux, uy, inv], 1)
}

/// A frozen recognizer used as the perceptual feature map. Its parameters
/// live (non-trainable) in the same store as the model being trained, so a
/// single session covers the whole graph.
pub struct LdnfPerceptual {
    pub net: LdnfNet,
}

impl<T: Scalar> PerceptualExtractor<T> for LdnfPerceptual {
    fn embed(&self, sess: &mut Session<T>, depth01: Var) -> Var {
        // unit range to model range
        let two = sess.tape.mul_scalar(depth01, T::from_f64(2.0));
        let depth = sess.tape.add_scalar(two, T::from_f64(-1.0));
        let normal = normal_from_depth_var(&mut sess.tape, depth01, self.net.cfg.normal_gain);
        let out = self
            .net
            .forward(sess, depth, normal, false)
            .expect("frozen recognizer forward");
        out.f_final
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth::{compute_normal_map, DepthMap};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tape_normals_match_eager_computation() {
        let s = 16;
        let gain = 0.05;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values = Array2::from_shape_fn((s, s), |_| rng.gen_range(0.0..255.0f32));
        let d = DepthMap {
            values: values.clone(),
            mask: Array2::from_elem((s, s), true),
        };
        let eager = compute_normal_map(&d, gain);

        let mut tape = Tape::<f64>::new();
        let d01 = ArrayD::from_shape_fn(IxDyn(&[1, 1, s, s]), |ix| {
            values[[ix[2], ix[3]]] as f64 / 255.0
        });
        let dv = tape.leaf(d01);
        let nv = normal_from_depth_var(&mut tape, dv, gain);
        let got = tape.value(nv);
        for i in 0..s {
            for j in 0..s {
                for k in 0..3 {
                    let e = eager.data[[i, j, k]];
                    let g = got[[0, k, i, j]];
                    assert!((e - g).abs() < 1e-9, "({i},{j},{k}): {e} vs {g}");
                }
            }
        }
    }

    #[test]
    fn normal_gradients_match_finite_differences() {
        let s = 6;
        let gain = 0.1;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let base = ArrayD::from_shape_fn(IxDyn(&[1, 1, s, s]), |_| rng.gen_range(0.1..0.9));

        let f = |x: &ArrayD<f64>| -> f64 {
            let mut tape = Tape::<f64>::new();
            let dv = tape.leaf(x.clone());
            let nv = normal_from_depth_var(&mut tape, dv, gain);
            let sq = tape.mul(nv, nv);
            let m = tape.mean_all(sq);
            tape.value(m)[[0]]
        };

        let mut tape = Tape::<f64>::new();
        let dv = tape.leaf(base.clone());
        let nv = normal_from_depth_var(&mut tape, dv, gain);
        let sq = tape.mul(nv, nv);
        let m = tape.mean_all(sq);
        let mut grads = tape.backward(m);
        let g = grads.take(dv).unwrap();

        let eps = 1e-6;
        for idx in 0..base.len() {
            let mut xp = base.clone();
            let mut xm = base.clone();
            xp.as_slice_mut().unwrap()[idx] += eps;
            xm.as_slice_mut().unwrap()[idx] -= eps;
            let fd = (f(&xp) - f(&xm)) / (2.0 * eps);
            let an = g.as_slice().unwrap()[idx];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-4);
            assert!(rel < 1e-4, "index {idx}: fd {fd} vs {an}");
        }
    }
}
