//! Structural similarity on unit-range grids: an `f64` reference
//! implementation and a tape-based differentiable version used in training.
//!
//! Both use a Gaussian window (default 11x11, sigma 1.5) with valid-only
//! placement and constants C1 = (0.01 L)^2, C2 = (0.03 L)^2 at dynamic range
//! L = 1. On inputs smaller than 11 the window shrinks to the largest odd
//! size that fits; sigma stays 1.5.

use ndarray::{Array2, IxDyn};

use crate::autodiff::{ConvSpec, Scalar, Tape, Var};
use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Largest usable odd window for an `h` x `w` input.
pub fn window_size(h: usize, w: usize) -> usize {
    let m = SSIM_WINDOW.min(h).min(w);
    if m % 2 == 0 {
        m - 1
    } else {
        m
    }
}

/// Normalized 2D Gaussian window.
pub fn gaussian_window(k: usize, sigma: f64) -> Array2<f64> {
    let c = (k as f64 - 1.0) / 2.0;
    let mut win = Array2::from_shape_fn((k, k), |(i, j)| {
        let di = i as f64 - c;
        let dj = j as f64 - c;
        (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp()
    });
    let sum: f64 = win.sum();
    win.mapv_inplace(|v| v / sum);
    win
}

/// Mean local SSIM over all valid window placements.
pub fn ssim(x: &Array2<f64>, y: &Array2<f64>) -> Result<f64> {
    let (h, w) = x.dim();
    if x.dim() != y.dim() {
        return Err(Error::invalid(format!(
            "shape mismatch: {:?} vs {:?}",
            x.dim(),
            y.dim()
        )));
    }
    if h == 0 || w == 0 {
        return Err(Error::invalid("ssim: empty input"));
    }
    let k = window_size(h, w);
    let win = gaussian_window(k, SSIM_SIGMA);
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut acc = 0.0;
    for oi in 0..oh {
        for oj in 0..ow {
            let mut mx = 0.0;
            let mut my = 0.0;
            for a in 0..k {
                for b in 0..k {
                    mx += win[[a, b]] * x[[oi + a, oj + b]];
                    my += win[[a, b]] * y[[oi + a, oj + b]];
                }
            }
            let mut vx = 0.0;
            let mut vy = 0.0;
            let mut cov = 0.0;
            for a in 0..k {
                for b in 0..k {
                    let dx = x[[oi + a, oj + b]] - mx;
                    let dy = y[[oi + a, oj + b]] - my;
                    vx += win[[a, b]] * dx * dx;
                    vy += win[[a, b]] * dy * dy;
                    cov += win[[a, b]] * dx * dy;
                }
            }
            acc += ((2.0 * mx * my + C1) * (2.0 * cov + C2))
                / ((mx * mx + my * my + C1) * (vx + vy + C2));
        }
    }
    Ok(acc / (oh * ow) as f64)
}

/// Differentiable SSIM between two `[1, 1, H, W]` tape values. Uses the
/// convolutional identities mu = G*x and sigma^2 = G*(x^2) - mu^2, which
/// match the windowed definition exactly.
pub fn ssim_var<T: Scalar>(tape: &mut Tape<T>, x: Var, y: Var) -> Var {
    let dims = tape.value(x).shape().to_vec();
    assert_eq!(dims.len(), 4, "ssim_var expects [1,1,H,W]");
    let (h, w) = (dims[2], dims[3]);
    let k = window_size(h, w);
    let win = gaussian_window(k, SSIM_SIGMA).mapv(T::from_f64);
    let wv = tape.leaf(
        win.into_shape_with_order(IxDyn(&[1, 1, k, k]))
            .unwrap(),
    );
    let spec = ConvSpec {
        kh: k,
        kw: k,
        stride: 1,
        ph: 0,
        pw: 0,
        groups: 1,
    };
    let mu_x = tape.conv2d(x, wv, spec);
    let mu_y = tape.conv2d(y, wv, spec);
    let xx = tape.mul(x, x);
    let yy = tape.mul(y, y);
    let xy = tape.mul(x, y);
    let e_xx = tape.conv2d(xx, wv, spec);
    let e_yy = tape.conv2d(yy, wv, spec);
    let e_xy = tape.conv2d(xy, wv, spec);
    let mu_x2 = tape.mul(mu_x, mu_x);
    let mu_y2 = tape.mul(mu_y, mu_y);
    let mu_xy = tape.mul(mu_x, mu_y);
    let var_x = tape.sub(e_xx, mu_x2);
    let var_y = tape.sub(e_yy, mu_y2);
    let cov = tape.sub(e_xy, mu_xy);

    let c1 = T::from_f64(C1);
    let c2 = T::from_f64(C2);
    let two = T::from_f64(2.0);
    let t = tape.mul_scalar(mu_xy, two);
    let num1 = tape.add_scalar(t, c1);
    let t = tape.mul_scalar(cov, two);
    let num2 = tape.add_scalar(t, c2);
    let num = tape.mul(num1, num2);
    let t = tape.add(mu_x2, mu_y2);
    let den1 = tape.add_scalar(t, c1);
    let t = tape.add(var_x, var_y);
    let den2 = tape.add_scalar(t, c2);
    let den = tape.mul(den1, den2);
    let map = tape.div(num, den);
    tape.mean_all(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_grid(seed: u64, h: usize, w: usize) -> Array2<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((h, w), |_| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn self_similarity_is_one() {
        for seed in 0..5 {
            let x = rand_grid(seed, 16, 16);
            assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_to_1e12() {
        for seed in 0..5 {
            let x = rand_grid(seed, 13, 17);
            let y = rand_grid(seed + 100, 13, 17);
            let a = ssim(&x, &y).unwrap();
            let b = ssim(&y, &x).unwrap();
            assert!((a - b).abs() < 1e-12);
            assert!((-1.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn constant_pair_matches_closed_form() {
        let (a, b) = (0.3, 0.7);
        let x = Array2::from_elem((16, 16), a);
        let y = Array2::from_elem((16, 16), b);
        let expect = (2.0 * a * b + C1) / (a * a + b * b + C1);
        assert!((ssim(&x, &y).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn tape_version_matches_reference() {
        for seed in 0..10 {
            let x = rand_grid(seed, 12, 12);
            let y = rand_grid(seed + 50, 12, 12);
            let reference = ssim(&x, &y).unwrap();
            let mut tape = Tape::<f64>::new();
            let xv = tape.leaf(x.into_shape_with_order(IxDyn(&[1, 1, 12, 12])).unwrap());
            let yv = tape.leaf(y.into_shape_with_order(IxDyn(&[1, 1, 12, 12])).unwrap());
            let s = ssim_var(&mut tape, xv, yv);
            let got = tape.value(s)[[0]];
            assert!(
                (got - reference).abs() < 1e-9,
                "seed {seed}: {got} vs {reference}"
            );
        }
    }

    #[test]
    fn small_input_uses_shrunk_window() {
        assert_eq!(window_size(8, 8), 7);
        assert_eq!(window_size(11, 20), 11);
        assert_eq!(window_size(4, 128), 3);
        let x = rand_grid(1, 8, 8);
        let y = rand_grid(2, 8, 8);
        let s = ssim(&x, &y).unwrap();
        assert!((-1.0..=1.0).contains(&s));
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let x = Array2::<f64>::zeros((8, 8));
        let y = Array2::<f64>::zeros((8, 9));
        assert!(matches!(ssim(&x, &y), Err(Error::InvalidInput(_))));
    }
}
