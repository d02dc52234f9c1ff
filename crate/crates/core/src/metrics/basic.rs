//! Scalar image-quality metrics on `[0, 1]`-scaled grids.

use ndarray::Array2;

use crate::error::{Error, Result};

fn check_shapes(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "shape mismatch: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Mean absolute difference. With a mask, only masked-in pixels contribute.
pub fn l1(pred: &Array2<f64>, gt: &Array2<f64>, mask: Option<&Array2<bool>>) -> Result<f64> {
    check_shapes(pred, gt)?;
    match mask {
        None => {
            let n = pred.len() as f64;
            Ok(pred
                .iter()
                .zip(gt.iter())
                .map(|(&p, &g)| (p - g).abs())
                .sum::<f64>()
                / n)
        }
        Some(m) => {
            if m.dim() != pred.dim() {
                return Err(Error::invalid("mask shape mismatch"));
            }
            let mut acc = 0.0;
            let mut n = 0usize;
            for ((&p, &g), &keep) in pred.iter().zip(gt.iter()).zip(m.iter()) {
                if keep {
                    acc += (p - g).abs();
                    n += 1;
                }
            }
            if n == 0 {
                return Err(Error::invalid("mask excludes every pixel"));
            }
            Ok(acc / n as f64)
        }
    }
}

fn mse(pred: &Array2<f64>, gt: &Array2<f64>) -> Result<f64> {
    check_shapes(pred, gt)?;
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(gt.iter())
        .map(|(&p, &g)| (p - g).powi(2))
        .sum::<f64>()
        / n)
}

/// Peak signal-to-noise ratio in dB on unit range; identical inputs give
/// the `+inf` sentinel.
pub fn psnr(pred: &Array2<f64>, gt: &Array2<f64>) -> Result<f64> {
    let m = mse(pred, gt)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / m).log10())
}

pub fn rmse(pred: &Array2<f64>, gt: &Array2<f64>) -> Result<f64> {
    Ok(mse(pred, gt)?.sqrt())
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
    fn l1_identical_is_zero_offset_is_offset() {
        let x = rand_grid(0, 8, 8);
        assert_eq!(l1(&x, &x, None).unwrap(), 0.0);
        let y = &x + 0.1;
        assert!((l1(&x, &y, None).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn l1_matches_loop_oracle() {
        for seed in 0..50 {
            let x = rand_grid(seed, 8, 8);
            let y = rand_grid(seed + 1000, 8, 8);
            let mut acc = 0.0;
            for i in 0..8 {
                for j in 0..8 {
                    acc += (x[[i, j]] - y[[i, j]]).abs();
                }
            }
            let oracle = acc / 64.0;
            assert!((l1(&x, &y, None).unwrap() - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn l1_mask_restricts_the_mean() {
        let x = Array2::zeros((2, 2));
        let mut y = Array2::zeros((2, 2));
        y[[0, 0]] = 1.0;
        y[[0, 1]] = 0.5;
        let mut m = Array2::from_elem((2, 2), false);
        m[[0, 0]] = true;
        assert_eq!(l1(&x, &y, Some(&m)).unwrap(), 1.0);
    }

    #[test]
    fn psnr_rmse_formula_cases() {
        let x = rand_grid(3, 8, 8).mapv(|v| v.min(0.9));
        let y = &x + 0.1;
        assert!((psnr(&x, &y).unwrap() - 20.0).abs() < 1e-9);
        assert!((rmse(&x, &y).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
        assert_eq!(rmse(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn psnr_rmse_match_loop_oracle() {
        for seed in 0..50 {
            let x = rand_grid(seed, 8, 8);
            let y = rand_grid(seed + 500, 8, 8);
            let mut acc = 0.0;
            for i in 0..8 {
                for j in 0..8 {
                    acc += (x[[i, j]] - y[[i, j]]).powi(2);
                }
            }
            let m = acc / 64.0;
            assert!((psnr(&x, &y).unwrap() - 10.0 * (1.0 / m).log10()).abs() < 1e-9);
            assert!((rmse(&x, &y).unwrap() - m.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn psnr_decreases_with_noise_level() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let clean = rand_grid(9, 16, 16);
        let mut prev = f64::INFINITY;
        for (k, std) in [0.01, 0.05, 0.2].iter().enumerate() {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(k as u64);
            let normal = Normal::new(0.0, *std).unwrap();
            let noisy = clean.mapv(|v| v + normal.sample(&mut rng));
            let p = psnr(&noisy, &clean).unwrap();
            assert!(p < prev, "psnr {p} not below {prev} at std {std}");
            prev = p;
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let x = Array2::<f64>::zeros((4, 4));
        let y = Array2::<f64>::zeros((4, 5));
        assert!(matches!(l1(&x, &y, None), Err(Error::InvalidInput(_))));
        assert!(matches!(psnr(&x, &y), Err(Error::InvalidInput(_))));
    }
}
