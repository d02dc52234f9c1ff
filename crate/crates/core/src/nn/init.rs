//! Weight initialization. Everything is driven by a caller-supplied seeded
//! RNG so model construction is deterministic.

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::Scalar;

/// Kaiming fan-in normal: `N(0, sqrt(2 / fan_in))`.
pub fn kaiming<T: Scalar, R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize) -> ArrayD<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    normal(rng, shape, std)
}

/// Zero-mean normal with the given standard deviation.
pub fn normal<T: Scalar, R: Rng>(rng: &mut R, shape: &[usize], std: f64) -> ArrayD<T> {
    let n: usize = shape.iter().product();
    let vals: Vec<T> = (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            T::from_f64(z * std)
        })
        .collect();
    ArrayD::from_shape_vec(IxDyn(shape), vals).unwrap()
}

pub fn zeros<T: Scalar>(shape: &[usize]) -> ArrayD<T> {
    ArrayD::zeros(IxDyn(shape))
}

pub fn ones<T: Scalar>(shape: &[usize]) -> ArrayD<T> {
    ArrayD::from_elem(IxDyn(shape), T::one())
}
