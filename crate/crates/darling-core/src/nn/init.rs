//! Weight initialization. All sampling happens in `f64` and is cast to the
//! target scalar, so `f32` and `f64` models built from the same seed share
//! the same underlying draw sequence.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;

/// Xavier/Glorot uniform for a `fan_in x fan_out` weight matrix.
pub fn xavier_uniform<F: Scalar, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Array2<F> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| {
        F::from_f64(rng.random_range(-limit..limit))
    })
}

/// Gaussian with the given standard deviation (embeddings, queries).
pub fn normal<F: Scalar, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Array2<F> {
    Array2::from_shape_fn((rows, cols), |_| {
        let z: f64 = StandardNormal.sample(rng);
        F::from_f64(z * std)
    })
}

pub fn zeros<F: Scalar>(rows: usize, cols: usize) -> Array2<F> {
    Array2::zeros((rows, cols))
}

pub fn ones<F: Scalar>(rows: usize, cols: usize) -> Array2<F> {
    Array2::from_elem((rows, cols), F::one())
}
