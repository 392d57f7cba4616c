//! Floating-point abstraction for the numeric core.
//!
//! The model, losses, and optimizer are generic over [`Scalar`] so the same
//! code runs in `f32` for training throughput and in `f64` for the
//! finite-difference gradient checks and metric oracles.

use ndarray::{LinalgScalar, ScalarOperand};

use crate::error::{Error, Result};

pub trait Scalar:
    num_traits::Float
    + LinalgScalar
    + ScalarOperand
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Dtype tag recorded in checkpoints.
    const DTYPE: &'static str;

    fn from_f64(x: f64) -> Self;
    fn into_f64(self) -> f64;

    /// Append the little-endian bytes of `values` to `out`.
    fn write_le(values: &[Self], out: &mut Vec<u8>);

    /// Decode little-endian bytes previously written by [`Scalar::write_le`].
    fn read_le(bytes: &[u8]) -> Result<Vec<Self>>;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";

    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn into_f64(self) -> f64 {
        self as f64
    }

    fn write_le(values: &[Self], out: &mut Vec<u8>) {
        out.reserve(values.len() * 4);
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn read_le(bytes: &[u8]) -> Result<Vec<Self>> {
        if bytes.len() % 4 != 0 {
            return Err(Error::integrity("f32 payload length not a multiple of 4"));
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";

    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }

    #[inline]
    fn into_f64(self) -> f64 {
        self
    }

    fn write_le(values: &[Self], out: &mut Vec<u8>) {
        out.reserve(values.len() * 8);
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn read_le(bytes: &[u8]) -> Result<Vec<Self>> {
        if bytes.len() % 8 != 0 {
            return Err(Error::integrity("f64 payload length not a multiple of 8"));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect())
    }
}
