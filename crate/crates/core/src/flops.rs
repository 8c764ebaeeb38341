//! Per-layer transformer cost model over visual tokens only.
//!
//! Prefill: `8 T d^2 + 4 T^2 d + 6 T d m`; decode (per generated token, `T`
//! cached): `8 d^2 + 4 T d + 6 T d m`. Totals are multiplied by the layer count.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModelDims {
    /// Visual token count (cached context length when decoding).
    pub tokens: u64,
    pub hidden: u64,
    pub ffn: u64,
    pub layers: u64,
}

impl ModelDims {
    pub fn new(tokens: u64, hidden: u64, ffn: u64, layers: u64) -> Result<Self> {
        if hidden == 0 || ffn == 0 || layers == 0 {
            return Err(Error::Config("hidden, ffn and layers must be positive".into()));
        }
        Ok(Self {
            tokens,
            hidden,
            ffn,
            layers,
        })
    }
}

/// Prefill FLOPs for a real-valued token count.
pub fn prefill_flops_at<T: Scalar>(dims: &ModelDims, tokens: T) -> T {
    let d = T::of(dims.hidden as f64);
    let m = T::of(dims.ffn as f64);
    let l = T::of(dims.layers as f64);
    l * (T::of(8.0) * tokens * d * d + T::of(4.0) * tokens * tokens * d + T::of(6.0) * tokens * d * m)
}

pub fn prefill_flops<T: Scalar>(dims: &ModelDims) -> T {
    prefill_flops_at(dims, T::of(dims.tokens as f64))
}

pub fn decode_flops<T: Scalar>(dims: &ModelDims) -> T {
    let t = T::of(dims.tokens as f64);
    let d = T::of(dims.hidden as f64);
    let m = T::of(dims.ffn as f64);
    let l = T::of(dims.layers as f64);
    l * (T::of(8.0) * d * d + T::of(4.0) * t * d + T::of(6.0) * t * d * m)
}

/// Closed-form prefill reduction `1 - R (8d + 4RT + 6m) / (8d + 4T + 6m)`.
pub fn reduction_ratio<T: Scalar>(dims: &ModelDims, ratio: T) -> T {
    let t = T::of(dims.tokens as f64);
    let d = T::of(dims.hidden as f64);
    let m = T::of(dims.ffn as f64);
    let eight = T::of(8.0);
    let four = T::of(4.0);
    let six = T::of(6.0);
    T::one() - ratio * (eight * d + four * ratio * t + six * m) / (eight * d + four * t + six * m)
}
