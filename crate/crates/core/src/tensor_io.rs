//! GCT1 tensor container and JSON configuration.
//!
//! Container layout (all integers little-endian):
//!
//! ```text
//! "GCT1" | ndim: u32 | dims: ndim x u32 | payload: product(dims) x f32
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GCT1";

/// Row-major f32 tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Shape(format!("dims must be positive, got {dims:?}")));
        }
        let numel: usize = dims.iter().product();
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn into_parts(self) -> (Vec<usize>, Vec<f32>) {
        (self.dims, self.data)
    }

    /// Serialize to the GCT1 byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Cursor { bytes, pos: 0 };
        if cursor.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, expected \"GCT1\"".into()));
        }
        let ndim = cursor.u32()? as usize;
        if ndim == 0 {
            return Err(Error::Format("ndim must be at least 1".into()));
        }
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let d = cursor.u32()? as usize;
            if d == 0 {
                return Err(Error::Format("zero-length dimension".into()));
            }
            dims.push(d);
        }
        let numel = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format("dims overflow".into()))?;
        let payload = &bytes[cursor.pos..];
        if payload.len() != numel * 4 {
            return Err(Error::Format(format!(
                "payload has {} bytes, dims {dims:?} need {}",
                payload.len(),
                numel * 4
            )));
        }
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at flat index {i}")));
        }
        Ok(Self { dims, data })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format("truncated header".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let bytes = fs::read(path)?;
    Tensor::from_bytes(&bytes)
}

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, t.to_bytes())?;
    Ok(())
}

/// Token scorer used to derive per-view importance grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    #[default]
    ClsAttention,
    NegPatchAttention,
    NegGlobalMeanSim,
}

/// How per-crop richness feeds the budget allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Every crop keeps the preset ratio.
    Uniform,
    /// Region richness is the mean of its top-k token scores.
    TopkMean,
    /// Region richness is its single highest token score.
    SoftmaxMax,
    /// Region richness is the sum of its token scores.
    #[default]
    SoftmaxSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    #[default]
    LargestRemainder,
    Nearest,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressionConfig {
    pub retention_ratio: f64,
    pub tau: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub scorer: ScorerKind,
    pub strategy: Strategy,
    pub rounding: Rounding,
    pub seed: u64,
}

pub const DEFAULT_TAU: f64 = 10.0;
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_EPSILON: f64 = 1e-8;

impl CompressionConfig {
    /// Config with the given retention ratio and every other field at its default.
    pub fn with_ratio(retention_ratio: f64) -> Result<Self> {
        Self {
            retention_ratio,
            tau: DEFAULT_TAU,
            alpha: DEFAULT_ALPHA,
            epsilon: DEFAULT_EPSILON,
            scorer: ScorerKind::default(),
            strategy: Strategy::default(),
            rounding: Rounding::default(),
            seed: 0,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        let r = self.retention_ratio;
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::Config(format!("retention_ratio must be in (0, 1], got {r}")));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must be in [0, 1], got {}", self.alpha)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        Ok(self)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    retention_ratio: Option<f64>,
    tau: Option<f64>,
    alpha: Option<f64>,
    epsilon: Option<f64>,
    scorer: Option<ScorerKind>,
    strategy: Option<Strategy>,
    rounding: Option<Rounding>,
    seed: Option<u64>,
}

/// Parse a JSON config object. Missing optional keys take their defaults;
/// `retention_ratio` is mandatory and unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<CompressionConfig> {
    let raw: RawConfig =
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let retention_ratio = raw
        .retention_ratio
        .ok_or_else(|| Error::Config("missing required key retention_ratio".into()))?;
    CompressionConfig {
        retention_ratio,
        tau: raw.tau.unwrap_or(DEFAULT_TAU),
        alpha: raw.alpha.unwrap_or(DEFAULT_ALPHA),
        epsilon: raw.epsilon.unwrap_or(DEFAULT_EPSILON),
        scorer: raw.scorer.unwrap_or_default(),
        strategy: raw.strategy.unwrap_or_default(),
        rounding: raw.rounding.unwrap_or_default(),
        seed: raw.seed.unwrap_or(0),
    }
    .validated()
}
