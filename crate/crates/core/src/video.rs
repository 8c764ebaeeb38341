//! Frame-wise compression of video token sequences.
//!
//! Frames play the role of crops: each token is scored by its negative cosine
//! similarity to the pooled whole-video vector (global) and to the pooled frame
//! vector (local). Summed global scores drive the per-frame budgets.

use serde::Serialize;

use crate::budget::{plan_budgets, region_richness, BudgetPlan, RichnessVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scoring::{cosine, ScoreGrid, TokenMatrix};
use crate::selector::{holistic_scores, topk_select};
use crate::tensor_io::{CompressionConfig, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence<T> {
    frames: Vec<TokenMatrix<T>>,
}

impl<T: Scalar> VideoSequence<T> {
    pub fn new(frames: Vec<TokenMatrix<T>>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Shape("video needs at least one frame".into()))?;
        let (n, d) = (first.num_tokens(), first.dim());
        if let Some(j) = frames.iter().position(|f| f.num_tokens() != n || f.dim() != d) {
            return Err(Error::Shape(format!("frame {j} does not match frame 0's {n}x{d} shape")));
        }
        Ok(Self { frames })
    }

    /// Build from a rank-3 `[T, N, D]` tensor.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let [frames, n, d] = *t.dims() else {
            return Err(Error::Shape(format!("video tensor must be rank 3, got dims {:?}", t.dims())));
        };
        let data: Vec<T> = t.data().iter().map(|&v| T::of(v as f64)).collect();
        let frames = data
            .chunks_exact(n * d)
            .take(frames)
            .map(|c| TokenMatrix::new(n, d, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(frames)
    }

    pub fn frames(&self) -> &[TokenMatrix<T>] {
        &self.frames
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.frames[0].num_tokens()
    }

    pub fn dim(&self) -> usize {
        self.frames[0].dim()
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            frames: perm.iter().map(|&p| self.frames[p].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameSelection<T> {
    pub index: usize,
    pub ratio: T,
    pub retained: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoSelection<T> {
    pub frames: Vec<FrameSelection<T>>,
    #[serde(skip)]
    pub plan: BudgetPlan<T>,
}

impl<T: Scalar> VideoSelection<T> {
    pub fn total_retained(&self) -> usize {
        self.frames.iter().map(|f| f.retained.len()).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("selection serializes")
    }
}

/// Mean over all tokens of all frames.
pub fn global_pool<T: Scalar>(v: &VideoSequence<T>) -> Vec<T> {
    let mut acc = vec![T::zero(); v.dim()];
    for frame in v.frames() {
        for row in frame.rows() {
            for (a, &x) in acc.iter_mut().zip(row) {
                *a = *a + x;
            }
        }
    }
    let count = T::of_usize(v.num_frames() * v.tokens_per_frame());
    acc.into_iter().map(|a| a / count).collect()
}

fn neg_cos_grid<T: Scalar>(frame: &TokenMatrix<T>, reference: &[T]) -> ScoreGrid<T> {
    let values = frame.rows().map(|x| -cosine(x, reference)).collect();
    ScoreGrid::new(1, frame.num_tokens(), values).expect("frame has at least one token")
}

/// Per-frame `1 x N` grids of `-cos(token, pooled video vector)`.
pub fn video_global_scores<T: Scalar>(v: &VideoSequence<T>) -> Vec<ScoreGrid<T>> {
    let g = global_pool(v);
    v.frames().iter().map(|f| neg_cos_grid(f, &g)).collect()
}

/// Per-frame `1 x N` grids of `-cos(token, pooled frame vector)`.
pub fn video_local_scores<T: Scalar>(v: &VideoSequence<T>) -> Vec<ScoreGrid<T>> {
    v.frames().iter().map(|f| neg_cos_grid(f, &f.mean_row())).collect()
}

pub fn compress_video<T: Scalar>(v: &VideoSequence<T>, cfg: &CompressionConfig) -> Result<VideoSelection<T>> {
    let global = video_global_scores(v);
    let local = video_local_scores(v);
    let n = v.tokens_per_frame();

    let richness = RichnessVector::new(
        global
            .iter()
            .map(|g| region_richness(g.values(), cfg.strategy, cfg.retention_ratio))
            .collect(),
    )
    .map_err(Error::in_stage("budget"))?;
    let plan = plan_budgets(&richness, n, cfg).map_err(Error::in_stage("budget"))?;

    let alpha = T::of(cfg.alpha);
    let frames = global
        .iter()
        .zip(&local)
        .enumerate()
        .map(|(j, (g, l))| {
            let blended = holistic_scores(g, l, alpha).map_err(Error::in_stage("holistic"))?;
            let retained = topk_select(&blended, plan.counts[j]).map_err(Error::in_stage("select"))?;
            Ok(FrameSelection {
                index: j,
                ratio: plan.ratios[j],
                retained,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VideoSelection { frames, plan })
}
