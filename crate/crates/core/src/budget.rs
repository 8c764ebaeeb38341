//! Adaptive per-crop retention budgets.
//!
//! Each crop's information richness (aggregated from the thumbnail region it
//! covers) goes through a temperature softmax:
//!
//! ```text
//! s~_j    = (s_j - max_l s_l) / tau
//! sigma_j = exp(s~_j) / (sum_l exp(s~_l) + eps)
//! r_j     = clamp(R * (1 + sigma_j - 1/n), 0, 1)
//! ```
//!
//! and the ratios are then turned into integer token counts whose sum is
//! exactly `round(R * N * n)`.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::layout::CropLayout;
use crate::scalar::{order_invariant_sum, Scalar};
use crate::scoring::ScoreGrid;
use crate::tensor_io::{CompressionConfig, Rounding, Strategy};

/// One richness value per crop (or per frame).
#[derive(Debug, Clone, PartialEq)]
pub struct RichnessVector<T>(Vec<T>);

impl<T: Scalar> RichnessVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Shape("richness vector needs at least one entry".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("richness values must be finite".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self(perm.iter().map(|&p| self.0[p]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetPlan<T> {
    /// Softmax weights, exposed for inspection.
    pub weights: Vec<T>,
    pub ratios: Vec<T>,
    pub counts: Vec<usize>,
    pub total_target: usize,
}

/// `round(ratio * total)`, the retained-token count used everywhere.
pub fn retained_count(ratio: f64, total: usize) -> usize {
    (ratio * total as f64).round() as usize
}

/// Reduce the scores of one region to a single richness value.
pub fn region_richness<T: Scalar>(cells: &[T], strategy: Strategy, ratio: f64) -> T {
    if cells.is_empty() {
        return T::zero();
    }
    match strategy {
        Strategy::SoftmaxSum | Strategy::Uniform => order_invariant_sum(cells),
        Strategy::SoftmaxMax => cells.iter().copied().fold(T::neg_infinity(), T::max),
        Strategy::TopkMean => {
            let k = ((ratio * cells.len() as f64).ceil() as usize).clamp(1, cells.len());
            let mut sorted = cells.to_vec();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
            order_invariant_sum(&sorted[..k]) / T::of_usize(k)
        }
    }
}

/// Per-crop richness as the sum of thumbnail scores over each crop's region.
pub fn crop_richness<T: Scalar>(thumb: &ScoreGrid<T>, layout: &CropLayout) -> Result<RichnessVector<T>> {
    strategy_richness(thumb, layout, Strategy::SoftmaxSum, 1.0)
}

/// Per-crop richness under the aggregation rule of `strategy`.
pub fn strategy_richness<T: Scalar>(
    thumb: &ScoreGrid<T>,
    layout: &CropLayout,
    strategy: Strategy,
    ratio: f64,
) -> Result<RichnessVector<T>> {
    if thumb.dims() != (layout.patch_rows, layout.patch_cols) {
        return Err(Error::Shape(format!(
            "thumbnail grid is {:?}, layout expects {}x{}",
            thumb.dims(),
            layout.patch_rows,
            layout.patch_cols
        )));
    }
    if layout.patch_rows < layout.rows || layout.patch_cols < layout.cols {
        return Err(Error::Shape(format!(
            "{}x{} thumbnail grid cannot cover {}x{} crops",
            layout.patch_rows, layout.patch_cols, layout.rows, layout.cols
        )));
    }
    let values = (0..layout.num_crops())
        .map(|j| {
            let region = layout.crop_region_of(j)?;
            let cells: Vec<T> = region
                .flat_indices(thumb.cols())
                .map(|i| thumb.values()[i])
                .collect();
            Ok(region_richness(&cells, strategy, ratio))
        })
        .collect::<Result<Vec<_>>>()?;
    RichnessVector::new(values)
}

/// Temperature softmax with an epsilon-guarded denominator.
pub fn importance_weights<T: Scalar>(s: &RichnessVector<T>, tau: T, epsilon: T) -> Vec<T> {
    let max = s.values().iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = s.values().iter().map(|&v| ((v - max) / tau).exp()).collect();
    let denom = order_invariant_sum(&exps) + epsilon;
    exps.into_iter().map(|e| e / denom).collect()
}

/// Shift the preset ratio by each weight's deviation from the mean weight.
pub fn allocate_ratios<T: Scalar>(weights: &[T], ratio: T) -> Vec<T> {
    let mean = T::one() / T::of_usize(weights.len());
    weights
        .iter()
        .map(|&w| (ratio * (T::one() + (w - mean))).max(T::zero()).min(T::one()))
        .collect()
}

/// Turn per-view ratios into integer counts in `[0, capacity]` summing to `target`.
///
/// Starting counts are `floor(r * capacity)` (or the nearest integer). Any deficit
/// goes one token at a time to the views with the largest `quota - count`, ties to
/// the lower index; views at capacity are skipped and the pass repeats until the
/// target is met. An excess is removed in the mirrored order.
pub fn apportion<T: Scalar>(
    ratios: &[T],
    capacity: usize,
    target: usize,
    rounding: Rounding,
) -> Result<Vec<usize>> {
    if target > capacity * ratios.len() {
        return Err(Error::Allocation(format!(
            "target {target} exceeds {} views of {capacity} tokens",
            ratios.len()
        )));
    }
    let cap = T::of_usize(capacity);
    let quotas: Vec<T> = ratios
        .iter()
        .map(|&r| (r * cap).max(T::zero()).min(cap))
        .collect();
    let mut counts: Vec<usize> = quotas
        .iter()
        .map(|&q| {
            let k = match rounding {
                Rounding::LargestRemainder => q.floor(),
                Rounding::Nearest => q.round(),
            };
            k.to_f64_lossy().max(0.0) as usize
        })
        .map(|k| k.min(capacity))
        .collect();

    let remainder = |j: usize, counts: &[usize]| quotas[j] - T::of_usize(counts[j]);
    loop {
        let assigned: usize = counts.iter().sum();
        match assigned.cmp(&target) {
            Ordering::Equal => break,
            Ordering::Less => {
                let mut open: Vec<usize> = (0..counts.len()).filter(|&j| counts[j] < capacity).collect();
                if open.is_empty() {
                    return Err(Error::Allocation("no view can absorb the deficit".into()));
                }
                open.sort_by(|&a, &b| {
                    remainder(b, &counts)
                        .partial_cmp(&remainder(a, &counts))
                        .unwrap_or(Ordering::Equal)
                        .then(a.cmp(&b))
                });
                for &j in open.iter().take(target - assigned) {
                    counts[j] += 1;
                }
            }
            Ordering::Greater => {
                let mut open: Vec<usize> = (0..counts.len()).filter(|&j| counts[j] > 0).collect();
                open.sort_by(|&a, &b| {
                    remainder(a, &counts)
                        .partial_cmp(&remainder(b, &counts))
                        .unwrap_or(Ordering::Equal)
                        .then(b.cmp(&a))
                });
                for &j in open.iter().take(assigned - target) {
                    counts[j] -= 1;
                }
            }
        }
    }
    Ok(counts)
}

/// Full budget plan for `s.len()` views of `tokens_per_view` tokens each.
///
/// `s` must already be aggregated under `cfg.strategy` (see [`strategy_richness`]);
/// the uniform strategy ignores it.
pub fn plan_budgets<T: Scalar>(
    s: &RichnessVector<T>,
    tokens_per_view: usize,
    cfg: &CompressionConfig,
) -> Result<BudgetPlan<T>> {
    let n = s.len();
    let ratio = T::of(cfg.retention_ratio);
    let (weights, ratios) = match cfg.strategy {
        Strategy::Uniform => (vec![T::one() / T::of_usize(n); n], vec![ratio; n]),
        _ => {
            let weights = importance_weights(s, T::of(cfg.tau), T::of(cfg.epsilon));
            let ratios = allocate_ratios(&weights, ratio);
            (weights, ratios)
        }
    };
    let total_target = retained_count(cfg.retention_ratio, tokens_per_view * n);
    let counts = apportion(&ratios, tokens_per_view, total_target, cfg.rounding)?;
    debug_assert_eq!(counts.iter().sum::<usize>(), total_target);
    Ok(BudgetPlan {
        weights,
        ratios,
        counts,
        total_target,
    })
}
