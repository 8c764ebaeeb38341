//! Thumbnail-guided token selection for one image: the thumbnail keeps its own
//! top-k, and every crop ranks its tokens by a blend of its local scores and the
//! matching sub-map of the upsampled thumbnail scores.

use std::cmp::Ordering;

use serde::Serialize;

use crate::budget::{plan_budgets, retained_count, strategy_richness, BudgetPlan};
use crate::error::{Error, Result};
use crate::layout::CropLayout;
use crate::scalar::Scalar;
use crate::scoring::ScoreGrid;
use crate::tensor_io::{CompressionConfig, ScorerKind};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewSelection<T> {
    pub ratio: T,
    pub retained: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CropSelection<T> {
    pub index: usize,
    pub ratio: T,
    pub retained: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult<T> {
    pub thumbnail: ViewSelection<T>,
    pub crops: Vec<CropSelection<T>>,
    #[serde(skip)]
    pub plan: BudgetPlan<T>,
}

impl<T: Scalar> SelectionResult<T> {
    pub fn total_retained(&self) -> usize {
        self.thumbnail.retained.len() + self.crops.iter().map(|c| c.retained.len()).sum::<usize>()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("selection serializes")
    }
}

/// Align-corners bilinear upsampling.
///
/// Output cell `(y, x)` samples the source at `(y * (h-1) / (H-1), x * (w-1) / (W-1))`;
/// a source or target dimension of 1 replicates the single row or column.
pub fn bilinear_upsample<T: Scalar>(src: &ScoreGrid<T>, dst_rows: usize, dst_cols: usize) -> Result<ScoreGrid<T>> {
    let (h, w) = src.dims();
    if dst_rows < h || dst_cols < w {
        return Err(Error::Shape(format!(
            "cannot downscale {h}x{w} to {dst_rows}x{dst_cols}"
        )));
    }
    if (dst_rows, dst_cols) == (h, w) {
        return Ok(src.clone());
    }
    let rows: Vec<(usize, usize, T)> = (0..dst_rows).map(|y| sample_axis(y, h, dst_rows)).collect();
    let cols: Vec<(usize, usize, T)> = (0..dst_cols).map(|x| sample_axis(x, w, dst_cols)).collect();
    let mut out = Vec::with_capacity(dst_rows * dst_cols);
    for &(y0, y1, fy) in &rows {
        for &(x0, x1, fx) in &cols {
            let top = T::lerp(src.get(y0, x0), src.get(y0, x1), fx);
            let bottom = T::lerp(src.get(y1, x0), src.get(y1, x1), fx);
            out.push(T::lerp(top, bottom, fy));
        }
    }
    ScoreGrid::new(dst_rows, dst_cols, out)
}

fn sample_axis<T: Scalar>(i: usize, src: usize, dst: usize) -> (usize, usize, T) {
    if src == 1 || dst == 1 {
        return (0, 0, T::zero());
    }
    let pos = T::of_usize(i * (src - 1)) / T::of_usize(dst - 1);
    let i0 = (pos.floor().to_f64_lossy() as usize).min(src - 1);
    let i1 = (i0 + 1).min(src - 1);
    (i0, i1, pos - T::of_usize(i0))
}

/// `alpha * global + (1 - alpha) * local`, cell by cell.
pub fn holistic_scores<T: Scalar>(global_sub: &ScoreGrid<T>, local: &ScoreGrid<T>, alpha: T) -> Result<ScoreGrid<T>> {
    if global_sub.dims() != local.dims() {
        return Err(Error::Shape(format!(
            "global sub-map {:?} vs local grid {:?}",
            global_sub.dims(),
            local.dims()
        )));
    }
    if !(alpha >= T::zero() && alpha <= T::one()) {
        return Err(Error::Range(format!("alpha must be in [0, 1], got {alpha}")));
    }
    let values = global_sub
        .values()
        .iter()
        .zip(local.values())
        .map(|(&g, &l)| alpha * g + (T::one() - alpha) * l)
        .collect();
    ScoreGrid::new(local.rows(), local.cols(), values)
}

/// Indices of the `k` highest scores (ties to the lower index), sorted ascending.
pub fn topk_select<T: Scalar>(scores: &ScoreGrid<T>, k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(Error::Range(format!("k = {k} exceeds {} tokens", scores.len())));
    }
    let v = scores.values();
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    Ok(order)
}

pub fn compress_thumbnail<T: Scalar>(thumb_scores: &ScoreGrid<T>, ratio: f64) -> Result<ViewSelection<T>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(format!("retention ratio must be in (0, 1], got {ratio}")));
    }
    let k = retained_count(ratio, thumb_scores.len());
    Ok(ViewSelection {
        ratio: T::of(ratio),
        retained: topk_select(thumb_scores, k)?,
    })
}

/// Run the full image pipeline with the configured scorer on both views.
pub fn compress_image<T: Scalar>(
    thumb_scores: &ScoreGrid<T>,
    crop_local_scores: &[ScoreGrid<T>],
    layout: &CropLayout,
    cfg: &CompressionConfig,
) -> Result<SelectionResult<T>> {
    compress_image_mixed(thumb_scores, crop_local_scores, layout, cfg, cfg.scorer, cfg.scorer)
}

/// As [`compress_image`], for thumbnail and crop scores produced by possibly
/// different scorers. When the two kinds differ, both grids of every crop are
/// min-max normalized before blending.
pub fn compress_image_mixed<T: Scalar>(
    thumb_scores: &ScoreGrid<T>,
    crop_local_scores: &[ScoreGrid<T>],
    layout: &CropLayout,
    cfg: &CompressionConfig,
    global_kind: ScorerKind,
    local_kind: ScorerKind,
) -> Result<SelectionResult<T>> {
    let view_dims = (layout.patch_rows, layout.patch_cols);
    if thumb_scores.dims() != view_dims {
        return Err(Error::Shape(format!(
            "thumbnail grid {:?} does not match layout {view_dims:?}",
            thumb_scores.dims()
        )))
        .map_err(Error::in_stage("input"));
    }
    if crop_local_scores.len() != layout.num_crops() {
        return Err(Error::Shape(format!(
            "layout {}x{} needs {} crop grids, got {}",
            layout.rows,
            layout.cols,
            layout.num_crops(),
            crop_local_scores.len()
        )))
        .map_err(Error::in_stage("input"));
    }
    if let Some((j, g)) = crop_local_scores.iter().enumerate().find(|(_, g)| g.dims() != view_dims) {
        return Err(Error::Shape(format!("crop {j} grid {:?} does not match layout {view_dims:?}", g.dims())))
            .map_err(Error::in_stage("input"));
    }

    let ratio = cfg.retention_ratio;
    let thumbnail = compress_thumbnail(thumb_scores, ratio).map_err(Error::in_stage("thumbnail"))?;

    let plan = strategy_richness(thumb_scores, layout, cfg.strategy, ratio)
        .and_then(|s| plan_budgets(&s, layout.tokens_per_view(), cfg))
        .map_err(Error::in_stage("budget"))?;

    let (full_rows, full_cols) = layout.full_dims();
    let upsampled = bilinear_upsample(thumb_scores, full_rows, full_cols).map_err(Error::in_stage("upsample"))?;

    let normalize = global_kind != local_kind;
    let alpha = T::of(cfg.alpha);
    let crops = crop_local_scores
        .iter()
        .enumerate()
        .map(|(j, local)| {
            let block = layout.crop_block_of(j)?;
            let global_sub = upsampled.block(block.row0, block.col0, block.height(), block.width())?;
            let blended = if normalize {
                holistic_scores(&global_sub.min_max_normalized(), &local.min_max_normalized(), alpha)
            } else {
                holistic_scores(&global_sub, local, alpha)
            }
            .map_err(Error::in_stage("holistic"))?;
            let retained = topk_select(&blended, plan.counts[j]).map_err(Error::in_stage("select"))?;
            Ok(CropSelection {
                index: j,
                ratio: plan.ratios[j],
                retained,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SelectionResult { thumbnail, crops, plan })
}
