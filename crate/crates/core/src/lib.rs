//! Global-to-local visual token compression for dynamic-cropping
//! vision-language models.
//!
//! A high-resolution image arrives as a low-resolution thumbnail plus a grid of
//! crops. The thumbnail's token saliency decides how many tokens each crop may
//! keep, and, upsampled to full resolution, is blended with each crop's own
//! saliency to decide which tokens those are. The same scheme applies to video
//! frames. Everything here operates on score and embedding tensors; no model
//! is run.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! name the common instantiations.

pub mod budget;
pub mod diagnostics;
pub mod error;
pub mod flops;
pub mod layout;
pub mod scalar;
pub mod scoring;
pub mod selector;
pub mod tensor_io;
pub mod video;

pub use budget::{
    allocate_ratios, apportion, crop_richness, importance_weights, plan_budgets, region_richness,
    retained_count, strategy_richness, BudgetPlan, RichnessVector,
};
pub use diagnostics::{
    mask_pgm_bytes, probe_bias, render_mask, synthesize, BiasReport, Blob, Fixture, FixtureRng,
    ProbeScorer, SynthSpec,
};
pub use error::{Error, Result};
pub use flops::{decode_flops, prefill_flops, prefill_flops_at, reduction_ratio, ModelDims};
pub use layout::{parse_grid_spec, select_grid, CropLayout, Region};
pub use scalar::Scalar;
pub use scoring::{
    cls_attention_scores, cosine, neg_global_mean_similarity_scores, neg_patch_attention_scores,
    ScoreGrid, TokenMatrix,
};
pub use selector::{
    bilinear_upsample, compress_image, compress_image_mixed, compress_thumbnail, holistic_scores,
    topk_select, CropSelection, SelectionResult, ViewSelection,
};
pub use tensor_io::{
    parse_config, read_tensor, write_tensor, CompressionConfig, Rounding, ScorerKind, Strategy,
    Tensor,
};
pub use video::{
    compress_video, global_pool, video_global_scores, video_local_scores, FrameSelection,
    VideoSelection, VideoSequence,
};

pub type ScoreGridF32 = ScoreGrid<f32>;
pub type ScoreGridF64 = ScoreGrid<f64>;
pub type TokenMatrixF32 = TokenMatrix<f32>;
pub type TokenMatrixF64 = TokenMatrix<f64>;
pub type SelectionResultF32 = SelectionResult<f32>;
pub type SelectionResultF64 = SelectionResult<f64>;
pub type VideoSequenceF32 = VideoSequence<f32>;
pub type VideoSequenceF64 = VideoSequence<f64>;
pub type VideoSelectionF64 = VideoSelection<f64>;
pub type BudgetPlanF64 = BudgetPlan<f64>;
pub type FixtureF64 = Fixture<f64>;
