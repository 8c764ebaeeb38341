mod support;

use cropcomp::*;
use support::{naive_topk, oracle_compress, OracleParams};

fn seed7() -> FixtureF64 {
    synthesize(&SynthSpec::random(7, 2, 2, 8, 8, 6)).unwrap()
}

#[test]
fn seed7_matches_oracle() {
    let fx = seed7();
    let cfg = CompressionConfig::with_ratio(0.25).unwrap();
    let got = compress_image(&fx.thumb_scores, &fx.crop_local_scores, &fx.layout, &cfg).unwrap();
    let crops: Vec<Vec<f64>> = fx.crop_local_scores.iter().map(|g| g.values().to_vec()).collect();
    let want = oracle_compress(
        fx.thumb_scores.values(),
        8,
        8,
        &crops,
        2,
        2,
        &OracleParams { ratio: 0.25, tau: 10.0, alpha: 0.5, epsilon: 1e-8 },
    );
    assert_eq!(got.thumbnail.retained, want.thumbnail);
    for j in 0..4 {
        assert_eq!(got.crops[j].retained, want.crops[j]);
    }
    assert_eq!(got.thumbnail.retained.len(), 16);
    assert_eq!(got.total_retained(), 16 + 64);
}

#[test]
fn alpha_endpoints_select_by_one_source() {
    let fx = seed7();
    let base = CompressionConfig::with_ratio(0.3).unwrap();
    let up = bilinear_upsample(&fx.thumb_scores, 16, 16).unwrap();

    let local_only = compress_image(&fx.thumb_scores, &fx.crop_local_scores, &fx.layout, &CompressionConfig { alpha: 0.0, ..base.clone() }).unwrap();
    let global_only = compress_image(&fx.thumb_scores, &fx.crop_local_scores, &fx.layout, &CompressionConfig { alpha: 1.0, ..base }).unwrap();
    for j in 0..4 {
        let k = local_only.plan.counts[j];
        assert_eq!(local_only.crops[j].retained, naive_topk(fx.crop_local_scores[j].values(), k));
        let blk = fx.layout.crop_block_of(j).unwrap();
        let sub = up.block(blk.row0, blk.col0, 8, 8).unwrap();
        assert_eq!(global_only.crops[j].retained, naive_topk(sub.values(), k));
    }
}

#[test]
fn sub_maps_reassemble_the_upsampled_grid() {
    for (a, b) in [(2, 2), (1, 3), (4, 1)] {
        let layout = CropLayout::new(a, b, 5, 6).unwrap();
        let thumb = ScoreGrid::new(5, 6, (0..30).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let (fr, fc) = layout.full_dims();
        let up = bilinear_upsample(&thumb, fr, fc).unwrap();
        let mut rebuilt = vec![f64::NAN; fr * fc];
        for j in 0..layout.num_crops() {
            let blk = layout.crop_block_of(j).unwrap();
            let sub = up.block(blk.row0, blk.col0, 5, 6).unwrap();
            for (k, idx) in blk.flat_indices(fc).enumerate() {
                rebuilt[idx] = sub.values()[k];
            }
        }
        assert_eq!(rebuilt, up.values());
    }
}

#[test]
fn score_dominance_per_view() {
    let fx = seed7();
    let cfg = CompressionConfig::with_ratio(0.4).unwrap();
    let res = compress_image(&fx.thumb_scores, &fx.crop_local_scores, &fx.layout, &cfg).unwrap();
    let up = bilinear_upsample(&fx.thumb_scores, 16, 16).unwrap();
    for (j, crop) in res.crops.iter().enumerate() {
        let blk = fx.layout.crop_block_of(j).unwrap();
        let sub = up.block(blk.row0, blk.col0, 8, 8).unwrap();
        let blended = holistic_scores(&sub, &fx.crop_local_scores[j], 0.5).unwrap();
        let v = blended.values();
        let min_kept = crop.retained.iter().map(|&i| v[i]).fold(f64::MAX, f64::min);
        let max_dropped = (0..64).filter(|i| !crop.retained.contains(i)).map(|i| v[i]).fold(f64::MIN, f64::max);
        assert!(min_kept >= max_dropped);
        assert_eq!(crop.retained.len(), res.plan.counts[j]);
    }
}

#[test]
fn scorer_driven_pipeline_in_f32() {
    // Score every view from embeddings instead of using the synthetic grids.
    let fx: Fixture<f32> = synthesize(&SynthSpec::random(11, 2, 2, 6, 6, 8)).unwrap();
    let crop_scores: Vec<ScoreGridF32> = fx
        .crop_tokens
        .iter()
        .map(|m| neg_global_mean_similarity_scores(m, 6, 6).unwrap())
        .collect();
    let cfg = CompressionConfig { scorer: ScorerKind::NegGlobalMeanSim, ..CompressionConfig::with_ratio(0.25).unwrap() };
    let res: SelectionResultF32 = compress_image_mixed(
        &fx.thumb_scores,
        &crop_scores,
        &fx.layout,
        &cfg,
        ScorerKind::ClsAttention,
        ScorerKind::NegGlobalMeanSim,
    )
    .unwrap();
    assert_eq!(res.thumbnail.retained.len(), 9);
    assert_eq!(res.crops.iter().map(|c| c.retained.len()).sum::<usize>(), 36);

    let q: Vec<f32> = (0..8).map(|i| i as f32 * 0.1 - 0.3).collect();
    let cls = cls_attention_scores(&q, &fx.crop_tokens[0], 6, 6).unwrap();
    assert!((cls.sum() - 1.0).abs() < 1e-6);
}

#[test]
fn f32_and_f64_agree_on_counts() {
    let spec = SynthSpec::random(21, 2, 2, 8, 8, 4);
    let a: Fixture<f32> = synthesize(&spec).unwrap();
    let b: Fixture<f64> = synthesize(&spec).unwrap();
    let cfg = CompressionConfig::with_ratio(0.25).unwrap();
    let ra = compress_image(&a.thumb_scores, &a.crop_local_scores, &a.layout, &cfg).unwrap();
    let rb = compress_image(&b.thumb_scores, &b.crop_local_scores, &b.layout, &cfg).unwrap();
    assert_eq!(ra.plan.counts, rb.plan.counts);
    assert_eq!(ra.thumbnail.retained, rb.thumbnail.retained);
}

#[test]
fn video_from_fixture_tokens() {
    let fx = seed7();
    let t = fx.crop_tokens_tensor();
    let v = VideoSequenceF64::from_tensor(&t).unwrap();
    let cfg = CompressionConfig::with_ratio(0.5).unwrap();
    let sel = compress_video(&v, &cfg).unwrap();
    assert_eq!(sel.total_retained(), 128);
    let all = compress_video(&v, &CompressionConfig::with_ratio(1.0).unwrap()).unwrap();
    assert!(all.frames.iter().all(|f| f.retained.len() == 64));
}
