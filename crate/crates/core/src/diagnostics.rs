//! Synthetic fixtures, the positional-bias probe, and retention-mask rendering.

use std::fs;
use std::path::Path;

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::budget::{plan_budgets, retained_count, strategy_richness};
use crate::error::{Error, Result};
use crate::layout::CropLayout;
use crate::scalar::Scalar;
use crate::scoring::{ScoreGrid, TokenMatrix};
use crate::selector::topk_select;
use crate::tensor_io::{CompressionConfig, Tensor};

/// Seeded uniform source with a fixed, language-neutral definition.
#[derive(Debug, Clone)]
pub struct FixtureRng(SplitMix64);

impl FixtureRng {
    pub fn new(seed: u64) -> Self {
        Self(SplitMix64::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

/// Gaussian saliency blob in thumbnail cell coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Blob {
    pub cy: f64,
    pub cx: f64,
    pub sigma: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    /// Patch rows per view.
    pub h: usize,
    /// Patch cols per view.
    pub w: usize,
    /// Crop rows.
    pub a: usize,
    /// Crop cols.
    pub b: usize,
    /// Embedding width.
    pub dim: usize,
    #[serde(default)]
    pub centers: Vec<Blob>,
    #[serde(default)]
    pub noise_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SynthSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn layout(&self) -> Result<CropLayout> {
        CropLayout::new(self.a, self.b, self.h, self.w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.h == 0 || self.w == 0 || self.a == 0 || self.b == 0 || self.dim == 0 {
            return Err(Error::Config("synth dims must be positive".into()));
        }
        if self.centers.iter().any(|c| !(c.sigma > 0.0 && c.amplitude > 0.0)) {
            return Err(Error::Config("blob sigma and amplitude must be positive".into()));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config("noise_scale must be non-negative".into()));
        }
        Ok(())
    }

    /// A spec with one to three randomly placed blobs and light noise, all
    /// derived from `seed`.
    pub fn random(seed: u64, a: usize, b: usize, h: usize, w: usize, dim: usize) -> Self {
        let mut rng = FixtureRng::new(seed ^ 0x5EED_F1C7_0000_0000);
        let count = 1 + (rng.next_u64() % 3) as usize;
        let span = h.max(w) as f64;
        let centers = (0..count)
            .map(|_| Blob {
                cy: rng.uniform(0.0, h as f64),
                cx: rng.uniform(0.0, w as f64),
                sigma: rng.uniform(0.5, (span / 2.0).max(0.6)),
                amplitude: rng.uniform(0.5, 2.0),
            })
            .collect();
        Self {
            h,
            w,
            a,
            b,
            dim,
            centers,
            noise_scale: 0.05,
            seed,
        }
    }
}

/// A synthesized scene: thumbnail scores plus per-crop embeddings and scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture<T> {
    pub layout: CropLayout,
    pub thumb_scores: ScoreGrid<T>,
    pub crop_tokens: Vec<TokenMatrix<T>>,
    pub crop_local_scores: Vec<ScoreGrid<T>>,
}

impl<T: Scalar> Fixture<T> {
    /// The scene turned by 180 degrees: crop order reversed, every grid and
    /// token sequence reversed, so crop `j` becomes crop `n - 1 - j`.
    pub fn rotated_half_turn(&self) -> Self {
        Self {
            layout: self.layout,
            thumb_scores: self.thumb_scores.rotated_half_turn(),
            crop_tokens: self
                .crop_tokens
                .iter()
                .rev()
                .map(|m| {
                    let rows: Vec<Vec<T>> = m.rows().rev().map(<[T]>::to_vec).collect();
                    TokenMatrix::from_rows(&rows).expect("same shape")
                })
                .collect(),
            crop_local_scores: self.crop_local_scores.iter().rev().map(ScoreGrid::rotated_half_turn).collect(),
        }
    }

    pub fn thumb_tensor(&self) -> Tensor {
        self.thumb_scores.to_tensor()
    }

    /// Local scores stacked as `[n, h, w]`.
    pub fn crop_scores_tensor(&self) -> Tensor {
        let (h, w) = self.thumb_scores.dims();
        let data = self
            .crop_local_scores
            .iter()
            .flat_map(|g| g.values().iter().map(|v| v.to_f64_lossy() as f32))
            .collect();
        Tensor::new(vec![self.crop_local_scores.len(), h, w], data).expect("consistent shape")
    }

    /// Embeddings stacked as `[n, N, D]`.
    pub fn crop_tokens_tensor(&self) -> Tensor {
        let (n, d) = (self.crop_tokens[0].num_tokens(), self.crop_tokens[0].dim());
        let data = self
            .crop_tokens
            .iter()
            .flat_map(|m| m.data().iter().map(|v| v.to_f64_lossy() as f32))
            .collect();
        Tensor::new(vec![self.crop_tokens.len(), n, d], data).expect("consistent shape")
    }
}

fn blob_field(centers: &[Blob], y: f64, x: f64) -> f64 {
    centers
        .iter()
        .map(|c| {
            let d2 = (x - c.cx).powi(2) + (y - c.cy).powi(2);
            c.amplitude * (-d2 / (2.0 * c.sigma * c.sigma)).exp()
        })
        .sum()
}

fn normalized<T: Scalar>(rows: usize, cols: usize, raw: Vec<f64>) -> ScoreGrid<T> {
    let total: f64 = raw.iter().sum();
    let values = if total > 0.0 {
        raw.iter().map(|&v| T::of(v / total)).collect()
    } else {
        vec![T::of(1.0 / (rows * cols) as f64); rows * cols]
    };
    ScoreGrid::new(rows, cols, values).expect("finite synthetic scores")
}

/// Deterministically build a fixture from `spec`.
///
/// Draw order: thumbnail noise, full-resolution noise, embedding direction,
/// embedding base values.
pub fn synthesize<T: Scalar>(spec: &SynthSpec) -> Result<Fixture<T>> {
    spec.validate()?;
    let layout = spec.layout()?;
    let (h, w) = (spec.h, spec.w);
    let mut rng = FixtureRng::new(spec.seed);

    let thumb_raw: Vec<f64> = (0..h * w)
        .map(|i| blob_field(&spec.centers, (i / w) as f64, (i % w) as f64) + spec.noise_scale * rng.next_f64())
        .collect();
    let thumb_scores = normalized(h, w, thumb_raw);

    // Full-resolution cell centers mapped back into thumbnail coordinates.
    let (full_rows, full_cols) = layout.full_dims();
    let full: Vec<f64> = (0..full_rows * full_cols)
        .map(|i| {
            let y = ((i / full_cols) as f64 + 0.5) / spec.a as f64 - 0.5;
            let x = ((i % full_cols) as f64 + 0.5) / spec.b as f64 - 0.5;
            blob_field(&spec.centers, y, x) + spec.noise_scale * rng.next_f64()
        })
        .collect();

    let mut direction: Vec<f64> = (0..spec.dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let dnorm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if dnorm > 0.0 {
        direction.iter_mut().for_each(|v| *v /= dnorm);
    }

    let mut crop_local_scores = Vec::with_capacity(layout.num_crops());
    let mut crop_tokens = Vec::with_capacity(layout.num_crops());
    for j in 0..layout.num_crops() {
        let block = layout.crop_block_of(j)?;
        let raw: Vec<f64> = block.flat_indices(full_cols).map(|i| full[i]).collect();
        let peak = raw.iter().copied().fold(0.0f64, f64::max);
        let mut data = Vec::with_capacity(raw.len() * spec.dim);
        for &sal in &raw {
            let weight = if peak > 0.0 { 4.0 * sal / peak } else { 0.0 };
            for &dir in &direction {
                data.push(T::of(rng.uniform(-1.0, 1.0) + weight * dir));
            }
        }
        crop_tokens.push(TokenMatrix::new(raw.len(), spec.dim, data)?);
        crop_local_scores.push(normalized(h, w, raw));
    }

    Ok(Fixture {
        layout,
        thumb_scores,
        crop_tokens,
        crop_local_scores,
    })
}

/// Which allocator the bias probe exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbeScorer {
    /// Thumbnail-guided budgets.
    #[serde(rename = "guided", alias = "globalcom2")]
    Guided,
    /// Surrogate for LLM-attention pruning: every token scores its sequence
    /// position and the top `round(R * N * n)` positions are kept.
    #[serde(rename = "position_weighted")]
    PositionWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasReport {
    pub budgets_forward: Vec<usize>,
    pub budgets_reversed: Vec<usize>,
    pub bias_score: f64,
}

/// Per-crop counts when the global top-k over position scores is taken, with
/// crops presented in the order given.
fn positional_budgets(num_crops: usize, tokens_per_crop: usize, ratio: f64) -> Result<Vec<usize>> {
    let total = num_crops * tokens_per_crop;
    let scores = ScoreGrid::new(1, total, (1..=total).map(|p| p as f64).collect())?;
    let kept = topk_select(&scores, retained_count(ratio, total))?;
    let mut counts = vec![0; num_crops];
    for i in kept {
        counts[i / tokens_per_crop] += 1;
    }
    Ok(counts)
}

/// Allocate budgets with crops in the given order and in reverse order, then
/// compare the budgets each crop's content received.
pub fn probe_bias<T: Scalar>(kind: ProbeScorer, fixture: &Fixture<T>, cfg: &CompressionConfig) -> Result<BiasReport> {
    let layout = &fixture.layout;
    let n = layout.num_crops();
    let tokens = layout.tokens_per_view();
    let (forward, reversed) = match kind {
        ProbeScorer::Guided => {
            let s = strategy_richness(&fixture.thumb_scores, layout, cfg.strategy, cfg.retention_ratio)?;
            let rev: Vec<usize> = (0..n).rev().collect();
            (
                plan_budgets(&s, tokens, cfg)?.counts,
                plan_budgets(&s.permuted(&rev), tokens, cfg)?.counts,
            )
        }
        ProbeScorer::PositionWeighted => (
            positional_budgets(n, tokens, cfg.retention_ratio)?,
            positional_budgets(n, tokens, cfg.retention_ratio)?,
        ),
    };
    let total: usize = forward.iter().sum();
    let distance: usize = forward
        .iter()
        .zip(reversed.iter().rev())
        .map(|(&f, &r)| f.abs_diff(r))
        .sum();
    let bias_score = if total == 0 { 0.0 } else { distance as f64 / total as f64 };
    Ok(BiasReport {
        budgets_forward: forward,
        budgets_reversed: reversed,
        bias_score,
    })
}

/// Binary PGM bytes: retained cells 255, discarded cells 64.
pub fn mask_pgm_bytes(rows: usize, cols: usize, retained: &[usize]) -> Result<Vec<u8>> {
    let n = rows * cols;
    let mut payload = vec![64u8; n];
    for &i in retained {
        if i >= n {
            return Err(Error::Index(format!("retained index {i} outside {rows}x{cols} grid")));
        }
        payload[i] = 255;
    }
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn render_mask<T: Scalar>(scores: &ScoreGrid<T>, retained: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let bytes = mask_pgm_bytes(scores.rows(), scores.cols(), retained)?;
    fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_io::Strategy;

    fn spec(h: usize, w: usize, a: usize, b: usize, centers: Vec<Blob>, noise: f64, seed: u64) -> SynthSpec {
        SynthSpec { h, w, a, b, dim: 4, centers, noise_scale: noise, seed }
    }

    #[test]
    fn rng_matches_reference_splitmix() {
        // Reference outputs of splitmix64 seeded with 1234567.
        let mut rng = FixtureRng::new(1234567);
        let expected = [
            6457827717110365317u64,
            3203168211198807973,
            9817491932198370423,
            4593380528125082431,
            16408922859458223821,
        ];
        for e in expected {
            assert_eq!(rng.next_u64(), e);
        }
    }

    #[test]
    fn single_centered_blob_peaks_at_center() {
        let s = spec(9, 9, 1, 1, vec![Blob { cy: 4.0, cx: 4.0, sigma: 1.5, amplitude: 1.0 }], 0.0, 3);
        let f = synthesize::<f64>(&s).unwrap();
        let vals = f.thumb_scores.values();
        let arg = (0..vals.len()).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
        assert_eq!(arg, 4 * 9 + 4);
        assert!((f.thumb_scores.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_scene_is_uniform() {
        let f = synthesize::<f64>(&spec(3, 5, 2, 2, vec![], 0.0, 0)).unwrap();
        assert!(f.thumb_scores.values().iter().all(|&v| v == 1.0 / 15.0));
        assert!(f.crop_local_scores.iter().all(|g| g.values().iter().all(|&v| v == 1.0 / 15.0)));
    }

    #[test]
    fn synthesis_is_deterministic() {
        let s = SynthSpec::random(7, 2, 2, 8, 8, 6);
        let a = synthesize::<f32>(&s).unwrap();
        let b = synthesize::<f32>(&s).unwrap();
        assert_eq!(a.crop_tokens_tensor().to_bytes(), b.crop_tokens_tensor().to_bytes());
        assert_eq!(a.thumb_tensor().to_bytes(), b.thumb_tensor().to_bytes());
        assert_eq!(a, b);
        let c = synthesize::<f32>(&SynthSpec { seed: 8, ..s }).unwrap();
        assert_ne!(a.crop_tokens_tensor().to_bytes(), c.crop_tokens_tensor().to_bytes());
    }

    #[test]
    fn synth_spec_json() {
        let s = SynthSpec::from_json(r#"{"h":4,"w":4,"a":2,"b":2,"dim":3,"centers":[{"cy":1,"cx":1,"sigma":1,"amplitude":2}]}"#).unwrap();
        assert_eq!(s.centers.len(), 1);
        assert!(SynthSpec::from_json(r#"{"h":4,"w":4,"a":2,"b":2,"dim":3,"bogus":1}"#).is_err());
        assert!(SynthSpec::from_json(r#"{"h":4,"w":4,"a":2,"b":2,"dim":3,"centers":[{"cy":1,"cx":1,"sigma":0,"amplitude":2}]}"#).is_err());
    }

    #[test]
    fn guided_probe_has_no_bias() {
        for seed in 0..20 {
            let f = synthesize::<f64>(&SynthSpec::random(seed, 2, 2, 8, 8, 4)).unwrap();
            let cfg = CompressionConfig::with_ratio(0.25).unwrap();
            let rep = probe_bias(ProbeScorer::Guided, &f, &cfg).unwrap();
            assert_eq!(rep.bias_score, 0.0, "seed {seed}: {rep:?}");
        }
    }

    #[test]
    fn positional_probe_skews_late() {
        // One salient crop at position 0; n = 4, N = 4, R = 0.25 keeps the last 4 positions.
        let s = spec(2, 2, 2, 2, vec![Blob { cy: 0.0, cx: 0.0, sigma: 0.4, amplitude: 5.0 }], 0.0, 1);
        let f = synthesize::<f64>(&s).unwrap();
        let cfg = CompressionConfig::with_ratio(0.25).unwrap();
        let rep = probe_bias(ProbeScorer::PositionWeighted, &f, &cfg).unwrap();
        assert_eq!(rep.budgets_forward, vec![0, 0, 0, 4]);
        assert_eq!(rep.budgets_reversed, vec![0, 0, 0, 4]);
        assert_eq!(rep.bias_score, 2.0);
        // The guided allocator follows content instead.
        let big = spec(8, 8, 2, 2, vec![Blob { cy: 1.0, cx: 1.0, sigma: 1.0, amplitude: 5.0 }], 0.0, 1);
        let f = synthesize::<f64>(&big).unwrap();
        let sharp = CompressionConfig { tau: 0.1, ..cfg };
        let guided = probe_bias(ProbeScorer::Guided, &f, &sharp).unwrap();
        assert!(guided.budgets_forward[0] > guided.budgets_forward[3], "{guided:?}");
    }

    #[test]
    fn positional_probe_uniform_two_crops() {
        // n = 2, N = 2, R = 0.5: positions 3 and 4 win -> (0, 2) both ways.
        let f = synthesize::<f64>(&spec(1, 2, 1, 2, vec![], 0.0, 0)).unwrap();
        let cfg = CompressionConfig { strategy: Strategy::Uniform, ..CompressionConfig::with_ratio(0.5).unwrap() };
        let rep = probe_bias(ProbeScorer::PositionWeighted, &f, &cfg).unwrap();
        assert_eq!(rep.budgets_forward, vec![0, 2]);
        assert_eq!(rep.bias_score, 2.0);
    }

    #[test]
    fn pgm_bytes() {
        assert_eq!(mask_pgm_bytes(2, 2, &[0, 3]).unwrap(), b"P5\n2 2\n255\n\xff\x40\x40\xff".to_vec());
        assert_eq!(&mask_pgm_bytes(2, 2, &[0, 1, 2, 3]).unwrap()[11..], &[255; 4]);
        assert_eq!(&mask_pgm_bytes(2, 2, &[]).unwrap()[11..], &[64; 4]);
        assert_eq!(&mask_pgm_bytes(2, 3, &[]).unwrap()[..11], b"P5\n3 2\n255\n");
        assert!(matches!(mask_pgm_bytes(2, 2, &[4]), Err(Error::Index(_))));
    }

    #[test]
    fn render_writes_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        let g = ScoreGrid::filled(2, 2, 0.25f64).unwrap();
        render_mask(&g, &[1], &p).unwrap();
        assert_eq!(fs::read(&p).unwrap().len(), 15);
    }
}
