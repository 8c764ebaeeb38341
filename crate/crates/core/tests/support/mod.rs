//! Straight-line reference implementations used as test oracles. Nothing here
//! calls into the library's numeric code.

#![allow(dead_code)]

/// Indices of the `k` largest values, ties to the lower index, ascending.
pub fn naive_topk(values: &[f64], k: usize) -> Vec<usize> {
    let mut taken = vec![false; values.len()];
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for i in 0..values.len() {
            if taken[i] {
                continue;
            }
            match best {
                None => best = Some(i),
                Some(b) if values[i] > values[b] => best = Some(i),
                _ => {}
            }
        }
        taken[best.unwrap()] = true;
    }
    (0..values.len()).filter(|&i| taken[i]).collect()
}

/// Align-corners bilinear value at output cell `(y, x)` via the four-term formula.
pub fn bilinear_cell(src: &[f64], h: usize, w: usize, dh: usize, dw: usize, y: usize, x: usize) -> f64 {
    let sy = if h == 1 || dh == 1 { 0.0 } else { y as f64 * (h - 1) as f64 / (dh - 1) as f64 };
    let sx = if w == 1 || dw == 1 { 0.0 } else { x as f64 * (w - 1) as f64 / (dw - 1) as f64 };
    let y0 = sy.floor() as usize;
    let x0 = sx.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = sy - y0 as f64;
    let fx = sx - x0 as f64;
    let at = |r: usize, c: usize| src[r * w + c];
    (1.0 - fy) * (1.0 - fx) * at(y0, x0)
        + (1.0 - fy) * fx * at(y0, x1)
        + fy * (1.0 - fx) * at(y1, x0)
        + fy * fx * at(y1, x1)
}

pub struct OracleParams {
    pub ratio: f64,
    pub tau: f64,
    pub alpha: f64,
    pub epsilon: f64,
}

pub struct OracleOutput {
    pub thumbnail: Vec<usize>,
    pub counts: Vec<usize>,
    pub crops: Vec<Vec<usize>>,
}

/// Thumbnail top-k, region richness, softmax budgets, largest-remainder counts,
/// bilinear guidance, blend, per-crop top-k; all written out longhand.
pub fn oracle_compress(
    thumb: &[f64],
    h: usize,
    w: usize,
    crops: &[Vec<f64>],
    a: usize,
    b: usize,
    p: &OracleParams,
) -> OracleOutput {
    let n_tok = h * w;
    let n = a * b;

    let thumbnail = naive_topk(thumb, (p.ratio * n_tok as f64).round() as usize);

    let mut richness = vec![0.0; n];
    for (j, rich) in richness.iter_mut().enumerate() {
        let (rr, cc) = (j / b, j % b);
        for y in rr * h / a..(rr + 1) * h / a {
            for x in cc * w / b..(cc + 1) * w / b {
                *rich += thumb[y * w + x];
            }
        }
    }
    let top = richness.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = richness.iter().map(|s| ((s - top) / p.tau).exp()).collect();
    let denom: f64 = e.iter().sum::<f64>() + p.epsilon;
    let ratios: Vec<f64> = e
        .iter()
        .map(|v| (p.ratio * (1.0 + v / denom - 1.0 / n as f64)).clamp(0.0, 1.0))
        .collect();

    let target = (p.ratio * (n_tok * n) as f64).round() as usize;
    let quota: Vec<f64> = ratios.iter().map(|r| r * n_tok as f64).collect();
    let mut counts: Vec<usize> = quota.iter().map(|q| q.floor() as usize).collect();
    while counts.iter().sum::<usize>() < target {
        let deficit = target - counts.iter().sum::<usize>();
        let mut open: Vec<usize> = (0..n).filter(|&j| counts[j] < n_tok).collect();
        open.sort_by(|&x, &y| {
            let rx = quota[x] - counts[x] as f64;
            let ry = quota[y] - counts[y] as f64;
            ry.partial_cmp(&rx).unwrap().then(x.cmp(&y))
        });
        for &j in open.iter().take(deficit) {
            counts[j] += 1;
        }
    }

    let (fh, fw) = (a * h, b * w);
    let mut out_crops = Vec::with_capacity(n);
    for (j, crop) in crops.iter().enumerate().take(n) {
        let (rr, cc) = (j / b, j % b);
        let mut blended = Vec::with_capacity(n_tok);
        for y in 0..h {
            for x in 0..w {
                let g = bilinear_cell(thumb, h, w, fh, fw, rr * h + y, cc * w + x);
                blended.push(p.alpha * g + (1.0 - p.alpha) * crop[y * w + x]);
            }
        }
        out_crops.push(naive_topk(&blended, counts[j]));
    }

    OracleOutput {
        thumbnail,
        counts,
        crops: out_crops,
    }
}
