//! Thumbnail + crops decomposition of a high-resolution image.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid templates as `(rows, cols)`.
pub const GRID_TEMPLATES: [(usize, usize); 7] =
    [(2, 2), (1, 2), (1, 3), (1, 4), (2, 1), (3, 1), (4, 1)];

/// `rows x cols` crops, each encoded as a `patch_rows x patch_cols` token grid.
/// The thumbnail shares the per-crop patch grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CropLayout {
    pub rows: usize,
    pub cols: usize,
    pub patch_rows: usize,
    pub patch_cols: usize,
}

/// Half-open rectangle of patch cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Region {
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

impl Region {
    pub fn height(&self) -> usize {
        self.row1 - self.row0
    }

    pub fn width(&self) -> usize {
        self.col1 - self.col0
    }

    pub fn len(&self) -> usize {
        self.height() * self.width()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row0..self.row1).contains(&row) && (self.col0..self.col1).contains(&col)
    }

    /// Row-major flat indices of the cells inside the region, for a grid `width` wide.
    pub fn flat_indices(&self, width: usize) -> impl Iterator<Item = usize> + '_ {
        (self.row0..self.row1).flat_map(move |r| (self.col0..self.col1).map(move |c| r * width + c))
    }
}

impl CropLayout {
    pub fn new(rows: usize, cols: usize, patch_rows: usize, patch_cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || patch_rows == 0 || patch_cols == 0 {
            return Err(Error::Shape(format!(
                "layout dims must be positive, got {rows}x{cols} crops of {patch_rows}x{patch_cols}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            patch_rows,
            patch_cols,
        })
    }

    pub fn num_crops(&self) -> usize {
        self.rows * self.cols
    }

    /// Tokens per view.
    pub fn tokens_per_view(&self) -> usize {
        self.patch_rows * self.patch_cols
    }

    /// Full-resolution grid dims: `(rows * patch_rows, cols * patch_cols)`.
    pub fn full_dims(&self) -> (usize, usize) {
        (self.rows * self.patch_rows, self.cols * self.patch_cols)
    }

    /// `(row, col)` of crop `j` in row-major order.
    pub fn crop_position(&self, j: usize) -> (usize, usize) {
        (j / self.cols, j % self.cols)
    }

    /// Thumbnail sub-rectangle that corresponds to crop `j`, via a floor-division
    /// partition of the thumbnail grid.
    pub fn crop_region_of(&self, j: usize) -> Result<Region> {
        if j >= self.num_crops() {
            return Err(Error::Index(format!(
                "crop {j} out of range for {} crops",
                self.num_crops()
            )));
        }
        let (r, c) = self.crop_position(j);
        let (h, w) = (self.patch_rows, self.patch_cols);
        Ok(Region {
            row0: r * h / self.rows,
            row1: (r + 1) * h / self.rows,
            col0: c * w / self.cols,
            col1: (c + 1) * w / self.cols,
        })
    }

    /// Block of the full-resolution grid occupied by crop `j`.
    pub fn crop_block_of(&self, j: usize) -> Result<Region> {
        if j >= self.num_crops() {
            return Err(Error::Index(format!(
                "crop {j} out of range for {} crops",
                self.num_crops()
            )));
        }
        let (r, c) = self.crop_position(j);
        Ok(Region {
            row0: r * self.patch_rows,
            row1: (r + 1) * self.patch_rows,
            col0: c * self.patch_cols,
            col1: (c + 1) * self.patch_cols,
        })
    }
}

/// Pick the grid template for a `width x height` image with crops of `base` pixels.
///
/// The winner maximizes effective resolution (the aspect-preserving fitted area,
/// capped at the original area), then minimizes wasted canvas area, then prefers
/// fewer crops, then fewer rows. The returned layout's patch grid is set to
/// `patch x patch`.
pub fn select_grid(width: u32, height: u32, base: u32, patch: usize) -> Result<CropLayout> {
    if width == 0 || height == 0 || base == 0 {
        return Err(Error::Shape("image and base sizes must be positive".into()));
    }
    let (w, h, s) = (width as f64, height as f64, base as f64);
    let original = w * h;
    let key = |&(a, b): &(usize, usize)| {
        let (cw, ch) = (s * b as f64, s * a as f64);
        let scale = (cw / w).min(ch / h);
        let fitted = (w * scale) * (h * scale);
        let effective = fitted.min(original);
        let wasted = cw * ch - effective;
        (effective, wasted, a * b, a)
    };
    let best = GRID_TEMPLATES
        .iter()
        .min_by(|x, y| {
            let (ex, wx, nx, ax) = key(x);
            let (ey, wy, ny, ay) = key(y);
            ey.total_cmp(&ex)
                .then(wx.total_cmp(&wy))
                .then(nx.cmp(&ny))
                .then(ax.cmp(&ay))
        })
        .copied()
        .expect("template set is non-empty");
    CropLayout::new(best.0, best.1, patch, patch)
}

/// Parse a `"<rows>x<cols>"` string such as `"2x2"`.
pub fn parse_grid_spec(text: &str) -> Result<(usize, usize)> {
    let (a, b) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::Config(format!("expected <rows>x<cols>, got {text:?}")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| Error::Config(format!("bad grid component {s:?} in {text:?}")))
    };
    Ok((parse(a)?, parse(b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn select_grid_examples() {
        let l = select_grid(672, 672, 336, 24).unwrap();
        assert_eq!((l.rows, l.cols), (2, 2));
        let l = select_grid(1344, 336, 336, 24).unwrap();
        assert_eq!((l.rows, l.cols), (1, 4));
        let l = select_grid(1000, 700, 336, 24).unwrap();
        assert_eq!((l.rows, l.cols), (2, 2));
        let l = select_grid(336, 1344, 336, 24).unwrap();
        assert_eq!((l.rows, l.cols), (4, 1));
    }

    #[test]
    fn select_grid_brute_force_1000x700() {
        // Independent enumeration with integer-rounded fitted sizes.
        let scored: Vec<_> = GRID_TEMPLATES
            .iter()
            .map(|&(a, b)| {
                let (cw, ch) = (336.0 * b as f64, 336.0 * a as f64);
                let s = f64::min(cw / 1000.0, ch / 700.0);
                let eff = ((1000.0 * s).floor() * (700.0 * s).floor()).min(700_000.0);
                ((a, b), eff)
            })
            .collect();
        let best = scored.iter().max_by(|x, y| x.1.total_cmp(&y.1)).unwrap();
        assert_eq!(best.0, (2, 2));
    }

    #[test]
    fn even_split_regions() {
        let l = CropLayout::new(2, 2, 24, 24).unwrap();
        assert_eq!(
            l.crop_region_of(0).unwrap(),
            Region { row0: 0, col0: 0, row1: 12, col1: 12 }
        );
        assert_eq!(
            l.crop_region_of(3).unwrap(),
            Region { row0: 12, col0: 12, row1: 24, col1: 24 }
        );
    }

    #[test]
    fn uneven_split_region() {
        let l = CropLayout::new(3, 1, 10, 10).unwrap();
        assert_eq!(
            l.crop_region_of(1).unwrap(),
            Region { row0: 3, col0: 0, row1: 6, col1: 10 }
        );
    }

    #[test]
    fn out_of_range_crop() {
        let l = CropLayout::new(2, 2, 4, 4).unwrap();
        assert!(matches!(l.crop_region_of(4), Err(Error::Index(_))));
        assert!(matches!(l.crop_block_of(4), Err(Error::Index(_))));
    }

    #[test]
    fn grid_spec_parsing() {
        assert_eq!(parse_grid_spec("2x3").unwrap(), (2, 3));
        assert!(parse_grid_spec("2by3").is_err());
        assert!(parse_grid_spec("0x3").is_err());
    }

    proptest! {
        #[test]
        fn regions_partition_thumbnail(a in 1usize..7, b in 1usize..7, h in 1usize..20, w in 1usize..20) {
            let l = CropLayout::new(a, b, h, w).unwrap();
            let regions: Vec<_> = (0..l.num_crops()).map(|j| l.crop_region_of(j).unwrap()).collect();
            for r in 0..h {
                for c in 0..w {
                    let owners = regions.iter().filter(|g| g.contains(r, c)).count();
                    prop_assert_eq!(owners, 1);
                }
            }
            // Top-left corners advance along rows, then columns.
            for j in 1..l.num_crops() {
                let (p, q) = (regions[j - 1], regions[j]);
                if j % b != 0 {
                    prop_assert_eq!(q.row0, p.row0);
                    prop_assert!(q.col0 >= p.col0);
                } else {
                    prop_assert!(q.row0 >= p.row0);
                }
            }
        }
    }
}
