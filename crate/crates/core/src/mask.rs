//! Training-input preparation: the 2n-cell grid, seeded uniform cell masking
//! with Gaussian-noise fill that spares the medial-axis band, and the
//! horizontal-edge curvature conditions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayImage, Point};
use crate::segmentation::BinaryMask;
use crate::skeleton::MedialAxis;

/// Radius (pixels) of the band around the medial axis kept intact in masked cells.
pub const AXIS_BAND: f64 = 2.0;

/// `n` rows by 2 columns of equal cells tiling an `H x W` image. Cells are
/// indexed row-major: cell `i` is row `i / 2`, column `i % 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub height: usize,
    pub width: usize,
    pub rows: usize,
}

impl PatchGrid {
    pub fn cols(&self) -> usize {
        2
    }

    pub fn cells(&self) -> usize {
        2 * self.rows
    }

    pub fn cell_h(&self) -> usize {
        self.height / self.rows
    }

    pub fn cell_w(&self) -> usize {
        self.width / 2
    }

    /// `(x0, y0, x1, y1)`, half-open.
    pub fn cell_rect(&self, idx: usize) -> (usize, usize, usize, usize) {
        let (r, c) = (idx / 2, idx % 2);
        let (ch, cw) = (self.cell_h(), self.cell_w());
        (c * cw, r * ch, (c + 1) * cw, (r + 1) * ch)
    }

    pub fn cell_of(&self, x: usize, y: usize) -> usize {
        (y / self.cell_h()) * 2 + x / self.cell_w()
    }

    fn check(&self, width: usize, height: usize) -> Result<()> {
        if width != self.width || height != self.height {
            return Err(Error::InvalidDimensions(format!(
                "image {width}x{height} does not match grid {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

pub fn split_grid(height: usize, width: usize, rows: usize) -> Result<PatchGrid> {
    if rows == 0 || height == 0 || width == 0 {
        return Err(Error::InvalidDimensions(format!("{height}x{width} with {rows} rows")));
    }
    if height % rows != 0 || width % 2 != 0 {
        return Err(Error::InvalidDimensions(format!("{height}x{width} cannot be split into {rows}x2 equal cells")));
    }
    Ok(PatchGrid { height, width, rows })
}

/// Set of masked grid cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    /// Sorted, distinct cell indices.
    pub masked: Vec<usize>,
    pub ratio: f64,
    pub seed: u64,
}

/// Number of cells masked at `ratio`: `round(ratio * cells)`.
pub fn masked_count(cells: usize, ratio: f64) -> usize {
    ((ratio * cells as f64).round() as usize).min(cells)
}

/// Uniform sample of `round(ratio * 2n)` cells without replacement.
pub fn sample_mask(grid: &PatchGrid, ratio: f64, seed: u64) -> Result<MaskSpec> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidParameter(format!("mask ratio {ratio} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = masked_count(grid.cells(), ratio);
    let mut masked = rand::seq::index::sample(&mut rng, grid.cells(), k).into_vec();
    masked.sort_unstable();
    Ok(MaskSpec { masked, ratio, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub mean: f64,
    pub stddev: f64,
}

/// Replaces masked cells by clipped Gaussian noise. Pixels within
/// [`AXIS_BAND`] of any axis point keep their source value, including the
/// part of the band that spills into a neighbouring cell. Unmasked cells are
/// copied verbatim.
pub fn apply_mask(img: &GrayImage, grid: &PatchGrid, spec: &MaskSpec, axis: &MedialAxis, noise: NoiseParams, seed: u64) -> Result<GrayImage> {
    grid.check(img.width(), img.height())?;
    let normal = Normal::new(noise.mean, noise.stddev.max(0.0))
        .map_err(|e| Error::InvalidParameter(format!("noise parameters: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = img.clone();
    let band2 = AXIS_BAND * AXIS_BAND;
    for &idx in &spec.masked {
        if idx >= grid.cells() {
            return Err(Error::InvalidParameter(format!("cell {idx} out of range")));
        }
        let (x0, y0, x1, y1) = grid.cell_rect(idx);
        // nearby axis points only; anything further than the band cannot matter
        let near: Vec<Point> = axis
            .points()
            .iter()
            .copied()
            .filter(|p| p.x >= x0 as i32 - 3 && p.x < x1 as i32 + 3 && p.y >= y0 as i32 - 3 && p.y < y1 as i32 + 3)
            .collect();
        for y in y0..y1 {
            for x in x0..x1 {
                let draw: f64 = normal.sample(&mut rng);
                let keep = near.iter().any(|p| {
                    let (dx, dy) = (p.x as f64 - x as f64, p.y as f64 - y as f64);
                    dx * dx + dy * dy <= band2
                });
                if !keep {
                    out.set(x, y, draw.round().clamp(0.0, 255.0) as u8);
                }
            }
        }
    }
    Ok(out)
}

/// Signed 3x3 vertical-derivative response (rows `[1,2,1]`, `[0,0,0]`,
/// `[-1,-2,-1]`) of a binary raster, zero padded. Stored row-major.
pub fn horizontal_edges(mask: &BinaryMask) -> Vec<i32> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let v = |x: i64, y: i64| -> i32 { i32::from(x >= 0 && y >= 0 && x < w && y < h && mask.get(x as usize, y as usize)) };
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let up = v(x - 1, y - 1) + 2 * v(x, y - 1) + v(x + 1, y - 1);
            let down = v(x - 1, y + 1) + 2 * v(x, y + 1) + v(x + 1, y + 1);
            out.push(up - down);
        }
    }
    out
}

/// Sum of absolute kernel responses over a standalone binary patch.
pub fn condition_patch(patch: &BinaryMask) -> u64 {
    horizontal_edges(patch).iter().map(|r| r.unsigned_abs() as u64).sum()
}

/// Per-cell sums of absolute responses, computed on the whole raster so that
/// cell borders do not introduce artificial edges.
pub fn cell_gradients(mask: &BinaryMask, grid: &PatchGrid) -> Result<Vec<u64>> {
    grid.check(mask.width(), mask.height())?;
    let resp = horizontal_edges(mask);
    let mut sums = vec![0u64; grid.cells()];
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            sums[grid.cell_of(x, y)] += resp[y * mask.width() + x].unsigned_abs() as u64;
        }
    }
    Ok(sums)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Bent,
    Straight,
    Blank,
}

impl Condition {
    pub fn intensity(self) -> u8 {
        match self {
            Condition::Bent => 255,
            Condition::Straight => 128,
            Condition::Blank => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionGrid {
    pub grid: PatchGrid,
    pub labels: Vec<Condition>,
    pub threshold: u64,
}

impl ConditionGrid {
    /// Per-cell constant rendering: 255 bent, 128 straight, 0 blank.
    pub fn render(&self) -> GrayImage {
        GrayImage::from_fn(self.grid.width, self.grid.height, |x, y| self.labels[self.grid.cell_of(x, y)].intensity())
            .expect("grid dimensions are non-zero")
    }

    pub fn bent_cells(&self) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, &l)| l == Condition::Bent).map(|(i, _)| i).collect()
    }
}

/// Labels each cell Blank (no foreground), Bent (edge sum >= `threshold`) or Straight.
pub fn condition_image(mask: &BinaryMask, grid: &PatchGrid, threshold: u64) -> Result<ConditionGrid> {
    let sums = cell_gradients(mask, grid)?;
    let mut has_fg = vec![false; grid.cells()];
    for p in mask.foreground() {
        has_fg[grid.cell_of(p.x as usize, p.y as usize)] = true;
    }
    let labels = sums
        .iter()
        .zip(&has_fg)
        .map(|(&g, &fg)| match (fg, g >= threshold) {
            (false, _) => Condition::Blank,
            (true, true) => Condition::Bent,
            (true, false) => Condition::Straight,
        })
        .collect();
    Ok(ConditionGrid { grid: *grid, labels, threshold })
}

/// Inference request: every non-blank cell is shown as straight and exactly
/// `bent_cells` are masked.
pub fn inference_condition(base: &ConditionGrid, bent_cells: &[usize]) -> Result<(ConditionGrid, MaskSpec)> {
    let cells = base.grid.cells();
    if let Some(&bad) = bent_cells.iter().find(|&&c| c >= cells) {
        return Err(Error::InvalidParameter(format!("cell {bad} out of range")));
    }
    let labels = base
        .labels
        .iter()
        .map(|&l| if l == Condition::Blank { Condition::Blank } else { Condition::Straight })
        .collect();
    let mut masked = bent_cells.to_vec();
    masked.sort_unstable();
    masked.dedup();
    let ratio = masked.len() as f64 / cells as f64;
    Ok((ConditionGrid { grid: base.grid, labels, threshold: base.threshold }, MaskSpec { masked, ratio, seed: 0 }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shapes() {
        let g = split_grid(128, 32, 16).unwrap();
        assert_eq!(g.cells(), 32);
        assert_eq!((g.cell_h(), g.cell_w()), (8, 16));
        let g = split_grid(8, 16, 1).unwrap();
        assert_eq!(g.cells(), 2);
        assert_eq!((g.cell_h(), g.cell_w()), (8, 8));
        assert!(split_grid(100, 32, 16).is_err());
        assert!(split_grid(128, 31, 16).is_err());
    }

    #[test]
    fn grid_cells_tile_exactly() {
        let g = split_grid(128, 32, 16).unwrap();
        let mut hits = vec![0u8; 128 * 32];
        for i in 0..g.cells() {
            let (x0, y0, x1, y1) = g.cell_rect(i);
            for y in y0..y1 {
                for x in x0..x1 {
                    hits[y * 32 + x] += 1;
                    assert_eq!(g.cell_of(x, y), i);
                }
            }
        }
        assert!(hits.iter().all(|&h| h == 1));
    }

    #[test]
    fn mask_ratio_bounds() {
        let g = split_grid(128, 32, 16).unwrap();
        assert!(sample_mask(&g, 0.0, 1).unwrap().masked.is_empty());
        assert_eq!(sample_mask(&g, 1.0, 1).unwrap().masked, (0..32).collect::<Vec<_>>());
        let m = sample_mask(&g, 0.7, 42).unwrap();
        assert_eq!(m.masked.len(), 22);
        assert_eq!(m, sample_mask(&g, 0.7, 42).unwrap());
        assert!(sample_mask(&g, 1.5, 0).is_err());
    }

    fn vertical_axis(x: i32, y0: i32, y1: i32) -> MedialAxis {
        MedialAxis::new((y0..y1).map(|y| Point::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn empty_mask_is_identity() {
        let g = split_grid(16, 8, 2).unwrap();
        let img = GrayImage::from_fn(8, 16, |x, y| (x * 10 + y) as u8).unwrap();
        let spec = MaskSpec { masked: vec![], ratio: 0.0, seed: 0 };
        let out = apply_mask(&img, &g, &spec, &vertical_axis(4, 0, 16), NoiseParams { mean: 100.0, stddev: 25.0 }, 1).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn constant_noise_keeps_axis_band() {
        let g = split_grid(128, 32, 16).unwrap();
        let img = GrayImage::new(32, 128, 7).unwrap();
        let spec = MaskSpec { masked: (0..32).collect(), ratio: 1.0, seed: 0 };
        let axis = vertical_axis(16, 0, 128);
        let out = apply_mask(&img, &g, &spec, &axis, NoiseParams { mean: 128.0, stddev: 0.0 }, 3).unwrap();
        for y in 0..128 {
            for x in 0..32 {
                let kept = (x as i32 - 16).abs() <= 2;
                assert_eq!(out.get(x, y), if kept { 7 } else { 128 }, "({x},{y})");
            }
        }
    }

    #[test]
    fn band_spills_across_cell_border() {
        let g = split_grid(16, 16, 2).unwrap();
        let img = GrayImage::new(16, 16, 9).unwrap();
        let spec = MaskSpec { masked: (0..4).collect(), ratio: 1.0, seed: 0 };
        let out = apply_mask(&img, &g, &spec, &vertical_axis(7, 0, 16), NoiseParams { mean: 200.0, stddev: 0.0 }, 0).unwrap();
        assert_eq!(out.get(9, 3), 9);
        assert_eq!(out.get(10, 3), 200);
        assert_eq!(out.get(5, 3), 9);
        assert_eq!(out.get(4, 3), 200);
    }

    #[test]
    fn patch_gradients() {
        assert_eq!(condition_patch(&BinaryMask::new(16, 8)), 0);
        // all ones: only the padded top and bottom rows respond (4 per column,
        // 3 at the corners, where the corner tap falls into the padding)
        let ones = BinaryMask::from_fn(16, 8, |_, _| true);
        let resp = horizontal_edges(&ones);
        assert!(resp[16..7 * 16].iter().all(|&r| r == 0));
        assert_eq!(condition_patch(&ones), 2 * (14 * 4 + 2 * 3));

        // horizontal step of length 5 in the middle of the patch: the row
        // just above the step sums to 4 * 5 in magnitude
        let step = BinaryMask::from_fn(16, 8, |x, y| (5..10).contains(&x) && y >= 4);
        let resp = horizontal_edges(&step);
        let above: i32 = resp[3 * 16..4 * 16].iter().map(|r| r.abs()).sum();
        assert_eq!(above, 20);
        // the kernel spans two rows, so the first foreground row responds as
        // well, and the zero-padded bottom border adds a third 20
        let first: i32 = resp[4 * 16..5 * 16].iter().map(|r| r.abs()).sum();
        assert_eq!(first, 20);
        assert_eq!(condition_patch(&step), 60);
    }

    #[test]
    fn column_constant_interior_is_zero() {
        let m = BinaryMask::from_fn(16, 8, |x, _| x % 3 == 0);
        let resp = horizontal_edges(&m);
        for y in 1..7 {
            assert!(resp[y * 16..(y + 1) * 16].iter().all(|&r| r == 0));
        }
    }

    #[test]
    fn condition_labels() {
        let g = split_grid(64, 32, 8).unwrap();
        let empty = BinaryMask::new(32, 64);
        let c = condition_image(&empty, &g, 18).unwrap();
        assert!(c.labels.iter().all(|&l| l == Condition::Blank));
        assert!(c.render().data().iter().all(|&v| v == 0));

        // vertical bar spanning the whole height through the left column
        let bar = BinaryMask::from_fn(32, 64, |x, _| (5..10).contains(&x));
        let c = condition_image(&bar, &g, 18).unwrap();
        for row in 1..7 {
            assert_eq!(c.labels[row * 2], Condition::Straight);
            assert_eq!(c.labels[row * 2 + 1], Condition::Blank);
        }

        // a 5-px horizontal run inside cell 5 -> 4 * 5 per side -> bent
        let run = BinaryMask::from_fn(32, 64, |x, y| (20..25).contains(&x) && y == 19);
        let sums = cell_gradients(&run, &g).unwrap();
        assert_eq!(sums[5], 40);
        let c = condition_image(&run, &g, 18).unwrap();
        assert_eq!(c.labels[5], Condition::Bent);
        let img = c.render();
        assert_eq!(img.get(20, 19), 255);
        assert_eq!(img.get(0, 0), 0);
    }

    #[test]
    fn inference_request() {
        let g = split_grid(32, 32, 4).unwrap();
        let base = ConditionGrid {
            grid: g,
            labels: vec![Condition::Bent, Condition::Blank, Condition::Straight, Condition::Bent, Condition::Bent, Condition::Straight, Condition::Blank, Condition::Straight],
            threshold: 18,
        };
        let (c, m) = inference_condition(&base, &[]).unwrap();
        assert!(m.masked.is_empty());
        assert!(c.labels.iter().all(|&l| l != Condition::Bent));
        assert_eq!(c.labels[1], Condition::Blank);
        let (_, m) = inference_condition(&base, &[4, 3]).unwrap();
        assert_eq!(m.masked, vec![3, 4]);
        let all: Vec<usize> = (0..8).collect();
        let (_, m) = inference_condition(&base, &all).unwrap();
        assert_eq!(m.masked, all);
        assert!(inference_condition(&base, &[8]).is_err());
    }
}
