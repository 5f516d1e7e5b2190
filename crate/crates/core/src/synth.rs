//! Synthetic bending of straight chromosomes: a lateral spine displacement
//! with cosine falloff, resampled by inverse mapping.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::metrics::{ma_score, MA_SAMPLES};
use crate::segmentation::{background_mean, BinaryMask};
use crate::skeleton::{medial_axis, AxisParams};

pub const FACTOR_RANGE: (f64, f64) = (1.05, 1.35);
pub const MIN_SEPARATION: f64 = 0.15;
/// Displacement scale in local half-widths: a control point moves the spine
/// by `(factor - 1) * half_width * DISPLACEMENT_SCALE * half_width`.
pub const DISPLACEMENT_SCALE: f64 = 2.0;
/// Falloff radius of one control point as a fraction of the axis length.
pub const FALLOFF: f64 = 0.5;
/// Minimum straightness of a source axis.
pub const MIN_SOURCE_MA: f64 = 95.0;
const CANVAS_GROWTH: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BendSpec {
    /// Arc-length fractions in (0, 1), strictly increasing.
    pub control_points: Vec<f64>,
    pub factors: Vec<f64>,
    /// Side of the displacement at each control point, +1 or -1.
    pub directions: Vec<i8>,
    pub seed: u64,
}

impl BendSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.control_points.len();
        if n == 0 || self.factors.len() != n || self.directions.len() != n {
            return Err(Error::InvalidParameter("bend spec arrays must be non-empty and equally long".into()));
        }
        if self.control_points.iter().any(|&f| !(f > 0.0 && f < 1.0)) || self.control_points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("control points must increase strictly inside (0, 1)".into()));
        }
        if self.factors.iter().any(|f| !f.is_finite() || *f < 1.0) || self.directions.iter().any(|d| d.abs() != 1) {
            return Err(Error::InvalidParameter("factors must be >= 1 and directions +-1".into()));
        }
        Ok(())
    }
}

pub fn sample_bend_spec(seed: u64) -> BendSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(1..=3usize);
    let control_points = loop {
        let mut f: Vec<f64> = (0..count).map(|_| rng.random_range(f64::EPSILON..1.0)).collect();
        f.sort_by(f64::total_cmp);
        if f.windows(2).all(|w| w[1] - w[0] >= MIN_SEPARATION) {
            break f;
        }
    };
    let factors = (0..count).map(|_| rng.random_range(FACTOR_RANGE.0..=FACTOR_RANGE.1)).collect();
    let directions = (0..count).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
    BendSpec { control_points, factors, directions, seed }
}

struct SpineSample {
    x: f64,
    y: f64,
    arc: f64,
}

/// Bends the chromosome in `img` (foreground `mask`) according to `spec`.
/// The output canvas is grown around the source so the bent shape fits.
pub fn generate_bent(img: &GrayImage, mask: &BinaryMask, spec: &BendSpec) -> Result<GrayImage> {
    spec.validate()?;
    if (img.width(), img.height()) != (mask.width(), mask.height()) {
        return Err(Error::InvalidDimensions(format!(
            "image {}x{} vs mask {}x{}",
            img.width(),
            img.height(),
            mask.width(),
            mask.height()
        )));
    }
    let axis = medial_axis(mask, &AxisParams::default())?;
    let straightness = ma_score(&axis, MA_SAMPLES)?;
    if straightness < MIN_SOURCE_MA {
        return Err(Error::SourceNotStraight(straightness));
    }
    let first = axis.points()[0];
    let last = *axis.points().last().expect("non-empty axis");
    let (x0, y0) = (first.x as f64, first.y as f64);
    let length = first.dist(last);
    let (tx, ty) = ((last.x as f64 - x0) / length, (last.y as f64 - y0) / length);
    let (nx, ny) = (ty, -tx);
    let half_width = mask.count() as f64 / (2.0 * (length + 1.0));
    let radius = FALLOFF * length;

    let displacement = |s: f64| -> f64 {
        spec.control_points
            .iter()
            .zip(&spec.factors)
            .zip(&spec.directions)
            .map(|((&c, &f), &d)| {
                let dist = (s - c * length).abs();
                if dist >= radius {
                    0.0
                } else {
                    let amp = d as f64 * (f - 1.0) * half_width * DISPLACEMENT_SCALE * half_width;
                    amp * 0.5 * (1.0 + (std::f64::consts::PI * dist / radius).cos())
                }
            })
            .sum()
    };

    // displaced spine, then scaled about its start so its length matches the source
    const STEP: f64 = 0.25;
    let steps = (length / STEP).ceil() as usize;
    let raw: Vec<(f64, f64)> = (0..=steps)
        .map(|i| {
            let s = (i as f64 * STEP).min(length);
            let d = displacement(s);
            (s * tx + d * nx, s * ty + d * ny)
        })
        .collect();
    let raw_len: f64 = raw.windows(2).map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1)).sum();
    let k = if raw_len > 0.0 { length / raw_len } else { 1.0 };
    let mut spine = Vec::with_capacity(raw.len());
    let mut arc = 0.0;
    for (i, &(rx, ry)) in raw.iter().enumerate() {
        if i > 0 {
            arc += k * (rx - raw[i - 1].0).hypot(ry - raw[i - 1].1);
        }
        spine.push(SpineSample { x: x0 + k * rx, y: y0 + k * ry, arc });
    }

    // forward map the mask to size the canvas
    let inverse_source = |px: f64, py: f64| -> (f64, f64) {
        let (dx, dy) = (px - x0, py - y0);
        (dx * tx + dy * ty, dx * nx + dy * ny)
    };
    let forward = |s: f64, u: f64| -> (f64, f64) {
        let idx = spine.partition_point(|p| p.arc < s).min(spine.len() - 1);
        let (ax, ay) = spine_tangent(&spine, idx);
        let p = &spine[idx];
        let ds = s - p.arc;
        (p.x + ds * ax + u * ay, p.y + ds * ay - u * ax)
    };
    let (mut min_x, mut min_y, mut max_x, mut max_y) = (0.0f64, 0.0f64, img.width() as f64 - 1.0, img.height() as f64 - 1.0);
    for p in mask.foreground() {
        let (s, u) = inverse_source(p.x as f64, p.y as f64);
        let (fx, fy) = forward(s, u);
        min_x = min_x.min(fx.floor());
        min_y = min_y.min(fy.floor());
        max_x = max_x.max(fx.ceil());
        max_y = max_y.max(fy.ceil());
    }
    let (off_x, off_y) = (-min_x, -min_y);
    let out_w = (max_x - min_x) as usize + 1;
    let out_h = (max_y - min_y) as usize + 1;
    if out_w > CANVAS_GROWTH * img.width() || out_h > CANVAS_GROWTH * img.height() {
        return Err(Error::CanvasExceeded(format!("{}x{} from {}x{}", out_w, out_h, img.width(), img.height())));
    }

    let background = background_mean(img, mask);
    GrayImage::from_fn(out_w, out_h, |ox, oy| {
        let (qx, qy) = (ox as f64 - off_x, oy as f64 - off_y);
        let idx = nearest_sample(&spine, qx, qy);
        let (ax, ay) = spine_tangent(&spine, idx);
        let p = &spine[idx];
        let (dx, dy) = (qx - p.x, qy - p.y);
        let s = p.arc + dx * ax + dy * ay;
        let u = dx * ay - dy * ax;
        let (sx, sy) = (x0 + s * tx + u * nx, y0 + s * ty + u * ny);
        img.sample_bilinear(sx, sy, background).round().clamp(0.0, 255.0) as u8
    })
}

fn spine_tangent(spine: &[SpineSample], idx: usize) -> (f64, f64) {
    let lo = idx.saturating_sub(1);
    let hi = (idx + 1).min(spine.len() - 1);
    let (dx, dy) = (spine[hi].x - spine[lo].x, spine[hi].y - spine[lo].y);
    let n = dx.hypot(dy);
    if n == 0.0 {
        (0.0, 1.0)
    } else {
        (dx / n, dy / n)
    }
}

fn nearest_sample(spine: &[SpineSample], x: f64, y: f64) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, p) in spine.iter().enumerate() {
        let d = (p.x - x).powi(2) + (p.y - y).powi(2);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}
