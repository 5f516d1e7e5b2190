//! Straightening quality scores (length, axis straightness, horizontal-edge
//! energy, density-profile agreement) and macro-averaged classification
//! metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::mask::{cell_gradients, horizontal_edges, PatchGrid};
use crate::segmentation::{segment, BinaryMask, Polarity};
use crate::skeleton::{medial_axis, AxisParams, MedialAxis};
use crate::straighten::Polyline;

/// Default number of axis segments used by [`ma_score`].
pub const MA_SAMPLES: usize = 6;
/// Default scale of [`sobel_score`].
pub const SOBEL_LAMBDA: f64 = 0.01;

/// `(1 - |l - l'| / l') * 100`. Not clamped; may go negative.
pub fn l_score(predicted_len: usize, target_len: usize) -> Result<f64> {
    if target_len == 0 {
        return Err(Error::ZeroTarget);
    }
    let (l, t) = (predicted_len as f64, target_len as f64);
    Ok((1.0 - (l - t).abs() / t) * 100.0)
}

/// Axis straightness: `(1 - mean |local slope - overall slope|) * 100` over
/// `n_samples` segments between `n_samples + 1` points spaced uniformly by
/// arc length. Slopes are taken against the dominant axis of the end-to-end
/// chord (dx/dy for mostly vertical axes, dy/dx otherwise), and local
/// denominators are floored at one pixel in magnitude.
pub fn ma_score(axis: &MedialAxis, n_samples: usize) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be positive".into()));
    }
    if axis.len() < n_samples + 1 {
        return Err(Error::AxisTooShort(format!("{} points for {} samples", axis.len(), n_samples)));
    }
    let line = Polyline::new(axis);
    let total = line.length();
    let samples: Vec<(f64, f64)> = (0..=n_samples).map(|i| line.at(total * i as f64 / n_samples as f64)).collect();
    let (b, t) = (samples[0], samples[n_samples]);
    let (cx, cy) = (b.0 - t.0, b.1 - t.1);
    let vertical = cy.abs() >= cx.abs();
    let split = |dx: f64, dy: f64| if vertical { (dx, dy) } else { (dy, dx) };
    let (num, den) = split(cx, cy);
    let overall = num / den;
    let mean = samples
        .windows(2)
        .map(|w| {
            let (num, den) = split(w[1].0 - w[0].0, w[1].1 - w[0].1);
            let den = if den.abs() < 1.0 { if den < 0.0 { -1.0 } else { 1.0 } } else { den };
            let dev = (num / den - overall).abs();
            // interpolation round-off on collinear points
            if dev < 1e-9 {
                0.0
            } else {
                dev
            }
        })
        .sum::<f64>()
        / n_samples as f64;
    Ok((1.0 - mean) * 100.0)
}

/// `lambda` times the summed absolute horizontal-edge response over all cells.
pub fn sobel_score(mask: &BinaryMask, grid: &PatchGrid, lambda: f64) -> Result<f64> {
    Ok(lambda * cell_gradients(mask, grid)?.iter().sum::<u64>() as f64)
}

/// [`sobel_score`] for rasters that do not fit a grid. The per-cell sums are
/// taken from a whole-raster response, so the total does not depend on the grid.
pub fn sobel_score_image(mask: &BinaryMask, lambda: f64) -> f64 {
    lambda * horizontal_edges(mask).iter().map(|r| r.unsigned_abs() as u64).sum::<u64>() as f64
}

/// Intensities sampled along a medial axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub values: Vec<f64>,
}

impl DensityProfile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Linear resampling to `n` values spanning the same support.
    pub fn resampled(&self, n: usize) -> DensityProfile {
        let m = self.values.len();
        if m == 0 || n == 0 {
            return DensityProfile { values: Vec::new() };
        }
        if m == 1 || n == 1 {
            return DensityProfile { values: vec![self.values[0]; n] };
        }
        let values = (0..n)
            .map(|i| {
                let pos = i as f64 * (m - 1) as f64 / (n - 1) as f64;
                let lo = (pos.floor() as usize).min(m - 2);
                let f = pos - lo as f64;
                self.values[lo] * (1.0 - f) + self.values[lo + 1] * f
            })
            .collect();
        DensityProfile { values }
    }
}

pub fn density_profile(img: &GrayImage, axis: &MedialAxis) -> DensityProfile {
    let values = axis.points().iter().map(|p| img.sample_bilinear(p.x as f64, p.y as f64, 0.0)).collect();
    DensityProfile { values }
}

/// Mean squared difference of the [0,1]-normalised profiles times 100, after
/// resampling `b` to the length of `a`.
pub fn dp_score(a: &DensityProfile, b: &DensityProfile) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyProfile);
    }
    let b = b.resampled(a.len());
    let sum: f64 = a.values.iter().zip(&b.values).map(|(x, y)| ((x - y) / 255.0).powi(2)).sum();
    Ok(sum * 100.0 / a.len() as f64)
}

/// Square count matrix; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let classes = rows.len();
        if classes == 0 || rows.iter().any(|r| r.len() != classes) {
            return Err(Error::EmptyMatrix);
        }
        Ok(Self { classes, counts: rows.concat() })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Macro-averaged one-vs-rest accuracy, precision and recall; F1 from the
/// averaged precision and recall. Zero denominators contribute 0.
pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<ClassMetrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let c = cm.classes();
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let (mut acc, mut prec, mut rec) = (0.0, 0.0, 0.0);
    for j in 0..c {
        let tp = cm.get(j, j);
        let row: u64 = (0..c).map(|k| cm.get(j, k)).sum();
        let col: u64 = (0..c).map(|k| cm.get(k, j)).sum();
        let (fn_, fp) = (row - tp, col - tp);
        let tn = total - tp - fp - fn_;
        acc += ratio(tp + tn, total);
        prec += ratio(tp, tp + fp);
        rec += ratio(tp, tp + fn_);
    }
    let (accuracy, precision, recall) = (acc / c as f64, prec / c as f64, rec / c as f64);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(ClassMetrics { accuracy, precision, recall, f1 })
}

/// One row of the score CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub id: String,
    pub l_score: f64,
    pub ma_score: f64,
    pub sobel_score: f64,
    pub dp_score: f64,
    pub lpips: Option<f64>,
}

/// Segmentation plus full axis recovery, as used for scoring.
pub fn chromosome_axis(img: &GrayImage, polarity: Polarity) -> Result<(BinaryMask, MedialAxis)> {
    let mask = segment(img, polarity)?;
    let axis = medial_axis(&mask, &AxisParams::default())?;
    Ok((mask, axis))
}

/// Scores a straightened `output` against its bent `input`. Length and
/// density profile are compared with `reference` when given (e.g. the
/// straight source of a synthetic sample), otherwise with `input`.
pub fn score_pair(id: &str, input: &GrayImage, output: &GrayImage, reference: Option<&GrayImage>, polarity: Polarity) -> Result<ScoreReport> {
    let target_img = reference.unwrap_or(input);
    let (_, target_axis) = chromosome_axis(target_img, polarity)?;
    let (out_mask, out_axis) = chromosome_axis(output, polarity)?;
    Ok(ScoreReport {
        id: id.to_string(),
        l_score: l_score(out_axis.len(), target_axis.len())?,
        ma_score: ma_score(&out_axis, MA_SAMPLES)?,
        sobel_score: sobel_score_image(&out_mask, SOBEL_LAMBDA),
        dp_score: dp_score(&density_profile(target_img, &target_axis), &density_profile(output, &out_axis))?,
        lpips: None,
    })
}
