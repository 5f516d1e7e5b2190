//! Geometric straightening. The patch method cuts rotated rectangles centred
//! on the medial axis and restacks them on a vertical line; the medial-axis
//! baseline resamples one perpendicular scan line per axis point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayImage, Point};
use crate::segmentation::{background_mean, segment, BinaryMask, Polarity};
use crate::skeleton::{fit_direction, medial_axis, thinned_axis, AxisParams, MedialAxis};

/// Arc-length parametrisation of an axis polyline.
pub(crate) struct Polyline {
    pts: Vec<(f64, f64)>,
    cum: Vec<f64>,
}

impl Polyline {
    pub(crate) fn new(axis: &MedialAxis) -> Self {
        let pts: Vec<(f64, f64)> = axis.points().iter().map(|p| (p.x as f64, p.y as f64)).collect();
        let mut cum = Vec::with_capacity(pts.len());
        let mut acc = 0.0;
        for (i, p) in pts.iter().enumerate() {
            if i > 0 {
                let q = pts[i - 1];
                acc += (p.0 - q.0).hypot(p.1 - q.1);
            }
            cum.push(acc);
        }
        Self { pts, cum }
    }

    pub(crate) fn length(&self) -> f64 {
        *self.cum.last().unwrap_or(&0.0)
    }

    /// Point at arc length `s`, extrapolated along the end segments outside `[0, length]`.
    pub(crate) fn at(&self, s: f64) -> (f64, f64) {
        let n = self.pts.len();
        if n == 1 {
            return self.pts[0];
        }
        let seg = match self.cum.iter().position(|&c| c > s) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => n - 2,
        };
        let (a, b) = (self.pts[seg], self.pts[seg + 1]);
        let len = self.cum[seg + 1] - self.cum[seg];
        let t = (s - self.cum[seg]) / len;
        (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// Centre in source pixel coordinates.
    pub center: (f64, f64),
    /// Rotation from the downward vertical, radians.
    pub angle: f64,
    /// Row-major `patch_h x patch_w` intensities.
    pub pixels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSequence {
    pub patches: Vec<Patch>,
    pub patch_h: usize,
    pub patch_w: usize,
    pub background: u8,
}

/// Unit tangent and normal for an angle measured from the downward vertical.
/// `(u, v) -> u * normal + v * tangent` is a proper rotation.
fn frame(angle: f64) -> ((f64, f64), (f64, f64)) {
    let (s, c) = angle.sin_cos();
    ((s, c), (c, -s))
}

fn angle_of(dx: f64, dy: f64) -> f64 {
    dx.atan2(dy)
}

/// Cuts `patch_h x patch_w` rectangles centred every `patch_h` pixels of arc
/// length along `axis`. Each rectangle is rotated to the direction from its
/// centre to the next centre; the last one reuses the previous angle. The
/// tail of the final patch that runs past the axis end is clipped to
/// `background`.
pub fn extract_patches(img: &GrayImage, axis: &MedialAxis, patch_h: usize, patch_w: usize, background: u8) -> Result<PatchSequence> {
    if patch_h == 0 || patch_w == 0 {
        return Err(Error::InvalidParameter(format!("patch size {patch_h}x{patch_w}")));
    }
    let line = Polyline::new(axis);
    // every axis pixel covers half a pixel beyond each endpoint
    let extent = line.length() + 1.0;
    if extent + 1e-9 < patch_h as f64 {
        return Err(Error::AxisTooShort(format!("axis extent {extent:.1} px < patch height {patch_h}")));
    }
    let count = ((extent / patch_h as f64) - 1e-9).ceil().max(1.0) as usize;
    let off = (patch_h / 2) as f64;
    let centers: Vec<(f64, f64)> = (0..count).map(|k| line.at(k as f64 * patch_h as f64 + off)).collect();

    let mut angles: Vec<f64> = centers.windows(2).map(|w| angle_of(w[1].0 - w[0].0, w[1].1 - w[0].1)).collect();
    match angles.last().copied() {
        Some(a) => angles.push(a),
        None => {
            let (dx, dy) = fit_direction(axis.points()).unwrap_or((0.0, 1.0));
            angles.push(angle_of(dx, dy));
        }
    }

    let limit = line.length() + 0.5;
    let patches = centers
        .iter()
        .zip(&angles)
        .enumerate()
        .map(|(k, (&center, &angle))| {
            let (t, n) = frame(angle);
            let mut pixels = Vec::with_capacity(patch_h * patch_w);
            for r in 0..patch_h {
                let v = r as f64 - off;
                let clipped = (k * patch_h + r) as f64 > limit;
                for c in 0..patch_w {
                    if clipped {
                        pixels.push(background);
                        continue;
                    }
                    let u = c as f64 - (patch_w / 2) as f64;
                    let x = center.0 + v * t.0 + u * n.0;
                    let y = center.1 + v * t.1 + u * n.1;
                    pixels.push(img.sample_bilinear(x, y, background as f64).round().clamp(0.0, 255.0) as u8);
                }
            }
            Patch { center, angle, pixels }
        })
        .collect();
    Ok(PatchSequence { patches, patch_h, patch_w, background })
}

/// Stacks patches top to bottom, each horizontally centred on column `out_w / 2`.
pub fn rearrange_patches(seq: &PatchSequence, out_w: usize) -> Result<GrayImage> {
    if out_w < seq.patch_w {
        return Err(Error::InvalidParameter(format!("output width {out_w} < patch width {}", seq.patch_w)));
    }
    let h = (seq.patches.len() * seq.patch_h).max(1);
    let mut out = GrayImage::new(out_w, h, seq.background)?;
    let left = out_w / 2 - seq.patch_w / 2;
    for (k, patch) in seq.patches.iter().enumerate() {
        for r in 0..seq.patch_h {
            for c in 0..seq.patch_w {
                out.set(left + c, k * seq.patch_h + r, patch.pixels[r * seq.patch_w + c]);
            }
        }
    }
    Ok(out)
}

/// Parameters of the patch straightener.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpaParams {
    pub patch_h: usize,
    pub patch_w: usize,
    pub out_w: usize,
    pub axis: AxisParams,
    pub polarity: Polarity,
}

impl Default for PpaParams {
    fn default() -> Self {
        Self { patch_h: 8, patch_w: 16, out_w: 32, axis: AxisParams::default(), polarity: Polarity::DarkOnLight }
    }
}

/// Output of the patch straightener.
#[derive(Debug, Clone)]
pub struct Straightened {
    pub image: GrayImage,
    /// Recovered axis in source coordinates.
    pub source_axis: MedialAxis,
    /// Axis in output coordinates: column `out_w / 2`, one point per covered row.
    pub axis: MedialAxis,
    pub patches: PatchSequence,
}

/// Segment, recover the axis, cut and restack patches.
pub fn straighten_ppa(img: &GrayImage, params: &PpaParams) -> Result<Straightened> {
    let mask = segment(img, params.polarity)?;
    straighten_ppa_with_mask(img, &mask, params)
}

pub fn straighten_ppa_with_mask(img: &GrayImage, mask: &BinaryMask, params: &PpaParams) -> Result<Straightened> {
    let background = background_mean(img, mask).round() as u8;
    let source_axis = medial_axis(mask, &params.axis)?;
    let patches = extract_patches(img, &source_axis, params.patch_h, params.patch_w, background)?;
    let image = rearrange_patches(&patches, params.out_w)?;
    let rows = ((Polyline::new(&source_axis).length() + 0.5).floor() as usize + 1).min(image.height());
    let col = (params.out_w / 2) as i32;
    let axis = MedialAxis::new((0..rows as i32).map(|y| Point::new(col, y)).collect())?;
    Ok(Straightened { image, source_axis, axis, patches })
}

/// Medial-axis baseline: thin, extend both ends by up to `extension` pixels
/// along the direction of the last five points (stopping at the image
/// border), then emit one row of `scan_w` samples perpendicular to the local
/// axis direction for every axis point. `scan_w` defaults to the mask's
/// bounding-box width plus 4.
pub fn ma_straighten(img: &GrayImage, mask: &BinaryMask, scan_w: Option<usize>, extension: usize) -> Result<GrayImage> {
    let axis = thinned_axis(mask, AxisParams::default().prune_ratio)?;
    if axis.len() < 2 {
        return Err(Error::AxisTooShort(format!("{} point(s)", axis.len())));
    }
    let scan_w = match scan_w {
        Some(w) => w,
        None => mask.bounding_box().map(|(x0, _, x1, _)| x1 - x0 + 1).unwrap_or(1) + 4,
    };
    if scan_w == 0 {
        return Err(Error::InvalidParameter("scan width 0".into()));
    }
    let mut pts = axis.points().to_vec();
    extend_free(&mut pts, img, extension)?;
    pts.reverse();
    extend_free(&mut pts, img, extension)?;
    pts.reverse();

    let background = background_mean(img, mask);
    let mut out = GrayImage::new(scan_w, pts.len(), 0)?;
    for i in 0..pts.len() {
        let lo = i.saturating_sub(2);
        let hi = (i + 3).min(pts.len());
        let (tx, ty) = fit_direction(&pts[lo..hi]).unwrap_or((0.0, 1.0));
        let (nx, ny) = (ty, -tx);
        let p = pts[i];
        for c in 0..scan_w {
            let u = c as f64 - (scan_w / 2) as f64;
            let v = img.sample_bilinear(p.x as f64 + u * nx, p.y as f64 + u * ny, background);
            out.set(c, i, v.round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(out)
}

fn extend_free(pts: &mut Vec<Point>, img: &GrayImage, extension: usize) -> Result<()> {
    let tail = &pts[pts.len().saturating_sub(5)..];
    let dir = fit_direction(tail).ok_or_else(|| Error::AxisTooShort("direction undefined".into()))?;
    let end = *pts.last().expect("non-empty");
    for k in 1..=extension {
        let p = Point::new((end.x as f64 + k as f64 * dir.0).round() as i32, (end.y as f64 + k as f64 * dir.1).round() as i32);
        if !img.contains(p) {
            break;
        }
        let last = *pts.last().expect("non-empty");
        if p == last {
            continue;
        }
        if pts.contains(&p) {
            break;
        }
        pts.push(p);
    }
    Ok(())
}
