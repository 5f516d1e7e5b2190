//! Foreground/background separation: Otsu thresholding, binarization and
//! hole filling.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{histogram, smooth_histogram, GrayImage, Histogram, Point};

/// Row-major boolean raster, `true` marks chromosome pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    /// Pixels at or above 128 are foreground.
    pub fn from_image(img: &GrayImage) -> Self {
        Self::from_fn(img.width(), img.height(), |x, y| img.get(x, y) >= 128)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    /// Foreground test that treats everything outside the raster as background.
    #[inline]
    pub fn at(&self, p: Point) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as usize) < self.width && (p.y as usize) < self.height && self.get(p.x as usize, p.y as usize)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn foreground(&self) -> impl Iterator<Item = Point> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| Point::new((i % self.width) as i32, (i / self.width) as i32))
    }

    /// Inclusive bounding box `(min_x, min_y, max_x, max_y)` of the foreground.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for p in self.foreground() {
            let (x, y) = (p.x as usize, p.y as usize);
            bb = Some(match bb {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
        bb
    }

    /// 0/255 rendering.
    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| if self.get(x, y) { 255 } else { 0 })
            .expect("mask dimensions are non-zero")
    }

    /// Keeps only the largest 8-connected foreground component.
    pub fn largest_component(&self) -> BinaryMask {
        let mut label = vec![usize::MAX; self.data.len()];
        let mut best = (0usize, usize::MAX);
        let mut next = 0usize;
        let mut queue = VecDeque::new();
        for start in 0..self.data.len() {
            if !self.data[start] || label[start] != usize::MAX {
                continue;
            }
            let mut size = 0;
            label[start] = next;
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                size += 1;
                let (x, y) = ((i % self.width) as i64, (i / self.width) as i64);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
                            continue;
                        }
                        let j = ny as usize * self.width + nx as usize;
                        if self.data[j] && label[j] == usize::MAX {
                            label[j] = next;
                            queue.push_back(j);
                        }
                    }
                }
            }
            if size > best.0 {
                best = (size, next);
            }
            next += 1;
        }
        let data = label.iter().map(|&l| l == best.1 && best.1 != usize::MAX).collect();
        BinaryMask { width: self.width, height: self.height, data }
    }
}

/// Which side of the threshold is chromosome.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Stained chromosomes darker than the background (G-/Q-band renderings).
    #[default]
    DarkOnLight,
    LightOnDark,
}

/// Otsu threshold `t`: the lower class is `v < t`, the upper class `v >= t`.
/// Ties resolve to the smallest `t`.
pub fn otsu_threshold(hist: &Histogram) -> Result<u8> {
    if hist.populated() < 2 {
        return Err(Error::DegenerateHistogram);
    }
    let bins = hist.bins();
    let total: i128 = bins.iter().map(|&c| c as i128).sum();
    let sum: i128 = bins.iter().enumerate().map(|(v, &c)| v as i128 * c as i128).sum();

    let mut n0: i128 = 0;
    let mut s0: i128 = 0;
    let mut best: Option<(u8, f64)> = None;
    for t in 1..=255usize {
        n0 += bins[t - 1] as i128;
        s0 += (t as i128 - 1) * bins[t - 1] as i128;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        // N^2 * sigma_b^2 = (N*S0 - n0*S)^2 / (n0*n1)
        let d = (total * s0 - n0 * sum) as f64;
        let score = d * d / (n0 as f64 * n1 as f64);
        if best.map_or(true, |(_, b)| score > b) {
            best = Some((t as u8, score));
        }
    }
    best.map(|(t, _)| t).ok_or(Error::DegenerateHistogram)
}

pub fn binarize(img: &GrayImage, threshold: u8, polarity: Polarity) -> BinaryMask {
    BinaryMask::from_fn(img.width(), img.height(), |x, y| {
        let v = img.get(x, y);
        match polarity {
            Polarity::DarkOnLight => v < threshold,
            Polarity::LightOnDark => v >= threshold,
        }
    })
}

/// Turns every background region that is not 4-connected to the border into
/// foreground.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width, mask.height);
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    let seed = |x: usize, y: usize, outside: &mut Vec<bool>, queue: &mut VecDeque<usize>| {
        let i = y * w + x;
        if !mask.data[i] && !outside[i] {
            outside[i] = true;
            queue.push_back(i);
        }
    };
    for x in 0..w {
        seed(x, 0, &mut outside, &mut queue);
        seed(x, h - 1, &mut outside, &mut queue);
    }
    for y in 0..h {
        seed(0, y, &mut outside, &mut queue);
        seed(w - 1, y, &mut outside, &mut queue);
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let mut visit = |j: usize| {
            if !mask.data[j] && !outside[j] {
                outside[j] = true;
                queue.push_back(j);
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < w {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - w);
        }
        if y + 1 < h {
            visit(i + w);
        }
    }
    BinaryMask { width: w, height: h, data: outside.into_iter().map(|o| !o).collect() }
}

/// Threshold selection used by the straightening pipeline: Otsu on the
/// median-smoothed histogram. Falls back to the raw histogram when smoothing
/// removes a dominant population: a flat padded background is a single-bin
/// spike holding most of the mass, and so is a noise-free rendering.
pub fn select_threshold(img: &GrayImage) -> Result<u8> {
    let raw = histogram(img);
    let smoothed = smooth_histogram(&raw, 3)?;
    if smoothed.total() * 2 < raw.total() {
        return otsu_threshold(&raw);
    }
    match otsu_threshold(&smoothed) {
        Ok(t) => Ok(t),
        Err(Error::DegenerateHistogram) => otsu_threshold(&raw),
        Err(e) => Err(e),
    }
}

/// Full segmentation: threshold, binarize, keep the largest component, fill holes.
pub fn segment(img: &GrayImage, polarity: Polarity) -> Result<BinaryMask> {
    let t = select_threshold(img)?;
    let mask = binarize(img, t, polarity);
    if mask.count() == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(fill_holes(&mask.largest_component()))
}

/// Mean intensity over background pixels, or over the whole image when the
/// mask covers everything.
pub fn background_mean(img: &GrayImage, mask: &BinaryMask) -> f64 {
    let (sum, n) = img
        .data()
        .iter()
        .zip(mask.data())
        .filter(|(_, &m)| !m)
        .fold((0.0, 0usize), |(s, n), (&v, _)| (s + v as f64, n + 1));
    if n == 0 {
        img.data().iter().map(|&v| v as f64).sum::<f64>() / img.data().len() as f64
    } else {
        sum / n as f64
    }
}
