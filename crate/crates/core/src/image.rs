//! Grayscale rasters, PNG I/O and intensity histograms.

use std::path::Path;

use crate::error::{Error, Result};

/// Integer pixel coordinate, `x` grows to the right and `y` downwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn is_8_neighbor(self, other: Point) -> bool {
        self != other && (self.x - other.x).abs() <= 1 && (self.y - other.y).abs() <= 1
    }

    pub fn dist(self, other: Point) -> f64 {
        let dx = (self.x - other.x) as f64;
        let dy = (self.y - other.y) as f64;
        dx.hypot(dy)
    }
}

/// Single-channel 8-bit raster stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, fill: u8) -> Result<Self> {
        Self::from_raw(width, height, vec![fill; width * height])
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions(format!("{width}x{height} image")));
        }
        if data.len() != width * height {
            return Err(Error::InvalidDimensions(format!(
                "buffer of {} bytes for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::from_raw(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Pixel value or `None` outside the raster.
    #[inline]
    pub fn get_checked(&self, x: i64, y: i64) -> Option<u8> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            None
        } else {
            Some(self.get(x as usize, y as usize))
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as usize) < self.width && (p.y as usize) < self.height
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centres sit on
    /// integers). Taps outside the raster read as `outside`.
    pub fn sample_bilinear(&self, x: f64, y: f64, outside: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let tap = |xx: i64, yy: i64| self.get_checked(xx, yy).map_or(outside, f64::from);
        let top = tap(x0, y0) * (1.0 - fx) + tap(x0 + 1, y0) * fx;
        let bottom = tap(x0, y0 + 1) * (1.0 - fx) + tap(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Resizes with a triangle (bilinear) filter.
    pub fn resize(&self, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions(format!("resize to {width}x{height}")));
        }
        let buf = self.to_luma();
        let out = image::imageops::resize(&buf, width as u32, height as u32, image::imageops::FilterType::Triangle);
        Self::from_raw(width, height, out.into_raw())
    }

    fn to_luma(&self) -> image::GrayImage {
        image::GrayImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer length checked at construction")
    }

    /// Loads any supported raster; colour inputs are reduced to luminance.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
        let luma = img.into_luma8();
        let (w, h) = luma.dimensions();
        Self::from_raw(w as usize, h as usize, luma.into_raw())
    }

    /// Writes an 8-bit grayscale PNG.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_luma()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image { path: path.to_path_buf(), source })
    }
}

/// 256-bin intensity histogram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    bins: [u64; 256],
}

impl Default for Histogram {
    fn default() -> Self {
        Self { bins: [0; 256] }
    }
}

impl Histogram {
    pub fn from_bins(bins: [u64; 256]) -> Self {
        Self { bins }
    }

    pub fn bins(&self) -> &[u64; 256] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    /// Number of bins with a non-zero count.
    pub fn populated(&self) -> usize {
        self.bins.iter().filter(|&&c| c > 0).count()
    }
}

pub fn histogram(img: &GrayImage) -> Histogram {
    let mut bins = [0u64; 256];
    for &v in img.data() {
        bins[v as usize] += 1;
    }
    Histogram { bins }
}

/// Running median over histogram bins. Indices past either end are clamped
/// to the edge bin, so every window holds exactly `window` values.
pub fn smooth_histogram(hist: &Histogram, window: usize) -> Result<Histogram> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::InvalidParameter(format!("median window must be odd and >= 1, got {window}")));
    }
    let half = (window / 2) as i64;
    let mut out = [0u64; 256];
    let mut buf = Vec::with_capacity(window);
    for (i, slot) in out.iter_mut().enumerate() {
        buf.clear();
        for k in -half..=half {
            let j = (i as i64 + k).clamp(0, 255) as usize;
            buf.push(hist.bins[j]);
        }
        buf.sort_unstable();
        *slot = buf[half as usize];
    }
    Ok(Histogram { bins: out })
}
