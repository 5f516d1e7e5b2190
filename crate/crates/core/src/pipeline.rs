//! Batch commands over a JSON sample manifest: synthetic bending, rescaling
//! and straightening, training-bundle preparation and scoring.
//!
//! Every command processes samples independently. Randomness is derived from
//! the run seed and the sample id only, so sequential and parallel runs write
//! identical files. A sample that fails is recorded in `report.json` and the
//! run carries on.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixtures::{striped_bar, FixtureParams};
use crate::image::{GrayImage, Point};
use crate::mask::{apply_mask, condition_image, sample_mask, split_grid, NoiseParams};
use crate::metrics::{score_pair, ScoreReport};
use crate::par::{par_map, Execution};
use crate::segmentation::{background_mean, segment, Polarity};
use crate::skeleton::{medial_axis, AxisParams, MedialAxis};
use crate::straighten::{ma_straighten, straighten_ppa_with_mask, PpaParams};
use crate::synth::{generate_bent, sample_bend_spec};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PAIRS_FILE: &str = "pairs.json";
pub const REPORT_FILE: &str = "report.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
/// Axis extension used by the medial-axis baseline.
pub const MA_EXTENSION: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleKind {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub id: String,
    /// Relative paths are resolved against the manifest's directory.
    pub image_path: PathBuf,
    #[serde(default)]
    pub split: Split,
    /// Id of the real sample this one derives from; a real sample's own id.
    pub group_id: String,
    pub kind: SampleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<Vec<Point>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_indices: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bent_cells: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SampleManifest {
    pub fn real(id: &str, image_path: impl Into<PathBuf>) -> Self {
        Self {
            id: id.to_string(),
            image_path: image_path.into(),
            split: Split::Train,
            group_id: id.to_string(),
            kind: SampleKind::Real,
            axis: None,
            mask_indices: None,
            bent_cells: None,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub samples: Vec<SampleManifest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_fold: Option<usize>,
}

impl Manifest {
    pub fn new(samples: Vec<SampleManifest>) -> Self {
        Self { samples, config: None, test_fold: None }
    }

    /// Reads and validates a manifest. Returns it with the directory that
    /// relative image paths refer to.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        manifest.validate()?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((manifest, base))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Ids are unique and every synthetic sample names an existing real one.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for s in &self.samples {
            if s.id.is_empty() {
                return Err(Error::Manifest("empty sample id".into()));
            }
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate id {:?}", s.id)));
            }
        }
        let reals: HashSet<&str> = self.samples.iter().filter(|s| s.kind == SampleKind::Real).map(|s| s.id.as_str()).collect();
        for s in &self.samples {
            if s.kind == SampleKind::Synthetic && !reals.contains(s.group_id.as_str()) {
                return Err(Error::Manifest(format!("{:?}: group {:?} is not a real sample", s.id, s.group_id)));
            }
        }
        Ok(())
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub patch_h: usize,
    pub patch_w: usize,
    pub mask_ratio: f64,
    pub threshold_t: u64,
    pub prune_ratio: f64,
    pub n_rows: usize,
    pub canvas_h: usize,
    pub canvas_w: usize,
    pub seed: u64,
    pub variants_per_source: usize,
    pub noise_std: f64,
    pub folds: usize,
    pub polarity: Polarity,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            patch_h: 8,
            patch_w: 16,
            mask_ratio: 0.70,
            threshold_t: 18,
            prune_ratio: 0.1,
            n_rows: 16,
            canvas_h: 128,
            canvas_w: 32,
            seed: 0,
            variants_per_source: 5,
            noise_std: 25.0,
            folds: 5,
            polarity: Polarity::DarkOnLight,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.patch_h == 0 || self.patch_w == 0 || self.canvas_h == 0 || self.canvas_w == 0 {
            return bad("patch and canvas sizes must be positive");
        }
        if self.patch_w > self.canvas_w {
            return bad("patch width exceeds canvas width");
        }
        if self.n_rows == 0 || self.canvas_h % self.n_rows != 0 || self.canvas_w % 2 != 0 {
            return bad("canvas must split into n_rows x 2 equal cells");
        }
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return bad("mask ratio outside [0, 1]");
        }
        if !(0.0..1.0).contains(&self.prune_ratio) {
            return bad("prune ratio outside [0, 1)");
        }
        if self.folds < 2 {
            return bad("at least two folds");
        }
        if !(self.noise_std >= 0.0) {
            return bad("noise std must be non-negative");
        }
        Ok(())
    }

    pub fn ppa_params(&self) -> PpaParams {
        PpaParams {
            patch_h: self.patch_h,
            patch_w: self.patch_w,
            out_w: self.canvas_w,
            axis: AxisParams { prune_ratio: self.prune_ratio, ..AxisParams::default() },
            polarity: self.polarity,
        }
    }
}

/// Per-sample seed derived from the run seed and the sample id.
pub fn sample_seed(run_seed: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h ^ splitmix64(run_seed))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fold of every group. Groups are shuffled with `seed` and dealt round-robin,
/// so fold sizes differ by at most one group.
pub fn assign_folds(samples: &[SampleManifest], folds: usize, seed: u64) -> Result<BTreeMap<String, usize>> {
    if folds == 0 {
        return Err(Error::InvalidParameter("zero folds".into()));
    }
    let groups: BTreeSet<&str> = samples.iter().map(|s| s.group_id.as_str()).collect();
    let mut groups: Vec<&str> = groups.into_iter().collect();
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(groups.into_iter().enumerate().map(|(i, g)| (g.to_string(), i % folds)).collect())
}

/// Fold `test_fold` is the test split, the next one validation, the rest training.
pub fn split_for(fold: usize, test_fold: usize, folds: usize) -> Split {
    if fold == test_fold % folds {
        Split::Test
    } else if fold == (test_fold + 1) % folds {
        Split::Val
    } else {
        Split::Train
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub processed: usize,
    pub failed: Vec<SampleError>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

impl RunReport {
    fn new(command: &str) -> Self {
        Self { command: command.to_string(), ..Self::default() }
    }

    fn save(&self, out: &Path) -> Result<()> {
        fs::write(out.join(REPORT_FILE), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Collects per-sample outcomes in input order.
fn partition<T>(report: &mut RunReport, ids: impl IntoIterator<Item = String>, results: Vec<Result<T>>) -> Vec<T> {
    let mut ok = Vec::new();
    for (id, r) in ids.into_iter().zip(results) {
        match r {
            Ok(v) => {
                report.processed += 1;
                ok.push(v);
            }
            Err(e) => report.failed.push(SampleError { id, error: e.to_string() }),
        }
    }
    ok
}

/// Writes `count` straight fixture chromosomes and a manifest listing them
/// as real samples.
pub fn write_fixture_dataset(out: &Path, count: usize, seed: u64) -> Result<Manifest> {
    fs::create_dir_all(out)?;
    let params = FixtureParams::default();
    let samples = (0..count)
        .map(|i| {
            let id = format!("fixture{i:04}");
            striped_bar(&params, sample_seed(seed, &id)).save(out.join(format!("{id}.png")))?;
            Ok(SampleManifest::real(&id, format!("{id}.png")))
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest::new(samples);
    manifest.save(out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Copies every real sample into `out` and adds `variants_per_source` bent
/// variants of each.
pub fn cmd_synth(manifest_path: &Path, config: &RunConfig, out: &Path, exec: Execution) -> Result<RunReport> {
    config.validate()?;
    let (manifest, base) = Manifest::load(manifest_path)?;
    fs::create_dir_all(out)?;
    let reals: Vec<&SampleManifest> = manifest.samples.iter().filter(|s| s.kind == SampleKind::Real).collect();
    let results = par_map(&reals, exec, |s| -> Result<Vec<SampleManifest>> {
        let img = GrayImage::load(resolve(&base, &s.image_path))?;
        let mask = segment(&img, config.polarity)?;
        let mut entries = vec![SampleManifest { image_path: format!("{}.png", s.id).into(), ..(*s).clone() }];
        img.save(out.join(&entries[0].image_path))?;
        for k in 0..config.variants_per_source {
            let id = format!("{}_bend{k}", s.id);
            let seed = sample_seed(config.seed, &id);
            let bent = generate_bent(&img, &mask, &sample_bend_spec(seed))?;
            let path = PathBuf::from(format!("{id}.png"));
            bent.save(out.join(&path))?;
            entries.push(SampleManifest {
                id,
                image_path: path,
                split: s.split,
                group_id: s.id.clone(),
                kind: SampleKind::Synthetic,
                axis: None,
                mask_indices: None,
                bent_cells: None,
                seed: Some(seed),
            });
        }
        Ok(entries)
    });
    let mut report = RunReport::new("synth");
    let ok = partition(&mut report, reals.iter().map(|s| s.id.clone()), results);
    Manifest::new(ok.into_iter().flatten().collect()).save(out.join(MANIFEST_FILE))?;
    report.save(out)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Ppa,
    Ma,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ppa => "ppa",
            Method::Ma => "ma",
        }
    }
}

/// One scoring job: a bent input, its straightened output and optionally the
/// straight source it was generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub id: String,
    #[serde(default)]
    pub method: String,
    pub input: PathBuf,
    pub output: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PairsManifest {
    pub pairs: Vec<EvalPair>,
}

/// Native axis extent and mean width of a chromosome.
fn measure(img: &GrayImage, config: &RunConfig) -> Result<(f64, f64)> {
    let mask = segment(img, config.polarity)?;
    let axis = medial_axis(&mask, &config.ppa_params().axis)?;
    let extent = axis.arc_length() + 1.0;
    Ok((extent, mask.count() as f64 / extent))
}

/// Places `img` at the top of a `h` x `w` canvas, centred horizontally.
fn fit_canvas(img: &GrayImage, h: usize, w: usize, background: u8) -> Result<GrayImage> {
    if img.height() > h || img.width() > w {
        return Err(Error::CanvasExceeded(format!("{}x{} on a {}x{} canvas", img.width(), img.height(), w, h)));
    }
    let left = (w - img.width()) / 2;
    let mut out = GrayImage::new(w, h, background)?;
    for y in 0..img.height() {
        for x in 0..img.width() {
            out.set(left + x, y, img.get(x, y));
        }
    }
    Ok(out)
}

/// Rescales the dataset by one factor so its longest chromosome fits the
/// canvas height (less one patch row) and its widest fits a patch, then
/// straightens every sample onto the canvas.
///
/// Writes `<id>.png` (straightened), `inputs/<id>.png` (rescaled input), a
/// manifest with output axes, and the scoring pairs.
pub fn cmd_preprocess(manifest_path: &Path, config: &RunConfig, out: &Path, method: Method, exec: Execution) -> Result<RunReport> {
    config.validate()?;
    let (manifest, base) = Manifest::load(manifest_path)?;
    if manifest.samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    fs::create_dir_all(out.join("inputs"))?;
    let mut report = RunReport::new("preprocess");

    let loaded = par_map(&manifest.samples, exec, |s| -> Result<(GrayImage, f64, f64)> {
        let img = GrayImage::load(resolve(&base, &s.image_path))?;
        let (extent, width) = measure(&img, config)?;
        Ok((img, extent, width))
    });
    let mut live = Vec::new();
    for (s, r) in manifest.samples.iter().zip(loaded) {
        match r {
            Ok(v) => live.push((s, v)),
            Err(e) => report.failed.push(SampleError { id: s.id.clone(), error: e.to_string() }),
        }
    }
    if live.is_empty() {
        report.save(out)?;
        return Err(Error::EmptyDataset);
    }
    let max_extent = live.iter().map(|(_, (_, e, _))| *e).fold(0.0, f64::max);
    let max_width = live.iter().map(|(_, (_, _, w))| *w).fold(0.0, f64::max);
    let room_h = config.canvas_h.saturating_sub(config.patch_h).max(1) as f64;
    let room_w = config.patch_w.saturating_sub(2).max(1) as f64;
    let scale = (room_h / max_extent).min(room_w / max_width);
    report.scale = Some(scale);

    let params = config.ppa_params();
    let results = par_map(&live, exec, |(s, (img, _, _))| -> Result<SampleManifest> {
        let w = ((img.width() as f64 * scale).round() as usize).max(1);
        let h = ((img.height() as f64 * scale).round() as usize).max(1);
        let scaled = img.resize(w, h)?;
        scaled.save(out.join("inputs").join(format!("{}.png", s.id)))?;
        let mask = segment(&scaled, config.polarity)?;
        let background = background_mean(&scaled, &mask).round() as u8;
        let (straight, axis_rows) = match method {
            Method::Ppa => {
                let st = straighten_ppa_with_mask(&scaled, &mask, &params)?;
                let rows = st.axis.len();
                (st.image, rows)
            }
            Method::Ma => {
                let img = ma_straighten(&scaled, &mask, Some(config.canvas_w), MA_EXTENSION)?;
                // the end extensions can overrun the canvas; trim them evenly
                let img = match img.height().checked_sub(config.canvas_h) {
                    Some(excess) if excess > 0 => {
                        let top = excess / 2;
                        GrayImage::from_fn(img.width(), config.canvas_h, |x, y| img.get(x, y + top))?
                    }
                    _ => img,
                };
                let rows = img.height();
                (img, rows)
            }
        };
        let canvas = fit_canvas(&straight, config.canvas_h, config.canvas_w, background)?;
        let path = PathBuf::from(format!("{}.png", s.id));
        canvas.save(out.join(&path))?;
        let col = (config.canvas_w / 2) as i32;
        let axis = (0..axis_rows.min(config.canvas_h) as i32).map(|y| Point::new(col, y)).collect();
        Ok(SampleManifest { image_path: path, axis: Some(axis), ..(*s).clone() })
    });
    let done = partition(&mut report, live.iter().map(|(s, _)| s.id.clone()), results);

    let ok_ids: HashSet<&str> = done.iter().map(|s| s.id.as_str()).collect();
    let pairs = done
        .iter()
        .map(|s| EvalPair {
            id: s.id.clone(),
            method: method.name().to_string(),
            input: PathBuf::from("inputs").join(format!("{}.png", s.id)),
            output: s.image_path.clone(),
            reference: (s.kind == SampleKind::Synthetic && ok_ids.contains(s.group_id.as_str()))
                .then(|| PathBuf::from("inputs").join(format!("{}.png", s.group_id))),
        })
        .collect();
    fs::write(out.join(PAIRS_FILE), serde_json::to_string_pretty(&PairsManifest { pairs })?)?;
    // a synthetic sample whose source failed keeps a dangling group; drop it
    let kept = done.iter().filter(|s| s.kind == SampleKind::Real || ok_ids.contains(s.group_id.as_str())).cloned().collect();
    Manifest::new(kept).save(out.join(MANIFEST_FILE))?;
    report.save(out)?;
    Ok(report)
}

/// Writes the training bundle: `<id>/original.png`, `<id>/masked.png`,
/// `<id>/condition.png` per sample plus a manifest with mask cells, seeds,
/// axes, bent cells and group-aware splits for fold `test_fold`.
pub fn cmd_prepare(manifest_path: &Path, config: &RunConfig, out: &Path, test_fold: usize, exec: Execution) -> Result<RunReport> {
    config.validate()?;
    if test_fold >= config.folds {
        return Err(Error::InvalidParameter(format!("fold {test_fold} of {}", config.folds)));
    }
    let (manifest, base) = Manifest::load(manifest_path)?;
    if manifest.samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    fs::create_dir_all(out)?;
    let folds = assign_folds(&manifest.samples, config.folds, config.seed)?;
    let grid = split_grid(config.canvas_h, config.canvas_w, config.n_rows)?;

    let results = par_map(&manifest.samples, exec, |s| -> Result<SampleManifest> {
        let path = resolve(&base, &s.image_path);
        if !path.exists() {
            return Err(Error::MissingFile(path));
        }
        let img = GrayImage::load(&path)?;
        if (img.width(), img.height()) != (config.canvas_w, config.canvas_h) {
            return Err(Error::InvalidDimensions(format!(
                "{}x{} is not a preprocessed {}x{} canvas",
                img.width(),
                img.height(),
                config.canvas_w,
                config.canvas_h
            )));
        }
        let seed = sample_seed(config.seed, &s.id);
        let mask = segment(&img, config.polarity)?;
        let axis = match &s.axis {
            Some(pts) => MedialAxis::new(pts.clone())?,
            None => medial_axis(&mask, &config.ppa_params().axis)?,
        };
        let spec = sample_mask(&grid, config.mask_ratio, seed)?;
        let noise = NoiseParams { mean: background_mean(&img, &mask), stddev: config.noise_std };
        let masked = apply_mask(&img, &grid, &spec, &axis, noise, splitmix64(seed))?;
        let condition = condition_image(&mask, &grid, config.threshold_t)?;

        let dir = out.join(&s.id);
        fs::create_dir_all(&dir)?;
        img.save(dir.join("original.png"))?;
        masked.save(dir.join("masked.png"))?;
        condition.render().save(dir.join("condition.png"))?;
        Ok(SampleManifest {
            image_path: PathBuf::from(&s.id).join("original.png"),
            split: split_for(folds[&s.group_id], test_fold, config.folds),
            axis: Some(axis.points().to_vec()),
            mask_indices: Some(spec.masked),
            bent_cells: Some(condition.bent_cells()),
            seed: Some(seed),
            ..s.clone()
        })
    });
    let mut report = RunReport::new("prepare");
    let done = partition(&mut report, manifest.samples.iter().map(|s| s.id.clone()), results);
    let ok_ids: HashSet<&str> = done.iter().map(|s| s.id.as_str()).collect();
    let kept = done.iter().filter(|s| s.kind == SampleKind::Real || ok_ids.contains(s.group_id.as_str())).cloned().collect();
    Manifest { samples: kept, config: Some(*config), test_fold: Some(test_fold) }.save(out.join(MANIFEST_FILE))?;
    report.save(out)?;
    Ok(report)
}

/// Mean and population standard deviation per metric for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub count: usize,
    pub l_mean: f64,
    pub l_std: f64,
    pub ma_mean: f64,
    pub ma_std: f64,
    pub sobel_mean: f64,
    pub sobel_std: f64,
    pub dp_mean: f64,
    pub dp_std: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn summarize(method: &str, rows: &[&ScoreReport]) -> MethodSummary {
    let col = |f: fn(&ScoreReport) -> f64| mean_std(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
    let (l_mean, l_std) = col(|r| r.l_score);
    let (ma_mean, ma_std) = col(|r| r.ma_score);
    let (sobel_mean, sobel_std) = col(|r| r.sobel_score);
    let (dp_mean, dp_std) = col(|r| r.dp_score);
    MethodSummary { method: method.to_string(), count: rows.len(), l_mean, l_std, ma_mean, ma_std, sobel_mean, sobel_std, dp_mean, dp_std }
}

impl MethodSummary {
    pub fn table_row(&self) -> String {
        format!(
            "{:<8} {:>5}  {:>7.2}±{:<6.2} {:>7.2}±{:<6.2} {:>6.2}±{:<5.2} {:>6.2}±{:<5.2}",
            self.method, self.count, self.l_mean, self.l_std, self.ma_mean, self.ma_std, self.sobel_mean, self.sobel_std, self.dp_mean, self.dp_std
        )
    }
}

pub const SUMMARY_HEADER: &str = "method   count  L               MA              Sobel          DP";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evaluation {
    pub report: RunReport,
    pub scores: Vec<ScoreReport>,
    pub summaries: Vec<MethodSummary>,
}

/// Scores every pair and writes `scores.csv`, `summary.csv` and one SVG
/// histogram per metric under `plots/`.
pub fn cmd_evaluate(pairs_path: &Path, config: &RunConfig, out: &Path, exec: Execution) -> Result<Evaluation> {
    let text = fs::read_to_string(pairs_path).map_err(|e| Error::Manifest(format!("{}: {e}", pairs_path.display())))?;
    let pairs: PairsManifest = serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", pairs_path.display())))?;
    let base = pairs_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut ids = HashSet::new();
    for p in &pairs.pairs {
        if !ids.insert(p.id.as_str()) {
            return Err(Error::Manifest(format!("duplicate pair id {:?}", p.id)));
        }
        for f in [Some(&p.input), Some(&p.output), p.reference.as_ref()].into_iter().flatten() {
            if !resolve(&base, f).exists() {
                return Err(Error::Manifest(format!("pair {:?}: missing {}", p.id, f.display())));
            }
        }
    }
    fs::create_dir_all(out.join("plots"))?;

    let results = par_map(&pairs.pairs, exec, |p| -> Result<ScoreReport> {
        let input = GrayImage::load(resolve(&base, &p.input))?;
        let output = GrayImage::load(resolve(&base, &p.output))?;
        let reference = p.reference.as_ref().map(|r| GrayImage::load(resolve(&base, r))).transpose()?;
        score_pair(&p.id, &input, &output, reference.as_ref(), config.polarity)
    });
    let mut report = RunReport::new("evaluate");
    let scores = partition(&mut report, pairs.pairs.iter().map(|p| p.id.clone()), results);

    let mut w = csv::Writer::from_path(out.join(SCORES_FILE))?;
    for s in &scores {
        w.serialize(s)?;
    }
    if scores.is_empty() {
        w.write_record(["id", "l_score", "ma_score", "sobel_score", "dp_score", "lpips"])?;
    }
    w.flush()?;

    let method_of: BTreeMap<&str, &str> = pairs.pairs.iter().map(|p| (p.id.as_str(), if p.method.is_empty() { "-" } else { p.method.as_str() })).collect();
    let mut by_method: BTreeMap<&str, Vec<&ScoreReport>> = BTreeMap::new();
    for s in &scores {
        by_method.entry(method_of[s.id.as_str()]).or_default().push(s);
    }
    let summaries: Vec<MethodSummary> = by_method.iter().map(|(m, rows)| summarize(m, rows)).collect();
    let mut w = csv::Writer::from_path(out.join(SUMMARY_FILE))?;
    for s in &summaries {
        w.serialize(s)?;
    }
    w.flush()?;

    let metrics: [(&str, fn(&ScoreReport) -> f64); 4] =
        [("l_score", |r| r.l_score), ("ma_score", |r| r.ma_score), ("sobel_score", |r| r.sobel_score), ("dp_score", |r| r.dp_score)];
    for (name, f) in metrics {
        let series: Vec<(&str, Vec<f64>)> = by_method.iter().map(|(m, rows)| (*m, rows.iter().map(|r| f(r)).collect())).collect();
        histogram_svg(&out.join("plots").join(format!("{name}.svg")), name, &series)?;
    }
    report.save(out)?;
    Ok(Evaluation { report, scores, summaries })
}

fn histogram_svg(path: &Path, title: &str, series: &[(&str, Vec<f64>)]) -> Result<()> {
    const BINS: usize = 20;
    let plot_err = |e: &dyn std::fmt::Display| Error::Plot(e.to_string());
    let all: Vec<f64> = series.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    let (mut lo, mut hi) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if all.is_empty() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / BINS as f64;
    let counts: Vec<Vec<usize>> = series
        .iter()
        .map(|(_, v)| {
            let mut c = vec![0; BINS];
            for &x in v {
                c[(((x - lo) / width) as usize).min(BINS - 1)] += 1;
            }
            c
        })
        .collect();
    let top = counts.iter().flatten().copied().max().unwrap_or(0).max(1);

    let root = SVGBackend::new(path, (640, 400)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(32)
        .y_label_area_size(40)
        .build_cartesian_2d(lo..hi, 0usize..top + 1)
        .map_err(|e| plot_err(&e))?;
    chart.configure_mesh().y_desc("count").draw().map_err(|e| plot_err(&e))?;
    for (k, ((name, _), c)) in series.iter().zip(&counts).enumerate() {
        let color = Palette99::pick(k).mix(0.6);
        chart
            .draw_series(c.iter().enumerate().map(|(i, &n)| {
                let x0 = lo + i as f64 * width;
                Rectangle::new([(x0, 0), (x0 + width, n)], color.filled())
            }))
            .map_err(|e| plot_err(&e))?
            .label(*name)
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 10, y + 5)], color.filled()));
    }
    chart.configure_series_labels().background_style(WHITE).border_style(BLACK).draw().map_err(|e| plot_err(&e))?;
    root.present().map_err(|e| plot_err(&e))?;
    Ok(())
}
