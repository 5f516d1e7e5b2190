mod common;

use std::collections::BTreeMap;

use chromstraight::image::{histogram, smooth_histogram, GrayImage, Point};
use chromstraight::mask::{apply_mask, sample_mask, split_grid, NoiseParams, AXIS_BAND};
use chromstraight::metrics::{classification_metrics, dp_score, l_score, ma_score, ConfusionMatrix, DensityProfile};
use chromstraight::pipeline::{assign_folds, split_for, SampleKind, SampleManifest};
use chromstraight::segmentation::{fill_holes, otsu_threshold, BinaryMask};
use chromstraight::skeleton::{zhang_suen_thin, MedialAxis};
use chromstraight::synth::{sample_bend_spec, FACTOR_RANGE, MIN_SEPARATION};
use proptest::prelude::*;

fn mask_strategy() -> impl Strategy<Value = BinaryMask> {
    (4usize..24, 4usize..24).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<bool>(), w * h).prop_map(move |bits| BinaryMask::from_fn(w, h, |x, y| bits[y * w + x]))
    })
}

fn line_axis(x0: i32, y0: i32, x1: i32, y1: i32) -> MedialAxis {
    let n = (x1 - x0).abs().max((y1 - y0).abs());
    MedialAxis::new((0..=n).map(|k| Point::new(x0 + (x1 - x0) * k / n, y0 + (y1 - y0) * k / n)).collect()).unwrap()
}

proptest! {
    #[test]
    fn histogram_conserves_pixels(w in 1usize..40, h in 1usize..40, seed in any::<u64>()) {
        let img = GrayImage::from_fn(w, h, |x, y| (seed.wrapping_mul(x as u64 * 31 + y as u64 + 1) >> 56) as u8).unwrap();
        let hist = histogram(&img);
        prop_assert_eq!(hist.total(), (w * h) as u64);
        prop_assert_eq!(smooth_histogram(&hist, 1).unwrap(), hist);
    }

    #[test]
    fn otsu_lies_inside_populated_range(bins in proptest::collection::vec(0u64..50, 256)) {
        let mut arr = [0u64; 256];
        arr.copy_from_slice(&bins);
        let h = chromstraight::Histogram::from_bins(arr);
        match otsu_threshold(&h) {
            Ok(t) => {
                let lo = arr.iter().position(|&c| c > 0).unwrap();
                let hi = arr.iter().rposition(|&c| c > 0).unwrap();
                prop_assert!(lo < t as usize && t as usize <= hi);
            }
            Err(_) => prop_assert!(h.populated() < 2),
        }
    }

    #[test]
    fn fill_holes_monotone_and_idempotent(mask in mask_strategy()) {
        let filled = fill_holes(&mask);
        prop_assert!(mask.foreground().all(|p| filled.at(p)));
        prop_assert_eq!(fill_holes(&filled), filled);
    }

    #[test]
    fn thinning_stays_inside_and_is_idempotent(mask in mask_strategy()) {
        prop_assume!(mask.count() > 0);
        let skel = zhang_suen_thin(&mask).unwrap();
        prop_assert!(skel.points().iter().all(|&p| mask.at(p)));
        if !skel.is_empty() {
            prop_assert_eq!(zhang_suen_thin(&skel.to_mask()).unwrap(), skel);
        }
    }

    #[test]
    fn mask_sampling_is_exact(rows in 1usize..20, ratio in 0.0f64..=1.0, seed in any::<u64>()) {
        let grid = split_grid(rows * 4, 8, rows).unwrap();
        let spec = sample_mask(&grid, ratio, seed).unwrap();
        prop_assert_eq!(spec.masked.len(), (ratio * grid.cells() as f64).round() as usize);
        prop_assert!(spec.masked.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(spec.masked.iter().all(|&c| c < grid.cells()));
        prop_assert_eq!(sample_mask(&grid, ratio, seed).unwrap(), spec);
    }

    #[test]
    fn masking_keeps_unmasked_cells_and_axis_band(seed in any::<u64>(), x0 in 4i32..28, x1 in 4i32..28) {
        let grid = split_grid(64, 32, 8).unwrap();
        let img = GrayImage::from_fn(32, 64, |x, y| ((x * 7 + y * 3) % 251) as u8).unwrap();
        let axis = line_axis(x0, 0, x1, 63);
        let spec = sample_mask(&grid, 0.7, seed).unwrap();
        let out = apply_mask(&img, &grid, &spec, &axis, NoiseParams { mean: 120.0, stddev: 25.0 }, seed).unwrap();
        for y in 0..64 {
            for x in 0..32 {
                let cell = grid.cell_of(x, y);
                let near = axis.points().iter().any(|p| p.dist(Point::new(x as i32, y as i32)) <= AXIS_BAND);
                if !spec.masked.contains(&cell) || near {
                    prop_assert_eq!(out.get(x, y), img.get(x, y));
                }
            }
        }
    }

    #[test]
    fn collinear_axes_score_full(x0 in 0i32..50, y0 in 0i32..50, n in 7i32..80, dir in 0usize..4) {
        let (dx, dy) = [(0, 1), (1, 0), (1, 1), (-1, 1)][dir];
        let a = line_axis(x0, y0, x0 + dx * n, y0 + dy * n);
        prop_assert_eq!(ma_score(&a, 6).unwrap(), 100.0);
        prop_assert_eq!(ma_score(&a.reversed(), 6).unwrap(), 100.0);
        prop_assert_eq!(ma_score(&a.translated(5, -3), 6).unwrap(), 100.0);
    }

    #[test]
    fn length_and_profile_identities(len in 1usize..500, values in proptest::collection::vec(0.0f64..255.0, 1..100)) {
        prop_assert_eq!(l_score(len, len).unwrap(), 100.0);
        let p = DensityProfile { values };
        prop_assert_eq!(dp_score(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn classification_metrics_bounded(counts in proptest::collection::vec(0u64..20, 9)) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let rows: Vec<Vec<u64>> = counts.chunks(3).map(|c| c.to_vec()).collect();
        let m = classification_metrics(&ConfusionMatrix::from_rows(&rows).unwrap()).unwrap();
        for v in [m.accuracy, m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn bend_specs_are_valid(seed in any::<u64>()) {
        let s = sample_bend_spec(seed);
        s.validate().unwrap();
        prop_assert!((1..=3).contains(&s.control_points.len()));
        prop_assert!(s.factors.iter().all(|f| (FACTOR_RANGE.0..=FACTOR_RANGE.1).contains(f)));
        prop_assert!(s.control_points.windows(2).all(|w| w[1] - w[0] >= MIN_SEPARATION));
    }

    #[test]
    fn folds_never_split_groups(sizes in proptest::collection::vec(0usize..6, 1..40), seed in any::<u64>(), test_fold in 0usize..5) {
        let mut samples = Vec::new();
        for (g, &n) in sizes.iter().enumerate() {
            let gid = format!("r{g}");
            samples.push(SampleManifest::real(&gid, "x.png"));
            for k in 0..n {
                samples.push(SampleManifest { group_id: gid.clone(), kind: SampleKind::Synthetic, ..SampleManifest::real(&format!("{gid}_{k}"), "x.png") });
            }
        }
        let folds = assign_folds(&samples, 5, seed).unwrap();
        let mut seen = BTreeMap::new();
        for s in &samples {
            let split = split_for(folds[&s.group_id], test_fold, 5);
            prop_assert_eq!(*seen.entry(s.group_id.clone()).or_insert(split), split);
        }
    }
}
