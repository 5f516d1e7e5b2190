//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chromstraight::fixtures::{striped_bar, FixtureParams};
use chromstraight::image::{GrayImage, Point};
use chromstraight::mask::{apply_mask, sample_mask, split_grid, NoiseParams, AXIS_BAND};
use chromstraight::metrics::{
    chromosome_axis, classification_metrics, dp_score, l_score, ma_score, score_pair, sobel_score, sobel_score_image,
    ConfusionMatrix, DensityProfile, SOBEL_LAMBDA,
};
use chromstraight::par::{par_map, Execution};
use chromstraight::pipeline::{assign_folds, sample_seed, split_for, SampleKind, SampleManifest};
use chromstraight::segmentation::{otsu_threshold, segment, BinaryMask, Polarity};
use chromstraight::skeleton::{zhang_suen_thin, MedialAxis};
use chromstraight::straighten::{straighten_ppa, PpaParams};
use chromstraight::synth::{generate_bent, sample_bend_spec, MIN_SOURCE_MA};
use chromstraight::Error;
use common::{mask_points, random_histogram, random_mask, reference_otsu, reference_thin};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let t = Instant::now();
    let o = f();
    (o, t.elapsed())
}

fn skeleton_oracle() -> Outcome {
    let masks: Vec<BinaryMask> = (0..).map(random_mask).filter(|m| m.count() > 0).take(50).collect();
    let expected: Vec<_> = masks.iter().map(reference_thin).collect();
    let start = Instant::now();
    let mut mismatched = 0;
    let mut not_idempotent = 0;
    for (m, e) in masks.iter().zip(&expected) {
        let s = zhang_suen_thin(m).expect("non-empty mask");
        if mask_points(&s.to_mask()) != *e {
            mismatched += 1;
        }
        if !s.is_empty() && zhang_suen_thin(&s.to_mask()).expect("non-empty skeleton") != s {
            not_idempotent += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: mismatched == 0 && not_idempotent == 0 && secs < 5.0,
        detail: format!("50 masks, {mismatched} mismatched, {not_idempotent} not idempotent, thinning {secs:.3}s (limit 5s)"),
    }
}

fn otsu_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let hists: Vec<_> = (0..1000).map(|_| random_histogram(&mut rng)).collect();
    let start = Instant::now();
    let ours: Vec<Option<u8>> = hists.iter().map(|h| otsu_threshold(h).ok()).collect();
    let secs = start.elapsed().as_secs_f64();
    let wrong = hists.iter().zip(&ours).filter(|(h, o)| reference_otsu(h.bins()) != **o).count();
    Outcome { pass: wrong == 0 && secs < 1.0, detail: format!("1000 histograms, {wrong} disagreements, {secs:.3}s (limit 1s)") }
}

fn metric_suite() -> Outcome {
    let line = MedialAxis::new((0..60).map(|y| Point::new(7, y)).collect()).expect("vertical line");
    let diag = MedialAxis::new((0..60).map(|k| Point::new(k, k)).collect()).expect("diagonal line");
    let p = DensityProfile { values: (0..40).map(|i| (i * 6 % 256) as f64).collect() };
    let cm = ConfusionMatrix::from_rows(&[vec![4, 0, 0], vec![0, 9, 0], vec![0, 0, 2]]).expect("square");
    let m = classification_metrics(&cm).expect("non-empty");
    let grid = split_grid(128, 32, 16).expect("grid");
    let checks = [
        ("l_score(120,120)=100", l_score(120, 120).ok() == Some(100.0)),
        ("ma_score(vertical)=100", ma_score(&line, 6).ok() == Some(100.0)),
        ("ma_score(diagonal)=100", ma_score(&diag, 6).ok() == Some(100.0)),
        ("dp_score(p,p)=0", dp_score(&p, &p).ok() == Some(0.0)),
        ("classification(diagonal)=1", [m.accuracy, m.precision, m.recall, m.f1] == [1.0; 4]),
        ("sobel(background)=0", sobel_score(&BinaryMask::new(32, 128), &grid, SOBEL_LAMBDA).ok() == Some(0.0)),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    Outcome { pass: failed.is_empty(), detail: format!("{} exact checks, failed: {:?}", checks.len(), failed) }
}

struct FixtureResult {
    ma: f64,
    l: f64,
    sobel_dropped: bool,
}

fn straightening_suite() -> Outcome {
    let start = Instant::now();
    let params = FixtureParams::default();
    // sources must satisfy the bending precondition; count the ones that do not
    let mut sources = Vec::new();
    let mut skipped = 0;
    let mut seed = 0u64;
    while sources.len() < 100 {
        let bar = striped_bar(&params, seed);
        let straight = chromosome_axis(&bar, Polarity::DarkOnLight).and_then(|(_, a)| ma_score(&a, 6)).map(|s| s >= MIN_SOURCE_MA);
        if matches!(straight, Ok(true)) {
            sources.push((seed, bar));
        } else {
            skipped += 1;
        }
        seed += 1;
    }
    let results = par_map(&sources, Execution::Parallel, |(seed, bar)| -> Result<FixtureResult, Error> {
        let mask = segment(bar, Polarity::DarkOnLight)?;
        let bent = generate_bent(bar, &mask, &sample_bend_spec(sample_seed(7, &format!("bend{seed}"))))?;
        let out = straighten_ppa(&bent, &PpaParams::default())?;
        let report = score_pair("fixture", &bent, &out.image, Some(bar), Polarity::DarkOnLight)?;
        let (bent_mask, _) = chromosome_axis(&bent, Polarity::DarkOnLight)?;
        Ok(FixtureResult {
            ma: report.ma_score,
            l: report.l_score,
            sobel_dropped: report.sobel_score < sobel_score_image(&bent_mask, SOBEL_LAMBDA),
        })
    });
    let secs = start.elapsed().as_secs_f64();
    let errors = results.iter().filter(|r| r.is_err()).count();
    let ok: Vec<&FixtureResult> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let n = results.len() as f64;
    // a fixture that fails to straighten scores 0 on every count
    let mean_ma = ok.iter().map(|r| r.ma).sum::<f64>() / n;
    let mean_l = ok.iter().map(|r| r.l).sum::<f64>() / n;
    let dropped = ok.iter().filter(|r| r.sobel_dropped).count();
    Outcome {
        pass: mean_ma >= 93.0 && mean_l >= 90.0 && dropped as f64 >= 0.95 * n && secs < 60.0,
        detail: format!(
            "100 fixtures ({skipped} non-straight sources skipped, {errors} errors): mean MA {mean_ma:.2} (>= 93), mean L {mean_l:.2} (>= 90), \
             Sobel dropped on {dropped}/100 (>= 95), {secs:.1}s (limit 60s)"
        ),
    }
}

fn masking_contract() -> Outcome {
    let grid = split_grid(128, 32, 16).expect("grid");
    let seeds: Vec<u64> = (0..10_000).collect();
    // wavy axis through both columns
    let mut pts: Vec<Point> = Vec::new();
    for y in 0..128 {
        let x = 16 + (6.0 * (y as f64 / 18.0).sin()).round() as i32;
        if let Some(&last) = pts.last() {
            let mut cx = last.x;
            while (x - cx).abs() > 1 {
                cx += (x - cx).signum();
                pts.push(Point::new(cx, y - 1));
            }
        }
        pts.push(Point::new(x, y));
    }
    let axis = MedialAxis::new(pts).expect("8-connected axis");
    let img = GrayImage::from_fn(32, 128, |x, y| ((x * 13 + y * 7) % 200 + 20) as u8).expect("image");
    let band: Vec<(usize, usize)> = (0..128)
        .flat_map(|y| (0..32).map(move |x| (x, y)))
        .filter(|&(x, y)| axis.points().iter().any(|p| p.dist(Point::new(x as i32, y as i32)) <= AXIS_BAND))
        .collect();

    let per_seed = par_map(&seeds, Execution::Parallel, |&seed| {
        let spec = sample_mask(&grid, 0.70, seed).expect("valid ratio");
        let out = apply_mask(&img, &grid, &spec, &axis, NoiseParams { mean: 200.0, stddev: 25.0 }, seed).expect("mask");
        let band_ok = band.iter().all(|&(x, y)| out.get(x, y) == img.get(x, y));
        let noised = band.len() < 32 * 128 && spec.masked.iter().any(|&c| {
            let (x0, y0, x1, y1) = grid.cell_rect(c);
            (y0..y1).any(|y| (x0..x1).any(|x| out.get(x, y) != img.get(x, y)))
        });
        (spec.masked, band_ok && noised)
    });
    let mut freq = vec![0usize; grid.cells()];
    let mut wrong_count = 0;
    let mut band_broken = 0;
    for (masked, ok) in &per_seed {
        if masked.len() != 22 {
            wrong_count += 1;
        }
        for &c in masked {
            freq[c] += 1;
        }
        if !ok {
            band_broken += 1;
        }
    }
    let target = 22.0 / 32.0;
    let worst = freq.iter().map(|&f| (f as f64 / seeds.len() as f64 - target).abs()).fold(0.0, f64::max);
    Outcome {
        pass: wrong_count == 0 && worst <= 0.02 && band_broken == 0,
        detail: format!(
            "10^4 seeds: {wrong_count} with a count other than 22, worst cell frequency deviation {worst:.4} (<= 0.02), \
             {band_broken} seeds with an altered axis band"
        ),
    }
}

fn fold_integrity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut violations = 0;
    for _ in 0..1000 {
        let mut samples = Vec::new();
        for g in 0..rng.random_range(1..60) {
            let gid = format!("chr{g}");
            samples.push(SampleManifest::real(&gid, "x.png"));
            for k in 0..rng.random_range(0..8) {
                samples.push(SampleManifest {
                    group_id: gid.clone(),
                    kind: SampleKind::Synthetic,
                    ..SampleManifest::real(&format!("{gid}_bend{k}"), "x.png")
                });
            }
        }
        samples.shuffle(&mut rng);
        let folds = assign_folds(&samples, 5, rng.random()).expect("folds");
        let test_fold = rng.random_range(0..5);
        let mut seen: BTreeMap<&str, (usize, _)> = BTreeMap::new();
        for s in &samples {
            let f = folds[&s.group_id];
            let here = (f, split_for(f, test_fold, 5));
            if *seen.entry(s.group_id.as_str()).or_insert(here) != here {
                violations += 1;
            }
        }
    }
    Outcome { pass: violations == 0, detail: format!("1000 random manifests, {violations} group(s) split across folds") }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 6] = [
        ("skeleton oracle", skeleton_oracle),
        ("otsu oracle", otsu_oracle),
        ("metric unit suite", metric_suite),
        ("straightening fixtures", straightening_suite),
        ("masking contract", masking_contract),
        ("fold integrity", fold_integrity),
    ];
    let mut failed = 0;
    println!("\nacceptance criteria");
    for (name, f) in criteria {
        let (o, t) = timed(f);
        println!("{} {name}: {} [{:.2}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail, t.as_secs_f64());
        failed += !o.pass as usize;
    }
    println!("{} of {} criteria passed\n", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
