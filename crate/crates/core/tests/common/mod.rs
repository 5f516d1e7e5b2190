//! Reference implementations and generators shared by the integration tests.
#![allow(dead_code)]

use chromstraight::{BinaryMask, Histogram};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook Zhang-Suen on a zero-bordered byte grid.
pub fn reference_thin(mask: &BinaryMask) -> Vec<(usize, usize)> {
    let (w, h) = (mask.width(), mask.height());
    let (gw, gh) = (w + 2, h + 2);
    let mut g = vec![0u8; gw * gh];
    for y in 0..h {
        for x in 0..w {
            g[(y + 1) * gw + x + 1] = mask.get(x, y) as u8;
        }
    }
    loop {
        let mut removed = 0;
        for step in 0..2 {
            let mut marks = Vec::new();
            for y in 1..gh - 1 {
                for x in 1..gw - 1 {
                    if g[y * gw + x] == 0 {
                        continue;
                    }
                    let at = |dx: isize, dy: isize| g[(y as isize + dy) as usize * gw + (x as isize + dx) as usize];
                    let (p2, p3, p4, p5) = (at(0, -1), at(1, -1), at(1, 0), at(1, 1));
                    let (p6, p7, p8, p9) = (at(0, 1), at(-1, 1), at(-1, 0), at(-1, -1));
                    let seq = [p2, p3, p4, p5, p6, p7, p8, p9, p2];
                    let b: u8 = seq[..8].iter().sum();
                    let a = seq.windows(2).filter(|w| w[0] == 0 && w[1] == 1).count();
                    let (c, d) = if step == 0 { (p2 * p4 * p6, p4 * p6 * p8) } else { (p2 * p4 * p8, p2 * p6 * p8) };
                    if (2..=6).contains(&b) && a == 1 && c == 0 && d == 0 {
                        marks.push(y * gw + x);
                    }
                }
            }
            removed += marks.len();
            for i in marks {
                g[i] = 0;
            }
        }
        if removed == 0 {
            break;
        }
    }
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if g[(y + 1) * gw + x + 1] == 1 {
                out.push((x, y));
            }
        }
    }
    out
}

/// Exhaustive Otsu scan with exact rational comparison. Lower class `v < t`;
/// the first maximiser wins.
pub fn reference_otsu(bins: &[u64; 256]) -> Option<u8> {
    let n: u128 = bins.iter().map(|&c| c as u128).sum();
    let s: u128 = bins.iter().enumerate().map(|(v, &c)| v as u128 * c as u128).sum();
    let mut best: Option<(u8, u128, u128)> = None;
    let (mut n0, mut s0) = (0u128, 0u128);
    for t in 1..=255usize {
        n0 += bins[t - 1] as u128;
        s0 += (t - 1) as u128 * bins[t - 1] as u128;
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let d = (n * s0).abs_diff(n0 * s);
        let (num, den) = (d * d, n0 * n1);
        let better = match best {
            None => true,
            Some((_, bn, bd)) => num * bd > bn * den,
        };
        if better {
            best = Some((t as u8, num, den));
        }
    }
    best.map(|(t, _, _)| t)
}

/// Random histogram with between two and 256 populated bins and counts small
/// enough for exact u128 cross-multiplication.
pub fn random_histogram(rng: &mut ChaCha8Rng) -> Histogram {
    let mut bins = [0u64; 256];
    match rng.random_range(0..3) {
        0 => {
            for b in bins.iter_mut() {
                *b = rng.random_range(0..200);
            }
        }
        1 => {
            for _ in 0..rng.random_range(2..12) {
                bins[rng.random_range(0..256)] += rng.random_range(1..500);
            }
        }
        _ => {
            // two noisy modes
            let (m0, m1) = (rng.random_range(10..120usize), rng.random_range(130..250usize));
            for _ in 0..rng.random_range(500..3000) {
                let m = if rng.random_bool(0.3) { m0 } else { m1 };
                let v = (m as i64 + rng.random_range(-12..=12)).clamp(0, 255) as usize;
                bins[v] += 1;
            }
        }
    }
    if bins.iter().filter(|&&c| c > 0).count() < 2 {
        bins[0] += 1;
        bins[255] += 1;
    }
    Histogram::from_bins(bins)
}

/// Random 32x32 test mask: either thresholded smoothed noise (blobby shapes)
/// or sparse raw noise.
pub fn random_mask(seed: u64) -> BinaryMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 32;
    let noise: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
    if seed % 4 == 0 {
        let p = rng.random_range(0.3..0.7);
        return BinaryMask::from_fn(n, n, |x, y| noise[y * n + x] < p);
    }
    let r = rng.random_range(1..4i64);
    let level = rng.random_range(0.45..0.6);
    BinaryMask::from_fn(n, n, |x, y| {
        let (mut sum, mut cnt) = (0.0, 0.0);
        for dy in -r..=r {
            for dx in -r..=r {
                let (xx, yy) = (x as i64 + dx, y as i64 + dy);
                if (0..n as i64).contains(&xx) && (0..n as i64).contains(&yy) {
                    sum += noise[yy as usize * n + xx as usize];
                    cnt += 1.0;
                }
            }
        }
        sum / cnt > level
    })
}

pub fn mask_points(mask: &BinaryMask) -> Vec<(usize, usize)> {
    mask.foreground().map(|p| (p.x as usize, p.y as usize)).collect()
}
