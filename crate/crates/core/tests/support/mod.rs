//! Independent reference implementations used by the integration and
//! acceptance tests. Everything here is deliberately brute force.
#![allow(dead_code)]

use rand::Rng;
use smearscope_core::classification::{FeatureVector, SoftmaxClassifier, FEATURE_DIM};
use smearscope_core::evaluation::iou;
use smearscope_core::imaging::{BinaryMask, GrayImage};
use smearscope_core::rng::{seeded, SeededRng};
use smearscope_core::BoundingBox;

/// Exhaustive Otsu: the smallest `t` maximizing between-class variance,
/// compared as exact rationals. The variance at `t` is proportional to
/// `(N s0 - n0 S)^2 / (n0 n1)`; thresholds leaving a class empty are skipped.
/// A constant image returns its value.
pub fn otsu_oracle(img: &GrayImage) -> u8 {
    let mut hist = [0u128; 256];
    for &v in img.as_slice() {
        hist[v as usize] += 1;
    }
    let n: u128 = hist.iter().sum();
    let s: u128 = hist.iter().enumerate().map(|(v, &c)| v as u128 * c).sum();
    let mut best: Option<(u8, u128, u128)> = None;
    let (mut n0, mut s0) = (0u128, 0u128);
    for t in 0..=255u8 {
        n0 += hist[t as usize];
        s0 += t as u128 * hist[t as usize];
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let diff = (n * s0).abs_diff(n0 * s);
        let (num, den) = (diff * diff, n0 * n1);
        let better = match best {
            None => true,
            Some((_, bn, bd)) => num * bd > bn * den,
        };
        if better {
            best = Some((t, num, den));
        }
    }
    match best {
        Some((t, _, _)) => t,
        None => img.as_slice()[0],
    }
}

/// Random 64x64 gray images drawn from several regimes so that ties, few
/// levels and bimodal histograms all occur.
pub fn random_gray(rng: &mut SeededRng, w: usize, h: usize) -> GrayImage {
    match rng.random_range(0..5) {
        0 => GrayImage::from_fn(w, h, |_, _| rng.random()),
        1 => {
            let levels: Vec<u8> = (0..rng.random_range(1..=4)).map(|_| rng.random()).collect();
            GrayImage::from_fn(w, h, |_, _| levels[rng.random_range(0..levels.len())])
        }
        2 => {
            let (a, b): (u8, u8) = (rng.random_range(0..100), rng.random_range(150..=255));
            GrayImage::from_fn(w, h, |_, _| {
                let base = if rng.random_bool(0.4) { a } else { b };
                base.saturating_add(rng.random_range(0..20))
            })
        }
        3 => {
            let lo = rng.random_range(0..=250u8);
            let hi = lo + rng.random_range(0..=5u8);
            GrayImage::from_fn(w, h, |_, _| rng.random_range(lo..=hi))
        }
        _ => GrayImage::from_fn(w, h, |x, y| ((x * 3 + y * 5) % 256) as u8),
    }
}

/// Euclidean distance to the nearest background pixel, where pixels outside
/// the image count as background.
pub fn edt_oracle(mask: &BinaryMask, x: usize, y: usize) -> f64 {
    if !mask.get(x, y) {
        return 0.0;
    }
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let (x, y) = (x as i64, y as i64);
    let mut best = i64::MAX;
    for by in -1..=h {
        for bx in -1..=w {
            let outside = bx < 0 || by < 0 || bx >= w || by >= h;
            if outside || !mask.get(bx as usize, by as usize) {
                best = best.min((bx - x).pow(2) + (by - y).pow(2));
            }
        }
    }
    (best as f64).sqrt()
}

pub fn random_mask(rng: &mut SeededRng, max_side: usize) -> BinaryMask {
    let w = rng.random_range(1..=max_side);
    let h = rng.random_range(1..=max_side);
    let p = rng.random_range(0.3..0.97);
    BinaryMask::from_fn(w, h, |_, _| rng.random_bool(p))
}

/// Maximum-cardinality matching over pairs with IoU above `thresh`,
/// by exhaustive search.
pub fn max_matching_oracle(gt: &[BoundingBox], pred: &[BoundingBox], thresh: f64) -> usize {
    fn go(
        i: usize,
        gt: &[BoundingBox],
        pred: &[BoundingBox],
        used: &mut [bool],
        thresh: f64,
    ) -> usize {
        if i == gt.len() {
            return 0;
        }
        let mut best = go(i + 1, gt, pred, used, thresh);
        for p in 0..pred.len() {
            if !used[p] && iou(&gt[i], &pred[p]) > thresh {
                used[p] = true;
                best = best.max(1 + go(i + 1, gt, pred, used, thresh));
                used[p] = false;
            }
        }
        best
    }
    go(0, gt, pred, &mut vec![false; pred.len()], thresh)
}

/// Up to `max_n` boxes clustered in a small arena so that overlaps are common.
pub fn random_boxes(rng: &mut SeededRng, max_n: usize) -> Vec<BoundingBox> {
    (0..rng.random_range(0..=max_n))
        .map(|_| {
            BoundingBox::new(
                rng.random_range(0..12),
                rng.random_range(0..12),
                rng.random_range(4..=12),
                rng.random_range(4..=12),
            )
        })
        .collect()
}

pub fn random_features(rng: &mut SeededRng) -> FeatureVector {
    let mut f = [0.0; FEATURE_DIM];
    for v in &mut f {
        *v = rng.random_range(-2.0..2.0);
    }
    FeatureVector(f)
}

/// Largest relative error between the analytic gradient and central finite
/// differences of the loss, over every weight and bias.
pub fn gradient_check(
    clf: &SoftmaxClassifier,
    data: &[(FeatureVector, usize)],
    l2: f64,
    h: f64,
) -> f64 {
    let (_, grad) = clf.loss_and_gradient(data, l2);
    let rel = |analytic: f64, numeric: f64| {
        (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
    };
    let mut worst = 0.0f64;
    let mut probe = clf.clone();
    for c in 0..clf.weights().len() {
        for j in 0..clf.dim() {
            let orig = clf.weights()[c][j];
            probe.weights_mut()[c][j] = orig + h;
            let up = probe.loss(data, l2);
            probe.weights_mut()[c][j] = orig - h;
            let down = probe.loss(data, l2);
            probe.weights_mut()[c][j] = orig;
            worst = worst.max(rel(grad.weights[c][j], (up - down) / (2.0 * h)));
        }
        let orig = clf.bias()[c];
        probe.bias_mut()[c] = orig + h;
        let up = probe.loss(data, l2);
        probe.bias_mut()[c] = orig - h;
        let down = probe.loss(data, l2);
        probe.bias_mut()[c] = orig;
        worst = worst.max(rel(grad.bias[c], (up - down) / (2.0 * h)));
    }
    worst
}

/// One random gradient-check configuration: class count, batch, parameters
/// and regularization all vary with the seed.
pub fn random_gradient_case(seed: u64) -> (SoftmaxClassifier, Vec<(FeatureVector, usize)>, f64) {
    let mut rng = seeded(seed);
    let k = rng.random_range(2..=6);
    let names = (0..k).map(|i| format!("c{i}")).collect();
    let mut clf = SoftmaxClassifier::seeded_init(names, FEATURE_DIM, seed);
    for row in clf.weights_mut() {
        for w in row.iter_mut() {
            *w = rng.random_range(-0.5..0.5);
        }
    }
    for b in clf.bias_mut() {
        *b = rng.random_range(-1.0..1.0);
    }
    let n = rng.random_range(1..=16);
    let data = (0..n)
        .map(|_| (random_features(&mut rng), rng.random_range(0..k)))
        .collect();
    let l2 = if rng.random_bool(0.5) {
        0.0
    } else {
        rng.random_range(0.0..0.1)
    };
    (clf, data, l2)
}

/// Two disks of radius 8 whose centres are 14 px apart.
pub fn merged_disks() -> BinaryMask {
    let centers = [(16.0, 16.0), (30.0, 16.0)];
    BinaryMask::from_fn(48, 32, |x, y| {
        centers.iter().any(|&(cx, cy): &(f64, f64)| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            dx * dx + dy * dy <= 64.0
        })
    })
}
