//! Intensity statistics: grayscale conversion, histogram equalization and
//! Otsu thresholding (global and tiled).

use super::{BinaryMask, GrayImage, Plane, RgbImage};
use crate::error::{Error, Result};

/// Tiles whose best between-class variance falls below this value
/// (intensity² units) use the global threshold instead.
pub const DEGENERATE_TILE_VARIANCE: f64 = 1.0;

/// Smallest allowed tile side for [`tiled_otsu`].
pub const MIN_TILE_SIDE: usize = 8;

/// ITU-R 601 luma, rounded half-up in exact integer arithmetic.
pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    let data = img
        .pixels()
        .map(|[r, g, b]| {
            let weighted = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
            ((weighted + 500) / 1000).min(255) as u8
        })
        .collect();
    Plane::new(img.width(), img.height(), data).expect("dimensions preserved")
}

pub fn histogram(img: &GrayImage) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &v in img.as_slice() {
        hist[v as usize] += 1;
    }
    hist
}

/// Result of [`equalize_histogram`].
#[derive(Debug, Clone, PartialEq)]
pub struct Equalized {
    pub image: GrayImage,
    /// Set for constant images, which are returned unchanged.
    pub degenerate: bool,
}

/// Classic cdf remapping `round(255 (cdf(v) - cdf_min) / (N - cdf_min))`.
pub fn equalize_histogram(img: &GrayImage) -> Equalized {
    let hist = histogram(img);
    let n = img.len() as u64;
    let mut cdf = [0u64; 256];
    let mut acc = 0;
    for (v, &count) in hist.iter().enumerate() {
        acc += count;
        cdf[v] = acc;
    }
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    if cdf_min == n {
        return Equalized {
            image: img.clone(),
            degenerate: true,
        };
    }
    let denom = n - cdf_min;
    let mut lut = [0u8; 256];
    for v in 0..256 {
        let num = cdf[v].saturating_sub(cdf_min) * 255;
        lut[v] = ((2 * num + denom) / (2 * denom)) as u8;
    }
    Equalized {
        image: img.map(|v| lut[v as usize]),
        degenerate: false,
    }
}

/// Otsu threshold with its between-class variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Otsu {
    pub threshold: u8,
    pub variance: f64,
    /// The image was constant; `threshold` is that constant.
    pub degenerate: bool,
}

/// Between-class variance `w0 w1 (mu0 - mu1)^2` for the split `{<= t} | {> t}`.
///
/// The numerator `N s0 - n0 S` is formed exactly in integers so identical
/// partitions always produce bit-identical values.
pub fn between_class_variance(hist: &[u64; 256], t: u8) -> f64 {
    let (mut n0, mut s0, mut n, mut s) = (0u64, 0u64, 0u64, 0u64);
    for (v, &count) in hist.iter().enumerate() {
        if v <= t as usize {
            n0 += count;
            s0 += count * v as u64;
        }
        n += count;
        s += count * v as u64;
    }
    variance_from_sums(n0, s0, n, s)
}

#[inline]
fn variance_from_sums(n0: u64, s0: u64, n: u64, s: u64) -> f64 {
    let n1 = n - n0;
    if n0 == 0 || n1 == 0 {
        return 0.0;
    }
    let num = n as i128 * s0 as i128 - n0 as i128 * s as i128;
    let num = num as f64;
    let nf = n as f64;
    num * num / (nf * nf * n0 as f64 * n1 as f64)
}

fn otsu_from_histogram(hist: &[u64; 256]) -> Otsu {
    let n: u64 = hist.iter().sum();
    let s: u64 = hist.iter().enumerate().map(|(v, &c)| v as u64 * c).sum();
    let (mut n0, mut s0) = (0u64, 0u64);
    let mut best = Otsu {
        threshold: 0,
        variance: 0.0,
        degenerate: false,
    };
    for t in 0..256usize {
        n0 += hist[t];
        s0 += hist[t] * t as u64;
        let var = variance_from_sums(n0, s0, n, s);
        if var > best.variance {
            best.threshold = t as u8;
            best.variance = var;
        }
    }
    if best.variance == 0.0 {
        // only a constant image has no split with positive variance
        let constant = hist.iter().position(|&c| c > 0).unwrap_or(0);
        best.threshold = constant as u8;
        best.degenerate = true;
    }
    best
}

/// Smallest threshold maximizing the between-class variance.
pub fn otsu_threshold(img: &GrayImage) -> Otsu {
    otsu_from_histogram(&histogram(img))
}

/// Which side of the threshold is foreground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// Pixels strictly greater than the threshold.
    Above,
    /// Pixels less than or equal to the threshold: the complement of
    /// [`Polarity::Above`], i.e. Otsu's lower class.
    Below,
}

impl Polarity {
    #[inline]
    fn test(self, v: u8, t: u8) -> bool {
        match self {
            Polarity::Above => v > t,
            Polarity::Below => v <= t,
        }
    }
}

pub fn binarize(img: &GrayImage, t: u8, polarity: Polarity) -> BinaryMask {
    img.map(|v| polarity.test(v, t))
}

/// Per-tile Otsu binarization on a `grid_rows x grid_cols` partition.
///
/// Tile edges are `floor(i * size / n)`. A tile whose best between-class
/// variance is below [`DEGENERATE_TILE_VARIANCE`] is binarized with the
/// global threshold; when the whole image is constant there is no contrast
/// anywhere and the mask is empty. Tile masks are concatenated without
/// blending.
pub fn tiled_otsu(
    img: &GrayImage,
    grid_rows: usize,
    grid_cols: usize,
    polarity: Polarity,
) -> Result<BinaryMask> {
    if grid_rows == 0 || grid_cols == 0 {
        return Err(Error::Config("grid dimensions must be at least 1".into()));
    }
    let (w, h) = (img.width(), img.height());
    let xs: Vec<usize> = (0..=grid_cols).map(|i| i * w / grid_cols).collect();
    let ys: Vec<usize> = (0..=grid_rows).map(|i| i * h / grid_rows).collect();
    let min_w = xs.windows(2).map(|p| p[1] - p[0]).min().unwrap_or(0);
    let min_h = ys.windows(2).map(|p| p[1] - p[0]).min().unwrap_or(0);
    if min_w < MIN_TILE_SIDE || min_h < MIN_TILE_SIDE {
        return Err(Error::GridTooFine {
            tile_w: min_w,
            tile_h: min_h,
        });
    }

    let global = otsu_threshold(img);
    let mut mask = BinaryMask::filled(w, h, false);
    for ty in ys.windows(2) {
        for tx in xs.windows(2) {
            let mut hist = [0u64; 256];
            for y in ty[0]..ty[1] {
                for x in tx[0]..tx[1] {
                    hist[img.get(x, y) as usize] += 1;
                }
            }
            let local = otsu_from_histogram(&hist);
            let t = if local.variance >= DEGENERATE_TILE_VARIANCE {
                local.threshold
            } else if global.degenerate {
                continue;
            } else {
                global.threshold
            };
            for y in ty[0]..ty[1] {
                for x in tx[0]..tx[1] {
                    mask.set(x, y, polarity.test(img.get(x, y), t));
                }
            }
        }
    }
    Ok(mask)
}
