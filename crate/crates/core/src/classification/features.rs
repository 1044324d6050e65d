//! The 30-value handcrafted descriptor of a cell crop.
//!
//! Layout:
//!
//! | index  | feature                                              |
//! |--------|------------------------------------------------------|
//! | 0..8   | red histogram, 8 bins of width 32, normalized        |
//! | 8..16  | green histogram                                      |
//! | 16..24 | blue histogram                                       |
//! | 24     | cell area fraction of the crop                       |
//! | 25     | cell perimeter / area                                |
//! | 26     | circularity `4 pi A / P^2`                           |
//! | 27     | mean gray level of the central half, in [0, 1]       |
//! | 28     | gray standard deviation of the central half, [0, 1]  |
//! | 29     | fraction of pixels with gray < 100 (stained chromatin)|
//!
//! The cell mask is the lower Otsu class of the crop's grayscale (cells are
//! darker than plasma); a constant crop has an empty mask and all shape
//! features equal to 0.

use std::f64::consts::PI;
use std::ops::Deref;

use super::crop::{CellCrop, CROP_SIZE};
use crate::imaging::{binarize, otsu_threshold, to_grayscale, Polarity};

pub const FEATURE_DIM: usize = 30;
pub const FEATURE_SPEC: &str = "hist8x3+shape3+stain3";
pub const DARK_PIXEL_LEVEL: u8 = 100;
const BINS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub fn extract_features(crop: &CellCrop) -> FeatureVector {
    let px = &crop.pixels;
    let n = (px.width() * px.height()) as f64;
    let mut f = [0.0; FEATURE_DIM];

    for p in px.pixels() {
        for c in 0..3 {
            f[c * BINS + p[c] as usize / 32] += 1.0;
        }
    }
    for v in &mut f[..3 * BINS] {
        *v /= n;
    }

    let gray = to_grayscale(px);
    let otsu = otsu_threshold(&gray);
    let (area, perimeter) = if otsu.degenerate {
        (0usize, 0usize)
    } else {
        let mask = binarize(&gray, otsu.threshold, Polarity::Below);
        let (w, h) = (mask.width(), mask.height());
        let inside = |x: isize, y: isize| {
            x >= 0 && y >= 0 && x < w as isize && y < h as isize && mask.get(x as usize, y as usize)
        };
        let mut area = 0;
        let mut perimeter = 0;
        for y in 0..h as isize {
            for x in 0..w as isize {
                if !inside(x, y) {
                    continue;
                }
                area += 1;
                if !(inside(x - 1, y) && inside(x + 1, y) && inside(x, y - 1) && inside(x, y + 1)) {
                    perimeter += 1;
                }
            }
        }
        (area, perimeter)
    };
    let (a, p) = (area as f64, perimeter as f64);
    f[24] = a / n;
    f[25] = if area > 0 { p / a } else { 0.0 };
    f[26] = if perimeter > 0 {
        4.0 * PI * a / (p * p)
    } else {
        0.0
    };

    let lo = CROP_SIZE / 4;
    let hi = CROP_SIZE - lo;
    let (mut sum, mut sum_sq, mut count) = (0.0, 0.0, 0.0);
    for y in lo.min(gray.height())..hi.min(gray.height()) {
        for x in lo.min(gray.width())..hi.min(gray.width()) {
            let v = gray.get(x, y) as f64 / 255.0;
            sum += v;
            sum_sq += v * v;
            count += 1.0;
        }
    }
    if count > 0.0 {
        let mean = sum / count;
        f[27] = mean;
        f[28] = (sum_sq / count - mean * mean).max(0.0).sqrt();
    }

    f[29] = gray
        .as_slice()
        .iter()
        .filter(|&&v| v < DARK_PIXEL_LEVEL)
        .count() as f64
        / n;
    FeatureVector(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;
    use crate::imaging::RgbImage;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    fn crop_of(pixels: RgbImage) -> CellCrop {
        CellCrop {
            pixels,
            source_box: BoundingBox::new(0, 0, 64, 64),
            source_image_id: "t".into(),
        }
    }

    #[test]
    fn white_crop() {
        let f = extract_features(&crop_of(RgbImage::filled(64, 64, [255; 3])));
        for c in 0..3 {
            let mut expect = [0.0; 8];
            expect[7] = 1.0;
            assert_eq!(&f[c * 8..c * 8 + 8], &expect);
        }
        assert_eq!(f[29], 0.0);
        assert_eq!(f[27], 1.0);
        assert_eq!(f[28], 0.0);
    }

    #[test]
    fn black_crop() {
        let f = extract_features(&crop_of(RgbImage::filled(64, 64, [0; 3])));
        for c in 0..3 {
            assert_eq!(f[c * 8], 1.0);
        }
        assert_eq!(f[29], 1.0);
        assert!(f.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn disk_shape_features() {
        let img = RgbImage::from_fn(64, 64, |x, y| {
            let (dx, dy) = (x as f64 - 31.5, y as f64 - 31.5);
            if dx * dx + dy * dy <= 400.0 {
                [230, 180, 190]
            } else {
                [245, 230, 235]
            }
        });
        let f = extract_features(&crop_of(img));
        let area = f[24] * 4096.0;
        assert!((area - PI * 400.0).abs() < 30.0, "{area}");
        // pixel perimeters undercount the true arc length, so circularity
        // of a digital disk sits a little above 1
        assert!(f[26] > 0.9 && f[26] < 1.6, "{}", f[26]);
    }

    proptest! {
        #[test]
        fn histograms_are_normalized(seed in any::<u64>()) {
            let mut rng = seeded(seed);
            let img = RgbImage::from_fn(64, 64, |_, _| [rng.random(), rng.random(), rng.random()]);
            let f = extract_features(&crop_of(img));
            for c in 0..3 {
                let s: f64 = f[c * 8..c * 8 + 8].iter().sum();
                prop_assert!((s - 1.0).abs() <= 1e-9);
            }
            prop_assert!(f.iter().all(|v| v.is_finite()));
        }
    }
}
