//! Removal of the dark vignette that surrounds the field of view when a
//! phone camera photographs the slide through the eyepiece.
//!
//! Two crops are applied in sequence: the bounding box of the largest bright
//! region (equalize, Otsu, connected components), then an edge-inward trim of
//! rows and columns that are still mostly dark.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::imaging::{
    binarize, connected_components, equalize_histogram, otsu_threshold, to_grayscale, Connectivity,
    GrayImage, Polarity, RgbImage,
};

pub const DEFAULT_DARK_CUTOFF: u8 = 40;
pub const DEFAULT_RATIO_CUTOFF: f64 = 0.5;
/// Inputs smaller than this on either side are rejected by the contour crop.
pub const MIN_FIELD_SIDE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// A pixel with gray value below this is dark.
    pub dark_cutoff: u8,
    /// Edge rows/columns with a dark fraction above this are trimmed.
    pub ratio_cutoff: f64,
    /// Microscope-camera input without a vignette: both crops are identity.
    pub skip_vignette: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            dark_cutoff: DEFAULT_DARK_CUTOFF,
            ratio_cutoff: DEFAULT_RATIO_CUTOFF,
            skip_vignette: false,
        }
    }
}

/// What [`preprocess_field`] cropped, in original-image coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropReport {
    pub original_size: (usize, usize),
    pub contour_crop_rect: BoundingBox,
    pub ratio_crop_rect: BoundingBox,
    pub dark_intensity_cutoff: u8,
    pub dark_ratio_cutoff: f64,
}

/// Crop to the bounding box of the largest bright (above-Otsu) region.
pub fn crop_largest_contour(img: &RgbImage) -> Result<(RgbImage, BoundingBox)> {
    if img.width() < MIN_FIELD_SIDE || img.height() < MIN_FIELD_SIDE {
        return Err(Error::Config(format!(
            "image {}x{} smaller than {MIN_FIELD_SIDE}x{MIN_FIELD_SIDE}",
            img.width(),
            img.height()
        )));
    }
    let rect = largest_bright_region(&to_grayscale(img))?;
    let cropped = img.crop(rect.x, rect.y, rect.w, rect.h)?;
    Ok((cropped, rect))
}

fn largest_bright_region(gray: &GrayImage) -> Result<BoundingBox> {
    let equalized = equalize_histogram(gray);
    let otsu = otsu_threshold(&equalized.image);
    if otsu.degenerate {
        // a constant frame is a single region: bright field or nothing
        return if otsu.threshold >= 128 {
            Ok(BoundingBox::full(gray.width(), gray.height()))
        } else {
            Err(Error::NoBrightField)
        };
    }
    let mask = binarize(&equalized.image, otsu.threshold, Polarity::Above);
    let labels = connected_components(&mask, Connectivity::Eight);
    let areas = labels.areas();
    let largest = (1..areas.len())
        .max_by(|&a, &b| areas[a].cmp(&areas[b]).then(b.cmp(&a)))
        .ok_or(Error::NoBrightField)? as u32;

    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..labels.height() {
        for x in 0..labels.width() {
            if labels.get(x, y) == largest {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    Ok(BoundingBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
}

/// Trim edge rows and columns whose dark fraction exceeds `ratio_cutoff`.
///
/// Rows are measured over the surviving columns and vice versa; the trim is
/// repeated until a full sweep removes nothing, so a second application is
/// always a no-op. Interior rows and columns are never removed.
pub fn crop_by_dark_ratio(
    img: &RgbImage,
    dark_cutoff: u8,
    ratio_cutoff: f64,
) -> Result<(RgbImage, BoundingBox)> {
    let gray = to_grayscale(img);
    let dark = |x: usize, y: usize| gray.get(x, y) < dark_cutoff;
    let row_dark = |y: usize, x0: usize, x1: usize| {
        (x0..x1).filter(|&x| dark(x, y)).count() as f64 / (x1 - x0) as f64
    };
    let col_dark = |x: usize, y0: usize, y1: usize| {
        (y0..y1).filter(|&y| dark(x, y)).count() as f64 / (y1 - y0) as f64
    };

    let (mut top, mut bottom, mut left, mut right) = (0, img.height(), 0, img.width());
    loop {
        let before = (top, bottom, left, right);
        while top < bottom && row_dark(top, left, right) > ratio_cutoff {
            top += 1;
        }
        while bottom > top && row_dark(bottom - 1, left, right) > ratio_cutoff {
            bottom -= 1;
        }
        if top == bottom {
            return Err(Error::NoContentRows);
        }
        while left < right && col_dark(left, top, bottom) > ratio_cutoff {
            left += 1;
        }
        while right > left && col_dark(right - 1, top, bottom) > ratio_cutoff {
            right -= 1;
        }
        if left == right {
            return Err(Error::NoContentColumns);
        }
        if before == (top, bottom, left, right) {
            break;
        }
    }
    let rect = BoundingBox::new(left, top, right - left, bottom - top);
    Ok((img.crop(rect.x, rect.y, rect.w, rect.h)?, rect))
}

/// Contour crop followed by the dark-ratio trim.
pub fn preprocess_field(img: &RgbImage, cfg: &PreprocessConfig) -> Result<(RgbImage, CropReport)> {
    let full = BoundingBox::full(img.width(), img.height());
    let mut report = CropReport {
        original_size: (img.width(), img.height()),
        contour_crop_rect: full,
        ratio_crop_rect: full,
        dark_intensity_cutoff: cfg.dark_cutoff,
        dark_ratio_cutoff: cfg.ratio_cutoff,
    };
    if cfg.skip_vignette {
        return Ok((img.clone(), report));
    }
    let (contour_img, contour_rect) = crop_largest_contour(img)?;
    let (final_img, inner) = crop_by_dark_ratio(&contour_img, cfg.dark_cutoff, cfg.ratio_cutoff)?;
    report.contour_crop_rect = contour_rect;
    report.ratio_crop_rect = contour_rect.offset(&inner);
    Ok((final_img, report))
}
