use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::imaging::RgbImage;

pub const CROP_SIZE: usize = 64;
pub const DEFAULT_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct CropConfig {
    /// Expansion per side as a fraction of the box size.
    pub margin: f64,
}

impl Default for CropConfig {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
        }
    }
}

/// A fixed-size patch around one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCrop {
    /// Always `CROP_SIZE x CROP_SIZE`.
    pub pixels: RgbImage,
    pub source_box: BoundingBox,
    pub source_image_id: String,
}

/// Expand `bbox` by the margin (clamped to the image) and resample the region
/// bilinearly to 64x64 with corner-aligned sampling.
pub fn extract_crop(
    img: &RgbImage,
    bbox: &BoundingBox,
    image_id: &str,
    cfg: &CropConfig,
) -> Result<CellCrop> {
    if !bbox.is_valid() {
        return Err(Error::DegenerateBox {
            w: bbox.w,
            h: bbox.h,
        });
    }
    if !bbox.fits_within(img.width(), img.height()) {
        return Err(Error::BoxOutOfBounds {
            x: bbox.x,
            y: bbox.y,
            w: bbox.w,
            h: bbox.h,
            width: img.width(),
            height: img.height(),
        });
    }
    let mx = (cfg.margin * bbox.w as f64).round() as usize;
    let my = (cfg.margin * bbox.h as f64).round() as usize;
    let x0 = bbox.x.saturating_sub(mx);
    let y0 = bbox.y.saturating_sub(my);
    let x1 = (bbox.right() + mx).min(img.width());
    let y1 = (bbox.bottom() + my).min(img.height());
    let region = BoundingBox::new(x0, y0, x1 - x0, y1 - y0);
    Ok(CellCrop {
        pixels: resize_bilinear(img, &region, CROP_SIZE, CROP_SIZE),
        source_box: *bbox,
        source_image_id: image_id.to_string(),
    })
}

fn resize_bilinear(img: &RgbImage, region: &BoundingBox, out_w: usize, out_h: usize) -> RgbImage {
    let scale = |out: usize, inp: usize| {
        if out > 1 {
            (inp - 1) as f64 / (out - 1) as f64
        } else {
            0.0
        }
    };
    let (sx, sy) = (scale(out_w, region.w), scale(out_h, region.h));
    RgbImage::from_fn(out_w, out_h, |ox, oy| {
        let fx = ox as f64 * sx;
        let fy = oy as f64 * sy;
        let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
        let (tx, ty) = (fx - ix as f64, fy - iy as f64);
        let ix1 = (ix + 1).min(region.w - 1);
        let iy1 = (iy + 1).min(region.h - 1);
        let px = |x: usize, y: usize| img.get(region.x + x, region.y + y);
        let (p00, p10, p01, p11) = (px(ix, iy), px(ix1, iy), px(ix, iy1), px(ix1, iy1));
        let mut out = [0u8; 3];
        for c in 0..3 {
            let top = p00[c] as f64 * (1.0 - tx) + p10[c] as f64 * tx;
            let bottom = p01[c] as f64 * (1.0 - tx) + p11[c] as f64 * tx;
            out[c] = (top * (1.0 - ty) + bottom * ty).round().clamp(0.0, 255.0) as u8;
        }
        out
    })
}
