//! Raster containers and the classical image-processing primitives used by
//! every pipeline stage.
//!
//! All rasters are row-major. Operations are pure functions returning new
//! rasters; nothing here holds mutable state.

mod components;
mod distance;
mod histogram;
pub mod io;
mod morphology;

pub use components::{connected_components, Connectivity};
pub use distance::distance_transform;
pub use histogram::{
    between_class_variance, binarize, equalize_histogram, histogram, otsu_threshold, tiled_otsu,
    to_grayscale, Equalized, Otsu, Polarity, DEGENERATE_TILE_VARIANCE, MIN_TILE_SIDE,
};
pub use morphology::{dilate, erode, erode_iter, open, SeShape, StructuringElement};

use crate::error::{Error, Result};

/// A single-channel row-major raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plane<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// 8-bit intensity image.
pub type GrayImage = Plane<u8>;
/// Foreground (`true`) / background mask.
pub type BinaryMask = Plane<bool>;
/// Per-pixel real-valued map, e.g. a distance transform.
pub type DistanceMap = Plane<f64>;

impl<T: Copy> Plane<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::Dimensions {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Raster filled with `value`. Panics on a zero dimension.
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(
            width > 0 && height > 0,
            "raster dimensions must be positive"
        );
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(
            width > 0 && height > 0,
            "raster dimensions must be positive"
        );
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Plane<U> {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copy of the sub-rectangle `[x, x+w) x [y, y+h)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        check_rect(x, y, w, h, self.width, self.height)?;
        let mut data = Vec::with_capacity(w * h);
        for row in y..y + h {
            let start = row * self.width + x;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }
}

impl BinaryMask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// `true` when every foreground pixel of `self` is also foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }
}

/// 8-bit RGB image, row-major interleaved `R,G,B`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(Error::Dimensions {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        check_rect(x, y, w, h, self.width, self.height)?;
        let mut data = Vec::with_capacity(w * h * 3);
        for row in y..y + h {
            let start = (row * self.width + x) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }
}

/// Region labels: 0 is background, `1..=num_labels` are regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    labels: Plane<u32>,
    num_labels: u32,
}

impl LabelMap {
    /// Validates that every value is within range and every id is used.
    pub fn new(labels: Plane<u32>, num_labels: u32) -> Result<Self> {
        let mut seen = vec![false; num_labels as usize + 1];
        for &v in labels.as_slice() {
            if v > num_labels {
                return Err(Error::LabelOutOfRange {
                    label: v as usize,
                    classes: num_labels as usize + 1,
                });
            }
            seen[v as usize] = true;
        }
        if let Some(missing) = seen.iter().skip(1).position(|s| !s) {
            return Err(Error::Config(format!("label {} never occurs", missing + 1)));
        }
        Ok(Self { labels, num_labels })
    }

    pub(crate) fn from_parts_unchecked(labels: Plane<u32>, num_labels: u32) -> Self {
        Self { labels, num_labels }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            labels: Plane::filled(width, height, 0),
            num_labels: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.labels.width()
    }

    pub fn height(&self) -> usize {
        self.labels.height()
    }

    pub fn num_labels(&self) -> u32 {
        self.num_labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels.get(x, y)
    }

    pub fn as_plane(&self) -> &Plane<u32> {
        &self.labels
    }

    /// Pixel count per label, indexed by id (entry 0 is background).
    pub fn areas(&self) -> Vec<usize> {
        let mut areas = vec![0usize; self.num_labels as usize + 1];
        for &v in self.labels.as_slice() {
            areas[v as usize] += 1;
        }
        areas
    }
}

pub(crate) fn check_rect(
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    width: usize,
    height: usize,
) -> Result<()> {
    if w == 0 || h == 0 {
        return Err(Error::DegenerateBox { w, h });
    }
    if x + w > width || y + h > height {
        return Err(Error::BoxOutOfBounds {
            x,
            y,
            w,
            h,
            width,
            height,
        });
    }
    Ok(())
}
