//! Binary morphology. Pixels outside the raster count as background for
//! both erosion and dilation.

use serde::{Deserialize, Serialize};

use super::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeShape {
    /// Offsets with `dx² + dy² <= r²`.
    Disk,
    /// Full `(2r+1)²` block.
    Square,
    /// Horizontal and vertical arms of length `r`.
    Cross,
}

/// Structuring element; every footprint is symmetric about its center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuringElement {
    pub shape: SeShape,
    pub radius: usize,
}

impl StructuringElement {
    pub fn disk(radius: usize) -> Self {
        Self {
            shape: SeShape::Disk,
            radius,
        }
    }

    pub fn square(radius: usize) -> Self {
        Self {
            shape: SeShape::Square,
            radius,
        }
    }

    pub fn cross(radius: usize) -> Self {
        Self {
            shape: SeShape::Cross,
            radius,
        }
    }

    pub fn offsets(&self) -> Vec<(isize, isize)> {
        let r = self.radius as isize;
        let mut out = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                let inside = match self.shape {
                    SeShape::Disk => dx * dx + dy * dy <= r * r,
                    SeShape::Square => true,
                    SeShape::Cross => dx == 0 || dy == 0,
                };
                if inside {
                    out.push((dx, dy));
                }
            }
        }
        out
    }
}

fn apply(mask: &BinaryMask, se: &StructuringElement, erosion: bool) -> BinaryMask {
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let offsets = se.offsets();
    let src = mask.as_slice();
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        let (x, y) = (x as isize, y as isize);
        let probe = |&(dx, dy): &(isize, isize)| {
            let (nx, ny) = (x + dx, y + dy);
            nx >= 0 && ny >= 0 && nx < w && ny < h && src[(ny * w + nx) as usize]
        };
        if erosion {
            offsets.iter().all(probe)
        } else {
            offsets.iter().any(probe)
        }
    })
}

/// Foreground iff the whole footprint lies on foreground.
pub fn erode(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    apply(mask, se, true)
}

/// Foreground iff the footprint touches foreground.
pub fn dilate(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    apply(mask, se, false)
}

/// Erosion followed by dilation with the same element.
pub fn open(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    dilate(&erode(mask, se), se)
}

pub fn erode_iter(mask: &BinaryMask, se: &StructuringElement, iterations: usize) -> BinaryMask {
    (0..iterations).fold(mask.clone(), |m, _| erode(&m, se))
}
