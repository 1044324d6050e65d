//! Cell localization: tiled Otsu binarization, opening and erosion to clean
//! up and separate cells, then a marker-controlled watershed over the
//! distance transform. Every watershed region yields one bounding box.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::imaging::{
    connected_components, distance_transform, equalize_histogram, erode_iter, open, tiled_otsu,
    to_grayscale, BinaryMask, Connectivity, DistanceMap, LabelMap, Plane, Polarity, RgbImage,
    StructuringElement,
};

/// Free parameters of the localization pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    /// Tiled-Otsu grid as (rows, cols).
    pub grid: (usize, usize),
    pub open_se: StructuringElement,
    pub erode_se: StructuringElement,
    pub erode_iters: usize,
    /// Sure-foreground level as a fraction of each component's peak distance.
    pub marker_fraction: f64,
    /// Regions smaller than this fraction of the median region area are dropped.
    pub min_area_fraction: f64,
    /// Cells are darker than the background in bright-field smears.
    pub polarity: Polarity,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            grid: (4, 4),
            open_se: StructuringElement::disk(2),
            erode_se: StructuringElement::disk(1),
            erode_iters: 2,
            marker_fraction: 0.5,
            min_area_fraction: 0.15,
            polarity: Polarity::Below,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.0 == 0 || self.grid.1 == 0 {
            return Err(Error::Config("grid dimensions must be at least 1".into()));
        }
        if self.open_se.radius == 0 || self.erode_se.radius == 0 {
            return Err(Error::Config(
                "structuring element radius must be at least 1".into(),
            ));
        }
        if self.erode_iters == 0 {
            return Err(Error::Config("erode_iters must be at least 1".into()));
        }
        if !(self.marker_fraction > 0.0 && self.marker_fraction < 1.0) {
            return Err(Error::Config("marker_fraction must lie in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.min_area_fraction) {
            return Err(Error::Config("min_area_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One localized cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellDetection {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub label_id: u32,
    pub area: usize,
}

/// Heap entry: highest distance first, then insertion order.
#[derive(PartialEq)]
struct FloodEntry {
    priority: f64,
    seq: Reverse<u64>,
    idx: usize,
}

impl Eq for FloodEntry {}

impl Ord for FloodEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for FloodEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Priority flood from `markers` over the negated distance map, restricted
/// to `mask` foreground with 8-connectivity.
///
/// Each foreground pixel takes the label of the basin that reaches it first;
/// pixels of components carrying no marker stay 0.
pub fn watershed(mask: &BinaryMask, markers: &LabelMap, dist: &DistanceMap) -> Result<LabelMap> {
    let (w, h) = (mask.width(), mask.height());
    if (markers.width(), markers.height()) != (w, h) || (dist.width(), dist.height()) != (w, h) {
        return Err(Error::DimensionMismatch {
            expected: w * h,
            actual: markers.width() * markers.height(),
        });
    }
    if markers.num_labels() == 0 {
        return Err(Error::NoSeeds);
    }
    let mut labels = markers.as_plane().clone();
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    for (idx, &label) in labels.as_slice().iter().enumerate() {
        if label == 0 {
            continue;
        }
        if !mask.as_slice()[idx] {
            return Err(Error::Config(format!(
                "marker at ({}, {}) lies on background",
                idx % w,
                idx / w
            )));
        }
        heap.push(FloodEntry {
            priority: dist.as_slice()[idx],
            seq: Reverse(seq),
            idx,
        });
        seq += 1;
    }

    let offsets = Connectivity::Eight.offsets();
    while let Some(FloodEntry { idx, .. }) = heap.pop() {
        let label = labels.as_slice()[idx];
        let (x, y) = ((idx % w) as isize, (idx / w) as isize);
        for &(dx, dy) in offsets {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                continue;
            }
            let n = ny as usize * w + nx as usize;
            if mask.as_slice()[n] && labels.as_slice()[n] == 0 {
                labels.as_mut_slice()[n] = label;
                heap.push(FloodEntry {
                    priority: dist.as_slice()[n],
                    seq: Reverse(seq),
                    idx: n,
                });
                seq += 1;
            }
        }
    }
    Ok(LabelMap::from_parts_unchecked(labels, markers.num_labels()))
}

/// Seeds: per connected component, the pixels whose distance reaches
/// `marker_fraction` of that component's peak; each connected piece of this
/// sure foreground becomes one marker.
pub fn make_markers(mask: &BinaryMask, dist: &DistanceMap, marker_fraction: f64) -> LabelMap {
    let components = connected_components(mask, Connectivity::Eight);
    let mut peak = vec![0.0f64; components.num_labels() as usize + 1];
    for (&c, &d) in components.as_plane().as_slice().iter().zip(dist.as_slice()) {
        if c != 0 && d > peak[c as usize] {
            peak[c as usize] = d;
        }
    }
    let sure = Plane::from_fn(mask.width(), mask.height(), |x, y| {
        let c = components.get(x, y);
        c != 0 && dist.get(x, y) >= marker_fraction * peak[c as usize]
    });
    connected_components(&sure, Connectivity::Eight)
}

/// Intermediate rasters of [`localize_cells`], useful for debugging overlays.
#[derive(Debug, Clone)]
pub struct LocalizationStages {
    pub binary: BinaryMask,
    pub cleaned: BinaryMask,
    pub labels: LabelMap,
}

/// Localize every cell of a (preprocessed) smear image.
///
/// Returned boxes are sorted by `(y, x)`. An image with no foreground left
/// after morphology yields an empty list.
pub fn localize_cells(img: &RgbImage, cfg: &SegmentationConfig) -> Result<Vec<CellDetection>> {
    localize_cells_with_stages(img, cfg).map(|(cells, _)| cells)
}

pub fn localize_cells_with_stages(
    img: &RgbImage,
    cfg: &SegmentationConfig,
) -> Result<(Vec<CellDetection>, LocalizationStages)> {
    cfg.validate()?;
    let gray = equalize_histogram(&to_grayscale(img)).image;
    let binary = tiled_otsu(&gray, cfg.grid.0, cfg.grid.1, cfg.polarity)?;
    let opened = open(&binary, &cfg.open_se);
    let cleaned = erode_iter(&opened, &cfg.erode_se, cfg.erode_iters);
    if cleaned.count() == 0 {
        let labels = LabelMap::empty(img.width(), img.height());
        return Ok((
            Vec::new(),
            LocalizationStages {
                binary,
                cleaned,
                labels,
            },
        ));
    }
    let dist = distance_transform(&cleaned);
    let markers = make_markers(&cleaned, &dist, cfg.marker_fraction);
    let labels = watershed(&cleaned, &markers, &dist)?;
    let cells = detections_from_labels(&labels, cfg.min_area_fraction);
    Ok((
        cells,
        LocalizationStages {
            binary,
            cleaned,
            labels,
        },
    ))
}

/// Tight box per label, dropping labels below `min_area_fraction` of the
/// median area.
pub fn detections_from_labels(labels: &LabelMap, min_area_fraction: f64) -> Vec<CellDetection> {
    let n = labels.num_labels() as usize;
    let mut extent = vec![(usize::MAX, usize::MAX, 0usize, 0usize); n + 1];
    let mut area = vec![0usize; n + 1];
    for y in 0..labels.height() {
        for x in 0..labels.width() {
            let l = labels.get(x, y) as usize;
            if l == 0 {
                continue;
            }
            let e = &mut extent[l];
            e.0 = e.0.min(x);
            e.1 = e.1.min(y);
            e.2 = e.2.max(x);
            e.3 = e.3.max(y);
            area[l] += 1;
        }
    }
    let mut present: Vec<usize> = area[1..].iter().copied().filter(|&a| a > 0).collect();
    if present.is_empty() {
        return Vec::new();
    }
    present.sort_unstable();
    let mid = present.len() / 2;
    let median = if present.len() % 2 == 1 {
        present[mid] as f64
    } else {
        (present[mid - 1] + present[mid]) as f64 / 2.0
    };
    let min_area = min_area_fraction * median;

    let mut cells: Vec<CellDetection> = (1..=n)
        .filter(|&l| area[l] > 0 && area[l] as f64 >= min_area)
        .map(|l| {
            let (x0, y0, x1, y1) = extent[l];
            CellDetection {
                bbox: BoundingBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1),
                label_id: l as u32,
                area: area[l],
            }
        })
        .collect();
    cells.sort_by_key(|c| (c.bbox.y, c.bbox.x, c.label_id));
    cells
}
