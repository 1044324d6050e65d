//! Annotation manifests and the seeded synthetic smear generator.
//!
//! Manifest JSON (paths are relative to the manifest's directory):
//!
//! ```json
//! {"format":"smearscope-manifest-v1",
//!  "metadata":{"source":"synthetic","stain":"giemsa","magnification":null},
//!  "images":[{"image_id":"img_0000","path":"img_0000.png","width":800,"height":600,
//!             "cells":[{"x":10,"y":12,"w":30,"h":28,"label":"ring"}]}]}
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classification::StageLabel;
use crate::error::{Error, Result};
use crate::evaluation::iou;
use crate::geometry::BoundingBox;
use crate::imaging::{io, RgbImage};
use crate::rng::{seeded, standard_normal, SeededRng};

pub const MANIFEST_FORMAT: &str = "smearscope-manifest-v1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellAnnotation {
    #[serde(flatten)]
    pub bbox: BoundingBox,
    pub label: StageLabel,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestMetadata {
    pub source: Option<String>,
    pub stain: Option<String>,
    pub magnification: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub image_id: String,
    pub path: String,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<CellAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub metadata: ManifestMetadata,
    pub images: Vec<ImageEntry>,
    /// Directory that relative image paths resolve against.
    pub base_dir: PathBuf,
}

#[derive(Serialize)]
struct ManifestOut<'a> {
    format: &'static str,
    metadata: &'a ManifestMetadata,
    images: &'a [ImageEntry],
}

#[derive(Deserialize)]
struct RawManifest {
    format: String,
    #[serde(default)]
    metadata: ManifestMetadata,
    images: Vec<RawImage>,
}

#[derive(Deserialize)]
struct RawImage {
    image_id: String,
    path: String,
    width: usize,
    height: usize,
    #[serde(default)]
    cells: Vec<RawCell>,
}

#[derive(Deserialize)]
struct RawCell {
    x: i64,
    y: i64,
    w: i64,
    h: i64,
    label: String,
}

impl Manifest {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let raw: RawManifest = serde_json::from_str(text).map_err(Error::ManifestJson)?;
        if raw.format != MANIFEST_FORMAT {
            return Err(Error::ManifestFormat(raw.format));
        }
        let mut seen = HashSet::new();
        let mut images = Vec::with_capacity(raw.images.len());
        for img in raw.images {
            if !seen.insert(img.image_id.clone()) {
                return Err(Error::DuplicateImageId(img.image_id));
            }
            let mut cells = Vec::with_capacity(img.cells.len());
            for (i, c) in img.cells.into_iter().enumerate() {
                let inside = c.x >= 0
                    && c.y >= 0
                    && c.w >= 1
                    && c.h >= 1
                    && c.x + c.w <= img.width as i64
                    && c.y + c.h <= img.height as i64;
                if !inside {
                    return Err(Error::CellOutOfBounds {
                        image_id: img.image_id,
                        cell: i,
                        x: c.x,
                        y: c.y,
                        w: c.w,
                        h: c.h,
                        width: img.width,
                        height: img.height,
                    });
                }
                let label = c.label.parse().map_err(|_| Error::UnknownLabel {
                    image_id: img.image_id.clone(),
                    cell: i,
                    label: c.label.clone(),
                })?;
                let bbox = BoundingBox::new(c.x as usize, c.y as usize, c.w as usize, c.h as usize);
                cells.push(CellAnnotation { bbox, label });
            }
            images.push(ImageEntry {
                image_id: img.image_id,
                path: img.path,
                width: img.width,
                height: img.height,
                cells,
            });
        }
        Ok(Self {
            metadata: raw.metadata,
            images,
            base_dir: base_dir.into(),
        })
    }

    pub fn to_json(&self) -> String {
        let out = ManifestOut {
            format: MANIFEST_FORMAT,
            metadata: &self.metadata,
            images: &self.images,
        };
        serde_json::to_string_pretty(&out).expect("manifest serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn image_path(&self, entry: &ImageEntry) -> PathBuf {
        self.base_dir.join(&entry.path)
    }

    /// Reads an entry's image and checks it against the declared size.
    pub fn load_image(&self, entry: &ImageEntry) -> Result<RgbImage> {
        let img = io::read(self.image_path(entry))?;
        if (img.width(), img.height()) != (entry.width, entry.height) {
            return Err(Error::Config(format!(
                "image {:?} is {}x{}, manifest says {}x{}",
                entry.image_id,
                img.width(),
                img.height(),
                entry.width,
                entry.height
            )));
        }
        Ok(img)
    }

    pub fn entry(&self, image_id: &str) -> Option<&ImageEntry> {
        self.images.iter().find(|e| e.image_id == image_id)
    }

    pub fn cell_count(&self) -> usize {
        self.images.iter().map(|e| e.cells.len()).sum()
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Manifest::parse(&text, base)
}

/// Synthetic smear parameters. Colors are RGB triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    /// Cells per image, drawn uniformly from this inclusive range.
    pub cells_min: usize,
    pub cells_max: usize,
    /// Cell semi-axis range in pixels.
    pub radius_min: usize,
    pub radius_max: usize,
    /// Fractions for healthy, ring, trophozoite, schizont, gametocyte.
    pub class_mix: [f64; 5],
    /// Largest allowed box IoU between any two cells.
    pub max_overlap: f64,
    pub background: [u8; 3],
    pub cell_color: [u8; 3],
    pub parasite_color: [u8; 3],
    /// Per-channel uniform jitter of cell and parasite colors.
    pub color_jitter: u8,
    pub noise_std: f64,
    /// Blend weight of the parasite color over the cell color.
    pub parasite_contrast: (f64, f64),
    /// Fraction of healthy cells carrying one small stain-debris speck, a
    /// common confounder for early ring forms.
    pub artifact_rate: f64,
    /// Exact per-class cell counts; overrides the count range and class mix.
    pub label_counts: Option<[usize; 5]>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 800,
            height: 600,
            cells_min: 100,
            cells_max: 122,
            radius_min: 13,
            radius_max: 19,
            class_mix: [0.8, 0.05, 0.05, 0.05, 0.05],
            max_overlap: 0.02,
            background: [245, 230, 235],
            cell_color: [230, 180, 190],
            parasite_color: [90, 60, 130],
            color_jitter: 8,
            noise_std: 4.0,
            parasite_contrast: (0.3, 1.0),
            artifact_rate: 0.1,
            label_counts: None,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.class_mix.iter().sum();
        if self.class_mix.iter().any(|f| f.is_nan() || *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "class_mix must be non-negative and sum to 1, got {:?}",
                self.class_mix
            )));
        }
        if self.radius_min == 0 || self.radius_min > self.radius_max {
            return Err(Error::Config(
                "radius range must be positive and ordered".into(),
            ));
        }
        let diameter = 2 * (self.radius_max + self.radius_max * 3 / 20);
        if diameter > self.width || diameter > self.height {
            return Err(Error::Config("cells do not fit in the image".into()));
        }
        if self.cells_min > self.cells_max {
            return Err(Error::Config("cells_min exceeds cells_max".into()));
        }
        if !(0.0..1.0).contains(&self.max_overlap) {
            return Err(Error::Config("max_overlap must lie in [0, 1)".into()));
        }
        let (lo, hi) = self.parasite_contrast;
        if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
            return Err(Error::Config(
                "parasite_contrast must be an ordered range in [0, 1]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.artifact_rate) {
            return Err(Error::Config("artifact_rate must lie in [0, 1]".into()));
        }
        if self.noise_std.is_nan() || self.noise_std < 0.0 {
            return Err(Error::Config("noise_std must be non-negative".into()));
        }
        Ok(())
    }
}

/// Renders one synthetic smear. Placement uses integer arithmetic and noise
/// uses only IEEE basic operations, so output is identical on every platform.
pub fn generate_smear(cfg: &SynthConfig) -> Result<(RgbImage, Vec<CellAnnotation>)> {
    cfg.validate()?;
    let mut rng = seeded(cfg.seed);
    let labels: Vec<StageLabel> = match cfg.label_counts {
        Some(counts) => {
            let mut labels: Vec<StageLabel> = StageLabel::ALL
                .iter()
                .zip(counts)
                .flat_map(|(l, n)| std::iter::repeat_n(*l, n))
                .collect();
            labels.shuffle(&mut rng);
            labels
        }
        None => {
            let count = rng.random_range(cfg.cells_min..=cfg.cells_max);
            (0..count)
                .map(|_| sample_label(&mut rng, &cfg.class_mix))
                .collect()
        }
    };

    let mut cells: Vec<CellAnnotation> = Vec::with_capacity(labels.len());
    for (index, label) in labels.into_iter().enumerate() {
        let bbox = place(&mut rng, cfg, &cells).ok_or(Error::CannotPlace { index })?;
        cells.push(CellAnnotation { bbox, label });
    }

    let mut img = RgbImage::filled(cfg.width, cfg.height, cfg.background);
    for cell in &cells {
        draw_cell(&mut img, cell, cfg, &mut rng);
    }
    if cfg.noise_std > 0.0 {
        add_noise(&mut img, cfg.noise_std, &mut rng);
    }
    Ok((img, cells))
}

fn sample_label(rng: &mut SeededRng, mix: &[f64; 5]) -> StageLabel {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (label, f) in StageLabel::ALL.iter().zip(mix) {
        acc += f;
        if u < acc {
            return *label;
        }
    }
    // rounding left a sliver above the last cumulative sum
    *StageLabel::ALL
        .iter()
        .zip(mix)
        .rev()
        .find(|(_, f)| **f > 0.0)
        .map(|(l, _)| l)
        .unwrap_or(&StageLabel::Healthy)
}

fn place(rng: &mut SeededRng, cfg: &SynthConfig, placed: &[CellAnnotation]) -> Option<BoundingBox> {
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let r = rng.random_range(cfg.radius_min..=cfg.radius_max);
        // aspect jitter of up to 15% on the vertical semi-axis
        let spread = r * 3 / 20;
        let ry = rng.random_range(r - spread..=r + spread).max(1);
        let (w, h) = (2 * r, 2 * ry);
        if w > cfg.width || h > cfg.height {
            continue;
        }
        let x = rng.random_range(0..=cfg.width - w);
        let y = rng.random_range(0..=cfg.height - h);
        let candidate = BoundingBox::new(x, y, w, h);
        if placed
            .iter()
            .all(|c| iou(&c.bbox, &candidate) <= cfg.max_overlap)
        {
            return Some(candidate);
        }
    }
    None
}

fn jitter(rng: &mut SeededRng, color: [u8; 3], amount: u8) -> [u8; 3] {
    let a = amount as i32;
    color.map(|c| (c as i32 + rng.random_range(-a..=a)).clamp(0, 255) as u8)
}

fn lerp(a: [u8; 3], b: [u8; 3], t: f64) -> [u8; 3] {
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (a[c] as f64 + (b[c] as f64 - a[c] as f64) * t)
            .round()
            .clamp(0.0, 255.0) as u8;
    }
    out
}

/// Random unit vector by rejection from the square (no trigonometry).
fn unit_vector(rng: &mut SeededRng) -> (f64, f64) {
    loop {
        let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = a * a + b * b;
        if n > 0.01 && n <= 1.0 {
            let len = n.sqrt();
            return (a / len, b / len);
        }
    }
}

/// Parasite footprint in cell-normalized coordinates, where the cell is the
/// unit disk.
enum Parasite {
    None,
    Ring {
        center: (f64, f64),
        radius: f64,
        thickness: f64,
        dot: (f64, f64),
        dot_radius: f64,
    },
    Blobs(Vec<((f64, f64), f64)>),
    Elongated {
        center: (f64, f64),
        axis: (f64, f64),
        major: f64,
        minor: f64,
    },
}

impl Parasite {
    fn random(label: StageLabel, artifact_rate: f64, rng: &mut SeededRng) -> Self {
        let offset = |rng: &mut SeededRng, reach: f64| {
            let (dx, dy) = unit_vector(rng);
            let d = rng.random_range(0.0..reach);
            (dx * d, dy * d)
        };
        match label {
            StageLabel::Healthy => {
                if rng.random::<f64>() < artifact_rate {
                    Parasite::Blobs(vec![(offset(rng, 0.7), rng.random_range(0.08..0.15))])
                } else {
                    Parasite::None
                }
            }
            StageLabel::Ring => {
                let center = offset(rng, 0.3);
                let radius = rng.random_range(0.25..0.4);
                let (dx, dy) = unit_vector(rng);
                Parasite::Ring {
                    center,
                    radius,
                    thickness: 0.08,
                    dot: (center.0 + dx * radius, center.1 + dy * radius),
                    dot_radius: 0.12,
                }
            }
            StageLabel::Trophozoite => {
                let anchor = offset(rng, 0.2);
                let lobes = rng.random_range(3..=4);
                Parasite::Blobs(
                    (0..lobes)
                        .map(|_| {
                            let (ox, oy) = offset(rng, 0.22);
                            ((anchor.0 + ox, anchor.1 + oy), rng.random_range(0.2..0.3))
                        })
                        .collect(),
                )
            }
            StageLabel::Schizont => {
                let dots = rng.random_range(6..=12);
                Parasite::Blobs(
                    (0..dots)
                        .map(|_| (offset(rng, 0.6), rng.random_range(0.08..0.11)))
                        .collect(),
                )
            }
            StageLabel::Gametocyte => Parasite::Elongated {
                center: offset(rng, 0.1),
                axis: unit_vector(rng),
                major: rng.random_range(0.7..0.85),
                minor: rng.random_range(0.22..0.3),
            },
        }
    }

    fn covers(&self, u: f64, v: f64) -> bool {
        let d2 = |c: (f64, f64)| (u - c.0) * (u - c.0) + (v - c.1) * (v - c.1);
        match self {
            Parasite::None => false,
            Parasite::Ring {
                center,
                radius,
                thickness,
                dot,
                dot_radius,
            } => {
                let d = d2(*center).sqrt();
                (d - radius).abs() <= thickness / 2.0 || d2(*dot) <= dot_radius * dot_radius
            }
            Parasite::Blobs(blobs) => blobs.iter().any(|(c, r)| d2(*c) <= r * r),
            Parasite::Elongated {
                center,
                axis,
                major,
                minor,
            } => {
                let (du, dv) = (u - center.0, v - center.1);
                let along = du * axis.0 + dv * axis.1;
                let across = -du * axis.1 + dv * axis.0;
                let (a, c) = (along / major, across / minor);
                a * a + c * c <= 1.0
            }
        }
    }
}

fn draw_cell(img: &mut RgbImage, cell: &CellAnnotation, cfg: &SynthConfig, rng: &mut SeededRng) {
    let b = cell.bbox;
    let body = jitter(rng, cfg.cell_color, cfg.color_jitter);
    let (lo, hi) = cfg.parasite_contrast;
    let contrast = if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    };
    let stain = lerp(
        body,
        jitter(rng, cfg.parasite_color, cfg.color_jitter),
        contrast,
    );
    let parasite = Parasite::random(cell.label, cfg.artifact_rate, rng);

    // doubled coordinates keep the ellipse test in integers:
    // pixel centre (2px+1) against box centre (2x+w)
    let (w, h) = (b.w as i64, b.h as i64);
    let limit = w * w * h * h;
    for py in b.y..b.bottom() {
        let dy = 2 * py as i64 + 1 - (2 * b.y as i64 + h);
        for px in b.x..b.right() {
            let dx = 2 * px as i64 + 1 - (2 * b.x as i64 + w);
            if dx * dx * h * h + dy * dy * w * w > limit {
                continue;
            }
            let (u, v) = (dx as f64 / w as f64, dy as f64 / h as f64);
            let color = if parasite.covers(u, v) { stain } else { body };
            img.set(px, py, color);
        }
    }
}

fn add_noise(img: &mut RgbImage, std: f64, rng: &mut SeededRng) {
    for y in 0..img.height() {
        for x in 0..img.width() {
            let p = img.get(x, y).map(|c| {
                (c as f64 + std * standard_normal(rng))
                    .round()
                    .clamp(0.0, 255.0) as u8
            });
            img.set(x, y, p);
        }
    }
}

/// Writes `n_images` PNGs plus `manifest.json` into `out_dir`; image `i` uses
/// seed `cfg.seed + i`.
pub fn generate_corpus(
    cfg: &SynthConfig,
    n_images: usize,
    out_dir: impl AsRef<Path>,
) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut images = Vec::with_capacity(n_images);
    for i in 0..n_images {
        let image_cfg = SynthConfig {
            seed: cfg.seed.wrapping_add(i as u64),
            ..cfg.clone()
        };
        let (img, cells) = generate_smear(&image_cfg)?;
        let image_id = format!("img_{i:04}");
        let path = format!("{image_id}.png");
        io::write_png(&img, out_dir.join(&path))?;
        images.push(ImageEntry {
            image_id,
            path,
            width: img.width(),
            height: img.height(),
            cells,
        });
    }
    let manifest = Manifest {
        metadata: ManifestMetadata {
            source: Some(format!("synthetic seed={}", cfg.seed)),
            stain: Some("giemsa-like".into()),
            magnification: None,
        },
        images,
        base_dir: out_dir.to_path_buf(),
    };
    manifest.save(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            width: 200,
            height: 150,
            cells_min: 8,
            cells_max: 12,
            ..Default::default()
        }
    }

    #[test]
    fn zero_cells_is_plain_background() {
        let cfg = SynthConfig {
            cells_min: 0,
            cells_max: 0,
            noise_std: 0.0,
            ..small()
        };
        let (img, cells) = generate_smear(&cfg).unwrap();
        assert!(cells.is_empty());
        assert!(img.pixels().all(|p| p == cfg.background));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_smear(&small()).unwrap();
        let b = generate_smear(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_smear(&SynthConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn boxes_respect_bounds_and_overlap_cap() {
        let cfg = SynthConfig::default();
        let (_, cells) = generate_smear(&cfg).unwrap();
        assert!((100..=122).contains(&cells.len()));
        for (i, a) in cells.iter().enumerate() {
            assert!(a.bbox.fits_within(cfg.width, cfg.height));
            for b in &cells[i + 1..] {
                assert!(iou(&a.bbox, &b.bbox) <= cfg.max_overlap);
            }
        }
    }

    #[test]
    fn rasterized_ellipse_fills_its_box() {
        let cfg = SynthConfig {
            cells_min: 1,
            cells_max: 1,
            noise_std: 0.0,
            color_jitter: 0,
            class_mix: [1.0, 0.0, 0.0, 0.0, 0.0],
            ..small()
        };
        let (img, cells) = generate_smear(&cfg).unwrap();
        let b = cells[0].bbox;
        let is_cell = |x: usize, y: usize| img.get(x, y) != cfg.background;
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..img.height() {
            for x in 0..img.width() {
                if is_cell(x, y) {
                    (x0, y0, x1, y1) = (x0.min(x), y0.min(y), x1.max(x), y1.max(y));
                }
            }
        }
        assert_eq!(BoundingBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1), b);
    }

    #[test]
    fn impossible_density_fails() {
        let cfg = SynthConfig {
            cells_min: 200,
            cells_max: 200,
            max_overlap: 0.0,
            ..small()
        };
        assert!(matches!(
            generate_smear(&cfg),
            Err(Error::CannotPlace { .. })
        ));
    }

    #[test]
    fn bad_mix_is_rejected() {
        let cfg = SynthConfig {
            class_mix: [0.5, 0.1, 0.1, 0.1, 0.1],
            ..small()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn manifest_errors_name_their_location() {
        let bad_box = r#"{"format":"smearscope-manifest-v1","images":[
            {"image_id":"a","path":"a.png","width":10,"height":10,
             "cells":[{"x":0,"y":0,"w":2,"h":2,"label":"ring"},
                      {"x":5,"y":0,"w":6,"h":2,"label":"ring"}]}]}"#;
        match Manifest::parse(bad_box, ".") {
            Err(Error::CellOutOfBounds { image_id, cell, .. }) => {
                assert_eq!((image_id.as_str(), cell), ("a", 1))
            }
            other => panic!("{other:?}"),
        }
        let bad_label = bad_box
            .replace("\"w\":6", "\"w\":5")
            .replace("\"ring\"}]", "\"merozoite\"}]");
        assert!(matches!(
            Manifest::parse(&bad_label, "."),
            Err(Error::UnknownLabel { cell: 1, .. })
        ));
        assert!(matches!(
            Manifest::parse("{", "."),
            Err(Error::ManifestJson(_))
        ));
        let dup = r#"{"format":"smearscope-manifest-v1","images":[
            {"image_id":"a","path":"a.png","width":4,"height":4},
            {"image_id":"a","path":"b.png","width":4,"height":4}]}"#;
        assert!(matches!(
            Manifest::parse(dup, "."),
            Err(Error::DuplicateImageId(_))
        ));
    }

    #[test]
    fn labels_parse_case_insensitively() {
        let text = r#"{"format":"smearscope-manifest-v1","images":[
            {"image_id":"a","path":"a.png","width":10,"height":10,
             "cells":[{"x":0,"y":0,"w":2,"h":2,"label":"SCHIZONT"}]}]}"#;
        let m = Manifest::parse(text, ".").unwrap();
        assert_eq!(m.images[0].cells[0].label, StageLabel::Schizont);
        assert!(m.to_json().contains("\"schizont\""));
    }
}
