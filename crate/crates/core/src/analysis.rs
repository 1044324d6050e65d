//! Whole-image analysis: preprocess, localize, crop, classify.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classification::{extract_crop, extract_features, CropConfig, StageLabel, StageModel};
use crate::error::Result;
use crate::geometry::BoundingBox;
use crate::imaging::RgbImage;
use crate::preprocess::{preprocess_field, CropReport, PreprocessConfig};
use crate::segmentation::{localize_cells, SegmentationConfig};

/// Every knob that influences an analysis result, apart from the model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub segmentation: SegmentationConfig,
    pub crop: CropConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.segmentation.validate()
    }

    /// Hex SHA-256 of the config's JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(
            serde_json::to_string(self)
                .expect("config serializes")
                .as_bytes(),
        )
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn model_hash(model: &StageModel) -> String {
    sha256_hex(model.to_json().as_bytes())
}

/// Content identifier: first 16 hex digits of the SHA-256 over the size and
/// raw RGB pixels, so the same image gets the same id however it arrives.
pub fn image_id(img: &RgbImage) -> String {
    let mut h = Sha256::new();
    h.update((img.width() as u64).to_le_bytes());
    h.update((img.height() as u64).to_le_bytes());
    h.update(img.as_raw());
    h.finalize()
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzedCell {
    /// In original-image coordinates.
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub label: StageLabel,
    pub stage1_probs: Vec<f64>,
    pub stage2_probs: Option<Vec<f64>>,
}

/// Wall-clock milliseconds per stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub preprocess_ms: f64,
    pub localize_ms: f64,
    pub classify_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub arch: String,
    pub total_cells: usize,
    pub infected_cells: usize,
    pub field: CropReport,
    pub cells: Vec<AnalyzedCell>,
    pub timings: Timings,
    pub pipeline_config_hash: String,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

pub fn analyze_image(
    img: &RgbImage,
    cfg: &PipelineConfig,
    model: &StageModel,
) -> Result<AnalysisResult> {
    cfg.validate()?;
    let start = Instant::now();
    let (field, report) = preprocess_field(img, &cfg.preprocess)?;
    let preprocess_ms = ms_since(start);

    let t = Instant::now();
    let detections = localize_cells(&field, &cfg.segmentation)?;
    let localize_ms = ms_since(t);

    let t = Instant::now();
    let id = image_id(img);
    let origin = report.ratio_crop_rect;
    let mut cells = Vec::with_capacity(detections.len());
    for det in &detections {
        let crop = extract_crop(&field, &det.bbox, &id, &cfg.crop)?;
        let decision = model.classify(&extract_features(&crop))?;
        cells.push(AnalyzedCell {
            bbox: origin.offset(&det.bbox),
            label: decision.label,
            stage1_probs: decision.stage1_probs,
            stage2_probs: decision.stage2_probs,
        });
    }
    let classify_ms = ms_since(t);

    Ok(AnalysisResult {
        image_id: id,
        width: img.width(),
        height: img.height(),
        arch: model.arch().to_string(),
        total_cells: cells.len(),
        infected_cells: cells.iter().filter(|c| c.label.is_infected()).count(),
        field: report,
        cells,
        timings: Timings {
            preprocess_ms,
            localize_ms,
            classify_ms,
            total_ms: ms_since(start),
        },
        pipeline_config_hash: cfg.hash(),
    })
}

pub const BORDER_WIDTH: usize = 2;

pub fn label_color(label: StageLabel) -> [u8; 3] {
    match label {
        StageLabel::Healthy => [0, 190, 60],
        StageLabel::Ring => [255, 215, 0],
        StageLabel::Trophozoite => [255, 140, 0],
        StageLabel::Schizont => [230, 60, 20],
        StageLabel::Gametocyte => [200, 0, 120],
    }
}

/// Draws a 2-px border just inside each cell box. Boxes falling outside the
/// image are clipped.
pub fn render_overlay(img: &RgbImage, result: &AnalysisResult) -> RgbImage {
    let mut out = img.clone();
    for cell in &result.cells {
        let b = cell.bbox;
        let color = label_color(cell.label);
        let right = b.right().min(img.width());
        let bottom = b.bottom().min(img.height());
        for y in b.y..bottom {
            for x in b.x..right {
                let on_border = x < b.x + BORDER_WIDTH
                    || y < b.y + BORDER_WIDTH
                    || x + BORDER_WIDTH >= b.right()
                    || y + BORDER_WIDTH >= b.bottom();
                if on_border {
                    out.set(x, y, color);
                }
            }
        }
    }
    out
}
