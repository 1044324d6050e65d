//! Detection matching, confusion matrices, macro metrics, dataset splitting
//! and the end-to-end localization/classification evaluations.
//!
//! Metric conventions: any 0/0 ratio is 0; "class-wise accuracy" is
//! per-class recall; multi-class F1 is the unweighted mean of per-class F1.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classification::{
    extract_crop, extract_features, train_model, Architecture, CropConfig, FeatureVector,
    HyperParams, StageLabel, StageModel,
};
use crate::dataset::{ImageEntry, Manifest};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::rng::seeded;
use crate::segmentation::{localize_cells, SegmentationConfig};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
pub const DEFAULT_SPLIT: [f64; 3] = [0.7, 0.2, 0.1];
const SPLIT_EPSILON: f64 = 1e-9;

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0 {
        return 0.0;
    }
    inter as f64 / (a.area() + b.area() - inter) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMatch {
    pub gt: usize,
    pub pred: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMatchResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub matches: Vec<DetectionMatch>,
}

/// Greedy one-to-one matching in descending IoU order. Ties go to the lower
/// ground-truth index, then the lower prediction index. Pairs at or below
/// `thresh` never match.
pub fn match_detections(
    gt: &[BoundingBox],
    pred: &[BoundingBox],
    thresh: f64,
) -> DetectionMatchResult {
    let mut pairs = Vec::new();
    for (g, gb) in gt.iter().enumerate() {
        for (p, pb) in pred.iter().enumerate() {
            let v = iou(gb, pb);
            if v > thresh {
                pairs.push(DetectionMatch {
                    gt: g,
                    pred: p,
                    iou: v,
                });
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.iou
            .total_cmp(&a.iou)
            .then(a.gt.cmp(&b.gt))
            .then(a.pred.cmp(&b.pred))
    });
    let mut gt_used = vec![false; gt.len()];
    let mut pred_used = vec![false; pred.len()];
    let mut matches = Vec::new();
    for m in pairs {
        if !gt_used[m.gt] && !pred_used[m.pred] {
            gt_used[m.gt] = true;
            pred_used[m.pred] = true;
            matches.push(m);
        }
    }
    DetectionMatchResult {
        tp: matches.len(),
        fp: pred.len() - matches.len(),
        fn_: gt.len() - matches.len(),
        matches,
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    ratio(2.0 * precision * recall, precision + recall)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn precision_recall_f1(tp: usize, fp: usize, fn_: usize) -> PrecisionRecall {
    let precision = ratio(tp as f64, (tp + fp) as f64);
    let recall = ratio(tp as f64, (tp + fn_) as f64);
    PrecisionRecall {
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

/// Rows are ground truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

pub fn confusion_matrix(gt: &[usize], pred: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if gt.len() != pred.len() {
        return Err(Error::LengthMismatch(gt.len(), pred.len()));
    }
    let mut counts = vec![vec![0usize; k]; k];
    for (&g, &p) in gt.iter().zip(pred) {
        for label in [g, p] {
            if label >= k {
                return Err(Error::LabelOutOfRange { label, classes: k });
            }
        }
        counts[g][p] += 1;
    }
    Ok(ConfusionMatrix {
        class_names: (0..k).map(|i| i.to_string()).collect(),
        counts,
    })
}

impl ConfusionMatrix {
    pub fn with_class_names(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.counts.len(), "one name per class");
        self.class_names = names;
        self
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn row_sum(&self, class: usize) -> usize {
        self.counts[class].iter().sum()
    }

    pub fn col_sum(&self, class: usize) -> usize {
        self.counts.iter().map(|row| row[class]).sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn recall(&self, class: usize) -> f64 {
        ratio(self.counts[class][class] as f64, self.row_sum(class) as f64)
    }

    pub fn precision(&self, class: usize) -> f64 {
        ratio(self.counts[class][class] as f64, self.col_sum(class) as f64)
    }

    pub fn f1(&self, class: usize) -> f64 {
        f1_score(self.precision(class), self.recall(class))
    }

    /// Classes with no ground-truth samples.
    pub fn empty_classes(&self) -> Vec<usize> {
        (0..self.num_classes())
            .filter(|&c| self.row_sum(c) == 0)
            .collect()
    }

    /// Micro accuracy: trace over total.
    pub fn overall_accuracy(&self) -> f64 {
        let trace: usize = (0..self.num_classes()).map(|c| self.counts[c][c]).sum();
        ratio(trace as f64, self.total() as f64)
    }
}

/// Mean per-class recall over classes that have ground-truth samples.
pub fn macro_average_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let present: Vec<usize> = (0..cm.num_classes())
        .filter(|&c| cm.row_sum(c) > 0)
        .collect();
    if present.is_empty() {
        return Err(Error::NoSamples);
    }
    Ok(present.iter().map(|&c| cm.recall(c)).sum::<f64>() / present.len() as f64)
}

pub fn macro_f1(cm: &ConfusionMatrix) -> f64 {
    let k = cm.num_classes();
    if k == 0 {
        return 0.0;
    }
    (0..k).map(|c| cm.f1(c)).sum::<f64>() / k as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub val: Vec<String>,
    pub fractions: [f64; 3],
    pub seed: u64,
}

/// Seeded shuffle, then `floor(f * n)` images for train, test and val in that
/// order; the remainder joins train.
pub fn split_dataset(
    image_ids: &[String],
    fractions: [f64; 3],
    seed: u64,
) -> Result<SplitAssignment> {
    let n = image_ids.len();
    if n < 3 {
        return Err(Error::TooFewImages(n));
    }
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| f.is_nan() || *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::BadFractions(fractions));
    }
    let sizes = fractions.map(|f| (f * n as f64 + SPLIT_EPSILON).floor() as usize);
    let mut ids = image_ids.to_vec();
    ids.shuffle(&mut seeded(seed));
    let (train_n, test_n, val_n) = (sizes[0], sizes[1], sizes[2]);
    let test = ids[train_n..train_n + test_n].to_vec();
    let val = ids[train_n + test_n..train_n + test_n + val_n].to_vec();
    let mut train = ids[..train_n].to_vec();
    train.extend_from_slice(&ids[train_n + test_n + val_n..]);
    Ok(SplitAssignment {
        train,
        test,
        val,
        fractions,
        seed,
    })
}

pub fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationCounts {
    pub image_id: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl LocalizationCounts {
    fn new(image_id: String, m: &DetectionMatchResult) -> Self {
        let prf = precision_recall_f1(m.tp, m.fp, m.fn_);
        Self {
            image_id,
            tp: m.tp,
            fp: m.fp,
            fn_: m.fn_,
            precision: round4(prf.precision),
            recall: round4(prf.recall),
            f1: round4(prf.f1),
        }
    }
}

/// Micro-aggregated localization metrics; values rounded to 4 decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub iou_threshold: f64,
    pub images: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub segmentation: SegmentationConfig,
    pub per_image: Vec<LocalizationCounts>,
}

/// Aggregates already-localized boxes: `(image_id, ground truth, predictions)`.
pub fn localization_report(
    per_image: &[(String, Vec<BoundingBox>, Vec<BoundingBox>)],
    iou_threshold: f64,
    segmentation: &SegmentationConfig,
) -> Result<LocalizationReport> {
    if per_image.is_empty() {
        return Err(Error::NoImages);
    }
    let counts: Vec<LocalizationCounts> = per_image
        .iter()
        .map(|(id, gt, pred)| {
            LocalizationCounts::new(id.clone(), &match_detections(gt, pred, iou_threshold))
        })
        .collect();
    let tp = counts.iter().map(|c| c.tp).sum();
    let fp = counts.iter().map(|c| c.fp).sum();
    let fn_ = counts.iter().map(|c| c.fn_).sum();
    let prf = precision_recall_f1(tp, fp, fn_);
    Ok(LocalizationReport {
        iou_threshold,
        images: counts.len(),
        tp,
        fp,
        fn_,
        precision: round4(prf.precision),
        recall: round4(prf.recall),
        f1: round4(prf.f1),
        segmentation: segmentation.clone(),
        per_image: counts,
    })
}

/// Runs [`localize_cells`] on every manifest image and matches the result
/// against the annotations.
pub fn evaluate_localization(
    manifest: &Manifest,
    seg_cfg: &SegmentationConfig,
    iou_threshold: f64,
) -> Result<LocalizationReport> {
    if manifest.images.is_empty() {
        return Err(Error::NoImages);
    }
    seg_cfg.validate()?;
    let per_image = manifest
        .images
        .par_iter()
        .map(|entry| {
            let img = manifest.load_image(entry)?;
            let pred = localize_cells(&img, seg_cfg)?
                .into_iter()
                .map(|c| c.bbox)
                .collect();
            let gt = entry.cells.iter().map(|c| c.bbox).collect();
            Ok((entry.image_id.clone(), gt, pred))
        })
        .collect::<Result<Vec<_>>>()?;
    localization_report(&per_image, iou_threshold, seg_cfg)
}

/// Cell crops for classification, labeled by ground truth.
///
/// With `end_to_end` the crops come from localized boxes matched to ground
/// truth at `iou_threshold`; unmatched detections and missed cells are
/// dropped. Otherwise the ground-truth boxes are cropped directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropSource {
    pub end_to_end: bool,
    pub iou_threshold: f64,
}

impl Default for CropSource {
    fn default() -> Self {
        Self {
            end_to_end: false,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
        }
    }
}

fn entry_features(
    manifest: &Manifest,
    entry: &ImageEntry,
    source: &CropSource,
    seg_cfg: &SegmentationConfig,
    crop_cfg: &CropConfig,
) -> Result<Vec<(FeatureVector, StageLabel)>> {
    let img = manifest.load_image(entry)?;
    let boxes: Vec<(BoundingBox, StageLabel)> = if source.end_to_end {
        let pred: Vec<BoundingBox> = localize_cells(&img, seg_cfg)?
            .into_iter()
            .map(|c| c.bbox)
            .collect();
        let gt: Vec<BoundingBox> = entry.cells.iter().map(|c| c.bbox).collect();
        let mut matched = match_detections(&gt, &pred, source.iou_threshold).matches;
        matched.sort_by_key(|m| m.pred);
        matched
            .iter()
            .map(|m| (pred[m.pred], entry.cells[m.gt].label))
            .collect()
    } else {
        entry.cells.iter().map(|c| (c.bbox, c.label)).collect()
    };
    boxes
        .into_iter()
        .map(|(b, label)| {
            let crop = extract_crop(&img, &b, &entry.image_id, crop_cfg)?;
            Ok((extract_features(&crop), label))
        })
        .collect()
}

/// Features of every cell in the listed images, in manifest order.
pub fn collect_features(
    manifest: &Manifest,
    image_ids: &[String],
    source: &CropSource,
    seg_cfg: &SegmentationConfig,
    crop_cfg: &CropConfig,
) -> Result<Vec<(FeatureVector, StageLabel)>> {
    let wanted: std::collections::HashSet<&str> = image_ids.iter().map(String::as_str).collect();
    let entries: Vec<&ImageEntry> = manifest
        .images
        .iter()
        .filter(|e| wanted.contains(e.image_id.as_str()))
        .collect();
    let per_image = entries
        .par_iter()
        .map(|e| entry_features(manifest, e, source, seg_cfg, crop_cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_image.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub arch: Architecture,
    pub seed: u64,
    pub metric_notes: String,
    pub crop_source: CropSource,
    pub hyper_params: HyperParams,
    pub split: SplitSizes,
    pub train_cells: usize,
    pub test_cells: usize,
    pub macro_average_accuracy: f64,
    pub macro_f1: f64,
    pub overall_accuracy: f64,
    /// Classes absent from the test set, excluded from the macro accuracy.
    pub excluded_classes: Vec<String>,
    pub per_class: Vec<ClassMetrics>,
    pub confusion_matrix: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub test: usize,
    pub val: usize,
}

const METRIC_NOTES: &str = "macro_average_accuracy = mean per-class recall over classes with \
test samples; macro_f1 = unweighted mean of per-class F1; 0/0 = 0";

/// Scores `model` on labeled features.
pub fn score_model(
    model: &StageModel,
    test: &[(FeatureVector, StageLabel)],
) -> Result<ConfusionMatrix> {
    let mut gt = Vec::with_capacity(test.len());
    let mut pred = Vec::with_capacity(test.len());
    for (f, label) in test {
        gt.push(label.id());
        pred.push(model.classify(f)?.label.id());
    }
    Ok(confusion_matrix(&gt, &pred, StageLabel::ALL.len())?
        .with_class_names(StageLabel::class_names()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationOptions {
    pub arch: Architecture,
    pub hyper_params: HyperParams,
    pub crop_source: CropSource,
    pub segmentation: SegmentationConfig,
    pub crop: CropConfig,
}

/// Trains on the train split and reports on the test split.
pub fn evaluate_classification(
    manifest: &Manifest,
    split: &SplitAssignment,
    opts: &ClassificationOptions,
) -> Result<(ClassificationReport, StageModel)> {
    if manifest.images.is_empty() {
        return Err(Error::NoImages);
    }
    // training always uses annotated boxes; only the test crops follow the
    // end-to-end flag
    let train = collect_features(
        manifest,
        &split.train,
        &CropSource::default(),
        &opts.segmentation,
        &opts.crop,
    )?;
    let test = collect_features(
        manifest,
        &split.test,
        &opts.crop_source,
        &opts.segmentation,
        &opts.crop,
    )?;
    let model = train_model(opts.arch, &train, &opts.hyper_params)?;
    let cm = score_model(&model, &test)?;
    let report = ClassificationReport {
        arch: opts.arch,
        seed: opts.hyper_params.seed,
        metric_notes: METRIC_NOTES.to_string(),
        crop_source: opts.crop_source.clone(),
        hyper_params: opts.hyper_params,
        split: SplitSizes {
            train: split.train.len(),
            test: split.test.len(),
            val: split.val.len(),
        },
        train_cells: train.len(),
        test_cells: test.len(),
        macro_average_accuracy: round4(macro_average_accuracy(&cm)?),
        macro_f1: round4(macro_f1(&cm)),
        overall_accuracy: round4(cm.overall_accuracy()),
        excluded_classes: cm
            .empty_classes()
            .iter()
            .map(|&c| cm.class_names[c].clone())
            .collect(),
        per_class: (0..cm.num_classes())
            .map(|c| ClassMetrics {
                class: cm.class_names[c].clone(),
                support: cm.row_sum(c),
                precision: round4(cm.precision(c)),
                recall: round4(cm.recall(c)),
                f1: round4(cm.f1(c)),
            })
            .collect(),
        confusion_matrix: cm,
    };
    Ok((report, model))
}
