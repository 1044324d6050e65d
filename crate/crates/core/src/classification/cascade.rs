use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::features::FeatureVector;
use super::softmax::{
    HyperParams, ModelFile, ProbabilisticClassifier, SoftmaxClassifier, CASCADE_FORMAT,
    MODEL_FORMAT,
};
use super::StageLabel;
use crate::error::{Error, Result};
use crate::rng::seeded;

pub const STAGE1_CLASS_NAMES: [&str; 2] = ["healthy", "infected"];

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Final decision for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellClassification {
    pub label: StageLabel,
    /// For the single-stage model these are the five-way probabilities.
    pub stage1_probs: Vec<f64>,
    pub stage2_probs: Option<Vec<f64>>,
}

fn label_of(index: usize) -> Result<StageLabel> {
    StageLabel::from_id(index).ok_or(Error::LabelOutOfRange {
        label: index,
        classes: StageLabel::ALL.len(),
    })
}

pub fn classify_ssc<C: ProbabilisticClassifier>(
    model: &C,
    features: &[f64],
) -> Result<CellClassification> {
    let probs = model.predict(features)?;
    Ok(CellClassification {
        label: label_of(argmax(&probs))?,
        stage1_probs: probs,
        stage2_probs: None,
    })
}

/// Stage 2 runs only when the gate's argmax is "infected", and may still
/// answer healthy.
pub fn classify_tsc<A, B>(stage1: &A, stage2: &B, features: &[f64]) -> Result<CellClassification>
where
    A: ProbabilisticClassifier,
    B: ProbabilisticClassifier,
{
    let gate = stage1.predict(features)?;
    if argmax(&gate) == 0 {
        return Ok(CellClassification {
            label: StageLabel::Healthy,
            stage1_probs: gate,
            stage2_probs: None,
        });
    }
    let probs = stage2.predict(features)?;
    Ok(CellClassification {
        label: label_of(argmax(&probs))?,
        stage1_probs: gate,
        stage2_probs: Some(probs),
    })
}

/// Keeps every infected sample and a seeded random subset of healthy ones,
/// sized to the rounded mean of the four infected class counts. Order of the
/// input is preserved.
pub fn balanced_stage2_subset<T: Clone>(
    data: &[(T, StageLabel)],
    seed: u64,
) -> Result<Vec<(T, StageLabel)>> {
    let mut counts = [0usize; 5];
    for (_, l) in data {
        counts[l.id()] += 1;
    }
    for l in StageLabel::INFECTED {
        if counts[l.id()] == 0 {
            return Err(Error::EmptyClass(l.name().to_string()));
        }
    }
    let infected_total: usize = counts[1..].iter().sum();
    let target = (infected_total as f64 / 4.0).round() as usize;
    let healthy: Vec<usize> = data
        .iter()
        .enumerate()
        .filter(|(_, (_, l))| *l == StageLabel::Healthy)
        .map(|(i, _)| i)
        .collect();
    let mut keep = vec![false; data.len()];
    if target >= healthy.len() {
        healthy.iter().for_each(|&i| keep[i] = true);
    } else {
        let mut rng = seeded(seed);
        for pick in sample(&mut rng, healthy.len(), target) {
            keep[healthy[pick]] = true;
        }
    }
    Ok(data
        .iter()
        .zip(keep)
        .filter(|((_, l), k)| *k || l.is_infected())
        .map(|(item, _)| item.clone())
        .collect())
}

/// Healthy/infected gate followed by a five-way stage classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModel {
    stage1: SoftmaxClassifier,
    stage2: SoftmaxClassifier,
}

impl CascadeModel {
    pub fn new(stage1: SoftmaxClassifier, stage2: SoftmaxClassifier) -> Result<Self> {
        if stage1.class_names() != STAGE1_CLASS_NAMES {
            return Err(Error::Model(format!(
                "stage 1 classes must be {STAGE1_CLASS_NAMES:?}, got {:?}",
                stage1.class_names()
            )));
        }
        check_five_way(&stage2)?;
        Ok(Self { stage1, stage2 })
    }

    pub fn stage1(&self) -> &SoftmaxClassifier {
        &self.stage1
    }

    pub fn stage2(&self) -> &SoftmaxClassifier {
        &self.stage2
    }

    pub fn classify(&self, features: &[f64]) -> Result<CellClassification> {
        classify_tsc(&self.stage1, &self.stage2, features)
    }
}

fn check_five_way(model: &SoftmaxClassifier) -> Result<()> {
    if model.class_names() != StageLabel::class_names() {
        return Err(Error::Model(format!(
            "five-way model classes must be {:?}, got {:?}",
            StageLabel::class_names(),
            model.class_names()
        )));
    }
    Ok(())
}

/// Either architecture, as loaded from a model file.
#[derive(Debug, Clone, PartialEq)]
pub enum StageModel {
    Single(SoftmaxClassifier),
    Cascade(CascadeModel),
}

#[derive(Serialize, Deserialize)]
struct CascadeFile {
    format: String,
    stage1: ModelFile,
    stage2: ModelFile,
}

impl StageModel {
    pub fn classify(&self, features: &[f64]) -> Result<CellClassification> {
        match self {
            StageModel::Single(m) => classify_ssc(m, features),
            StageModel::Cascade(c) => c.classify(features),
        }
    }

    pub fn arch(&self) -> Architecture {
        match self {
            StageModel::Single(_) => Architecture::Ssc,
            StageModel::Cascade(_) => Architecture::Tsc,
        }
    }

    pub fn to_json(&self) -> String {
        let value = match self {
            StageModel::Single(m) => serde_json::to_value(m.to_model_file()),
            StageModel::Cascade(c) => serde_json::to_value(CascadeFile {
                format: CASCADE_FORMAT.to_string(),
                stage1: c.stage1.to_model_file(),
                stage2: c.stage2.to_model_file(),
            }),
        }
        .expect("model serializes");
        serde_json::to_string_pretty(&value).expect("model serializes")
    }
}

/// Parses either a single model or a cascade, dispatching on `format`.
pub fn load_model_json(text: &str) -> Result<StageModel> {
    let value: Value = serde_json::from_str(text)?;
    let format = value.get("format").and_then(Value::as_str).unwrap_or("");
    match format {
        MODEL_FORMAT => {
            let model = SoftmaxClassifier::from_model_file(serde_json::from_value(value)?)?;
            check_five_way(&model)?;
            Ok(StageModel::Single(model))
        }
        CASCADE_FORMAT => {
            let file: CascadeFile = serde_json::from_value(value)?;
            Ok(StageModel::Cascade(CascadeModel::new(
                SoftmaxClassifier::from_model_file(file.stage1)?,
                SoftmaxClassifier::from_model_file(file.stage2)?,
            )?))
        }
        other => Err(Error::Model(format!("unsupported format {other:?}"))),
    }
}

/// Single-stage (one five-way model) or two-stage cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Ssc,
    Tsc,
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ssc" => Ok(Architecture::Ssc),
            "tsc" => Ok(Architecture::Tsc),
            _ => Err(Error::Config(format!(
                "unknown architecture {s:?} (expected ssc or tsc)"
            ))),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Architecture::Ssc => "ssc",
            Architecture::Tsc => "tsc",
        })
    }
}

pub fn train_model(
    arch: Architecture,
    data: &[(FeatureVector, StageLabel)],
    hp: &HyperParams,
) -> Result<StageModel> {
    Ok(match arch {
        Architecture::Ssc => StageModel::Single(train_single(data, hp)?),
        Architecture::Tsc => StageModel::Cascade(train_cascade(data, hp)?),
    })
}

pub fn train_single(
    data: &[(FeatureVector, StageLabel)],
    hp: &HyperParams,
) -> Result<SoftmaxClassifier> {
    let indexed: Vec<_> = data.iter().map(|(f, l)| (*f, l.id())).collect();
    SoftmaxClassifier::train(StageLabel::class_names(), &indexed, hp)
}

/// Gate on all data, stage classifier on the balanced subset.
pub fn train_cascade(
    data: &[(FeatureVector, StageLabel)],
    hp: &HyperParams,
) -> Result<CascadeModel> {
    let binary: Vec<_> = data
        .iter()
        .map(|(f, l)| (*f, usize::from(l.is_infected())))
        .collect();
    let names = STAGE1_CLASS_NAMES.iter().map(|s| s.to_string()).collect();
    let stage1 = SoftmaxClassifier::train(names, &binary, hp)?;
    let subset = balanced_stage2_subset(data, hp.seed)?;
    let stage2 = train_single(&subset, hp)?;
    CascadeModel::new(stage1, stage2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classification::FEATURE_DIM;
    use std::cell::Cell;

    struct Fixed {
        probs: Vec<f64>,
        calls: Cell<usize>,
    }

    impl Fixed {
        fn new(probs: &[f64]) -> Self {
            Self {
                probs: probs.to_vec(),
                calls: Cell::new(0),
            }
        }
    }

    impl ProbabilisticClassifier for Fixed {
        fn num_classes(&self) -> usize {
            self.probs.len()
        }

        fn predict(&self, _: &[f64]) -> Result<Vec<f64>> {
            self.calls.set(self.calls.get() + 1);
            Ok(self.probs.clone())
        }
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[0.1, 0.4, 0.1, 0.4, 0.0]), 1);
        assert_eq!(argmax(&[0.2; 5]), 0);
    }

    #[test]
    fn ssc_picks_max() {
        let m = Fixed::new(&[0.9, 0.05, 0.02, 0.02, 0.01]);
        assert_eq!(classify_ssc(&m, &[]).unwrap().label, StageLabel::Healthy);
        let tie = Fixed::new(&[0.1, 0.35, 0.1, 0.35, 0.1]);
        assert_eq!(classify_ssc(&tie, &[]).unwrap().label, StageLabel::Ring);
    }

    #[test]
    fn tsc_short_circuits_on_healthy() {
        let gate = Fixed::new(&[0.7, 0.3]);
        let stage2 = Fixed::new(&[0.0, 1.0, 0.0, 0.0, 0.0]);
        let out = classify_tsc(&gate, &stage2, &[]).unwrap();
        assert_eq!(out.label, StageLabel::Healthy);
        assert!(out.stage2_probs.is_none());
        assert_eq!(stage2.calls.get(), 0);
    }

    #[test]
    fn tsc_routes_infected_to_stage2() {
        let gate = Fixed::new(&[0.2, 0.8]);
        let ring = Fixed::new(&[0.1, 0.6, 0.1, 0.1, 0.1]);
        assert_eq!(
            classify_tsc(&gate, &ring, &[]).unwrap().label,
            StageLabel::Ring
        );
        let healthy = Fixed::new(&[0.6, 0.1, 0.1, 0.1, 0.1]);
        let out = classify_tsc(&gate, &healthy, &[]).unwrap();
        assert_eq!(out.label, StageLabel::Healthy);
        assert!(out.stage2_probs.is_some());
    }

    fn labeled(counts: [usize; 5]) -> Vec<(usize, StageLabel)> {
        let mut out = Vec::new();
        for (l, &n) in StageLabel::ALL.iter().zip(&counts) {
            for _ in 0..n {
                out.push((out.len(), *l));
            }
        }
        out
    }

    fn count(data: &[(usize, StageLabel)], l: StageLabel) -> usize {
        data.iter().filter(|(_, x)| *x == l).count()
    }

    #[test]
    fn balancing_rounds_mean_infected_count() {
        let data = labeled([5000, 100, 20, 5, 30]);
        let subset = balanced_stage2_subset(&data, 7).unwrap();
        assert_eq!(count(&subset, StageLabel::Healthy), 39);
        assert_eq!(subset.len(), 39 + 155);
        assert_eq!(subset, balanced_stage2_subset(&data, 7).unwrap());
        assert_ne!(subset, balanced_stage2_subset(&data, 8).unwrap());
    }

    #[test]
    fn balancing_keeps_all_scarce_healthy() {
        let data = labeled([10, 100, 20, 5, 30]);
        let subset = balanced_stage2_subset(&data, 1).unwrap();
        assert_eq!(subset, data);
    }

    #[test]
    fn balancing_requires_every_infected_class() {
        let data = labeled([10, 1, 1, 0, 1]);
        assert!(matches!(
            balanced_stage2_subset(&data, 0),
            Err(Error::EmptyClass(ref c)) if c == "schizont"
        ));
    }

    #[test]
    fn cascade_json_round_trip() {
        let five = SoftmaxClassifier::seeded_init(StageLabel::class_names(), FEATURE_DIM, 1);
        let two = SoftmaxClassifier::seeded_init(
            STAGE1_CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
            FEATURE_DIM,
            2,
        );
        let cascade = StageModel::Cascade(CascadeModel::new(two, five.clone()).unwrap());
        assert_eq!(load_model_json(&cascade.to_json()).unwrap(), cascade);
        let single = StageModel::Single(five);
        assert_eq!(load_model_json(&single.to_json()).unwrap(), single);
        assert!(load_model_json(r#"{"format":"other"}"#).is_err());
    }
}
