//! Multinomial logistic regression trained by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, FEATURE_DIM, FEATURE_SPEC};
use crate::error::{Error, Result};
use crate::rng::{seeded, standard_normal};

pub const MODEL_FORMAT: &str = "smearscope-model-v1";
pub const CASCADE_FORMAT: &str = "smearscope-cascade-v1";

/// Anything that maps a feature vector to a class probability vector.
pub trait ProbabilisticClassifier {
    fn num_classes(&self) -> usize;
    fn predict(&self, features: &[f64]) -> Result<Vec<f64>>;
}

impl<C: ProbabilisticClassifier + ?Sized> ProbabilisticClassifier for &C {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }

    fn predict(&self, features: &[f64]) -> Result<Vec<f64>> {
        (**self).predict(features)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    /// Optimize on z-scored features, then fold the scaling back into the
    /// raw-feature weights.
    pub standardize: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lr: 0.5,
            epochs: 300,
            l2: 1e-4,
            seed: 0,
            standardize: true,
        }
    }
}

/// Gradient of the training objective with respect to weights and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// `softmax(W f + b)` over a fixed feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxClassifier {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    class_names: Vec<String>,
}

impl SoftmaxClassifier {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>, class_names: Vec<String>) -> Result<Self> {
        let k = class_names.len();
        if k < 2 {
            return Err(Error::Model("need at least two classes".into()));
        }
        if weights.len() != k || bias.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: weights.len().min(bias.len()),
            });
        }
        let dim = weights[0].len();
        if dim == 0 || weights.iter().any(|row| row.len() != dim) {
            return Err(Error::Model(
                "weight rows must share a non-zero length".into(),
            ));
        }
        if weights
            .iter()
            .flatten()
            .chain(&bias)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Model("non-finite parameter".into()));
        }
        Ok(Self {
            weights,
            bias,
            class_names,
        })
    }

    pub fn zeros(class_names: Vec<String>, dim: usize) -> Self {
        let k = class_names.len();
        Self {
            weights: vec![vec![0.0; dim]; k],
            bias: vec![0.0; k],
            class_names,
        }
    }

    /// Weights drawn from N(0, 0.01²), zero bias.
    pub fn seeded_init(class_names: Vec<String>, dim: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let mut clf = Self::zeros(class_names, dim);
        for row in &mut clf.weights {
            for w in row.iter_mut() {
                *w = 0.01 * standard_normal(&mut rng);
            }
        }
        clf
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn weights_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    fn check_dim(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: features.len(),
            });
        }
        Ok(())
    }

    fn logits(&self, features: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }

    /// Mean cross-entropy plus `l2/2 * |W|²` (bias unregularized).
    pub fn loss(&self, data: &[(FeatureVector, usize)], l2: f64) -> f64 {
        self.loss_and_gradient(data, l2).0
    }

    pub fn loss_and_gradient(&self, data: &[(FeatureVector, usize)], l2: f64) -> (f64, Gradient) {
        let k = self.num_classes();
        let dim = self.dim();
        let mut grad = Gradient {
            weights: vec![vec![0.0; dim]; k],
            bias: vec![0.0; k],
        };
        let mut loss = 0.0;
        for (x, y) in data {
            let logits = self.logits(x);
            let (probs, log_z) = softmax_with_log_norm(&logits);
            loss += log_z - logits[*y];
            for c in 0..k {
                let delta = probs[c] - if c == *y { 1.0 } else { 0.0 };
                grad.bias[c] += delta;
                for (g, xi) in grad.weights[c].iter_mut().zip(x.iter()) {
                    *g += delta * xi;
                }
            }
        }
        let n = data.len().max(1) as f64;
        loss /= n;
        let mut penalty = 0.0;
        for c in 0..k {
            grad.bias[c] /= n;
            for (g, w) in grad.weights[c].iter_mut().zip(&self.weights[c]) {
                *g = *g / n + l2 * w;
                penalty += w * w;
            }
        }
        (loss + 0.5 * l2 * penalty, grad)
    }

    /// Full-batch gradient descent from a seeded small-random start.
    ///
    /// `data` labels are class indices into `class_names`; every class must
    /// occur at least once.
    pub fn train(
        class_names: Vec<String>,
        data: &[(FeatureVector, usize)],
        hp: &HyperParams,
    ) -> Result<Self> {
        let k = class_names.len();
        let mut counts = vec![0usize; k];
        for (_, y) in data {
            if *y >= k {
                return Err(Error::LabelOutOfRange {
                    label: *y,
                    classes: k,
                });
            }
            counts[*y] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyClass(class_names[empty].clone()));
        }

        let (mean, scale) = if hp.standardize {
            feature_moments(data)
        } else {
            ([0.0; FEATURE_DIM], [1.0; FEATURE_DIM])
        };
        let scaled: Vec<(FeatureVector, usize)> = data
            .iter()
            .map(|(x, y)| {
                let mut z = [0.0; FEATURE_DIM];
                for j in 0..FEATURE_DIM {
                    z[j] = (x.0[j] - mean[j]) / scale[j];
                }
                (FeatureVector(z), *y)
            })
            .collect();

        let mut clf = Self::seeded_init(class_names, FEATURE_DIM, hp.seed);
        for _ in 0..hp.epochs {
            let (_, grad) = clf.loss_and_gradient(&scaled, hp.l2);
            for c in 0..k {
                clf.bias[c] -= hp.lr * grad.bias[c];
                for (w, g) in clf.weights[c].iter_mut().zip(&grad.weights[c]) {
                    *w -= hp.lr * g;
                }
            }
        }

        // fold z-scoring into raw-feature parameters
        for c in 0..k {
            let mut shift = 0.0;
            for j in 0..FEATURE_DIM {
                clf.weights[c][j] /= scale[j];
                shift += clf.weights[c][j] * mean[j];
            }
            clf.bias[c] -= shift;
        }
        Ok(clf)
    }

    pub fn accuracy(&self, data: &[(FeatureVector, usize)]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let correct = data
            .iter()
            .filter(|(x, y)| {
                let (probs, _) = softmax_with_log_norm(&self.logits(x));
                super::cascade::argmax(&probs) == *y
            })
            .count();
        correct as f64 / data.len() as f64
    }

    pub fn to_model_file(&self) -> ModelFile {
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            num_classes: self.num_classes(),
            class_names: self.class_names.clone(),
            weights: self.weights.clone(),
            bias: self.bias.clone(),
            feature_spec: FEATURE_SPEC.to_string(),
        }
    }

    pub fn from_model_file(file: ModelFile) -> Result<Self> {
        if file.format != MODEL_FORMAT {
            return Err(Error::Model(format!(
                "unsupported format {:?}",
                file.format
            )));
        }
        if file.feature_spec != FEATURE_SPEC {
            return Err(Error::Model(format!(
                "unsupported feature spec {:?}",
                file.feature_spec
            )));
        }
        if file.num_classes != file.class_names.len() {
            return Err(Error::Model(
                "num_classes disagrees with class_names".into(),
            ));
        }
        let clf = Self::new(file.weights, file.bias, file.class_names)?;
        if clf.dim() != FEATURE_DIM {
            return Err(Error::DimensionMismatch {
                expected: FEATURE_DIM,
                actual: clf.dim(),
            });
        }
        Ok(clf)
    }
}

impl ProbabilisticClassifier for SoftmaxClassifier {
    fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    fn predict(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(features)?;
        Ok(softmax_with_log_norm(&self.logits(features)).0)
    }
}

fn softmax_with_log_norm(logits: &[f64]) -> (Vec<f64>, f64) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    (exps.iter().map(|e| e / sum).collect(), max + sum.ln())
}

fn feature_moments(data: &[(FeatureVector, usize)]) -> ([f64; FEATURE_DIM], [f64; FEATURE_DIM]) {
    let n = data.len() as f64;
    let mut mean = [0.0; FEATURE_DIM];
    for (x, _) in data {
        for j in 0..FEATURE_DIM {
            mean[j] += x.0[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut scale = [0.0; FEATURE_DIM];
    for (x, _) in data {
        for j in 0..FEATURE_DIM {
            let d = x.0[j] - mean[j];
            scale[j] += d * d;
        }
    }
    for s in &mut scale {
        *s = (*s / n).sqrt();
        if *s < 1e-8 {
            *s = 1.0;
        }
    }
    (mean, scale)
}

/// On-disk form of one softmax model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub feature_spec: String,
}
