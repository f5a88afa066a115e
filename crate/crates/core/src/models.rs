//! Classifiers over [`DocTermMatrix`] rows.
//!
//! Three variants share one train/predict/persist contract:
//!
//! * **dummy**: samples a class from the training distribution for every
//!   row, ignoring features. Expected accuracy on a matched test set is
//!   `Σ p_c²`.
//! * **cnb**: Complement Naive Bayes. Each class is scored with log
//!   probabilities estimated from every document *outside* the class; the
//!   lowest score wins.
//! * **sgd**: one-vs-rest linear classifiers trained with hinge loss, L2
//!   shrinkage, and an inverse-scaling step size; the highest score wins.
//!
//! Ties always resolve to the earliest class in the model's class list,
//! which follows schema order.
//!
//! # File format
//!
//! A model file is a single header line `CURATION-MODEL v<version>` followed
//! by one JSON object holding the variant tag, class list, feature
//! fingerprint, and weights. Loading rejects other versions and unknown
//! variant tags.

use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::annotation::ActionClass;
use crate::features::{DocTermMatrix, FeatureError, FeatureSpace, Weighting};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "CURATION-MODEL";

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("no training examples")]
    EmptyTraining,
    #[error("{rows} matrix rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("complement undefined: training data has a single class")]
    SingleClass,
    #[error("unsmoothed zero: alpha = 0 and class {class} has a zero complement count")]
    UnsmoothedZero { class: ActionClass },
    #[error("smoothing alpha must be finite and non-negative, got {0}")]
    BadAlpha(f64),
    #[error("diverged: non-finite weights in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("feature space mismatch: model expects {expected}, input has {found}")]
    FeatureSpaceMismatch { expected: String, found: String },
    #[error("model version mismatch: file has v{found}, this build reads v{supported}")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("unsupported variant {0:?}")]
    UnsupportedVariant(String),
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dummy,
    Cnb,
    Sgd,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Dummy, ModelKind::Cnb, ModelKind::Sgd];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Dummy => "dummy",
            ModelKind::Cnb => "cnb",
            ModelKind::Sgd => "sgd",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dummy" | "baseline" => Ok(ModelKind::Dummy),
            "cnb" => Ok(ModelKind::Cnb),
            "sgd" => Ok(ModelKind::Sgd),
            other => Err(ModelError::UnsupportedVariant(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnbOptions {
    pub alpha: f64,
    pub normalize: bool,
}

impl Default for CnbOptions {
    fn default() -> Self {
        CnbOptions {
            alpha: 1.0,
            normalize: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdOptions {
    pub loss: String,
    pub l2_lambda: f64,
    pub epochs: usize,
    pub eta0: f64,
    pub seed: u64,
}

impl Default for SgdOptions {
    fn default() -> Self {
        SgdOptions {
            loss: "hinge".into(),
            l2_lambda: 1e-4,
            epochs: 10,
            eta0: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DummyParams {
    pub probabilities: Vec<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnbParams {
    pub alpha: f64,
    pub normalize: bool,
    /// `weights[c][i]` for class `c` and term `i`.
    pub weights: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdParams {
    pub hyperparameters: SgdOptions,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum ModelParams {
    Dummy(DummyParams),
    Cnb(CnbParams),
    Sgd(SgdParams),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub n_train: usize,
    /// Training examples per class, aligned with the class list.
    pub class_counts: Vec<usize>,
    pub weighting: Option<Weighting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trained_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_fingerprint: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub classes: Vec<ActionClass>,
    /// Fingerprint of the feature space the weights index into; empty for a
    /// dummy model trained without one.
    pub feature_fingerprint: String,
    pub n_features: usize,
    pub params: ModelParams,
    pub metadata: TrainingMetadata,
    /// Fitted vocabulary and configuration, when bundled with the model.
    pub features: Option<FeatureSpace>,
}

/// Per-row class scores from [`TrainedModel::predict_scores`].
#[derive(Clone, Debug, PartialEq)]
pub struct Scores {
    pub classes: Vec<ActionClass>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Prediction {
    pub label: ActionClass,
    /// The input row had no features, so the scores carried no evidence.
    pub low_confidence: bool,
}

fn class_list(labels: &[ActionClass]) -> (Vec<ActionClass>, Vec<usize>) {
    let mut counts = [0usize; 8];
    for l in labels {
        counts[l.index()] += 1;
    }
    ActionClass::ALL
        .into_iter()
        .filter(|c| counts[c.index()] > 0)
        .map(|c| (c, counts[c.index()]))
        .unzip()
}

fn check_training(x: &DocTermMatrix, y: &[ActionClass]) -> Result<(Vec<ActionClass>, Vec<usize>), ModelError> {
    if y.is_empty() {
        return Err(ModelError::EmptyTraining);
    }
    if x.n_docs() != y.len() {
        return Err(ModelError::LengthMismatch {
            rows: x.n_docs(),
            labels: y.len(),
        });
    }
    let (classes, counts) = class_list(y);
    if classes.len() < 2 {
        return Err(ModelError::SingleClass);
    }
    Ok((classes, counts))
}

/// Stratified baseline: stores the empirical class distribution.
pub fn train_dummy(labels: &[ActionClass], seed: u64) -> Result<TrainedModel, ModelError> {
    if labels.is_empty() {
        return Err(ModelError::EmptyTraining);
    }
    let (classes, counts) = class_list(labels);
    let n = labels.len() as f64;
    let probabilities = counts.iter().map(|&c| c as f64 / n).collect();
    Ok(TrainedModel {
        classes,
        feature_fingerprint: String::new(),
        n_features: 0,
        params: ModelParams::Dummy(DummyParams { probabilities, seed }),
        metadata: TrainingMetadata {
            n_train: labels.len(),
            class_counts: counts,
            ..TrainingMetadata::default()
        },
        features: None,
    })
}

pub fn train_cnb(x: &DocTermMatrix, y: &[ActionClass], options: CnbOptions) -> Result<TrainedModel, ModelError> {
    let (classes, counts) = check_training(x, y)?;
    let alpha = options.alpha;
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(ModelError::BadAlpha(alpha));
    }
    let n_terms = x.n_terms;
    let mut weights = Vec::with_capacity(classes.len());
    for &class in &classes {
        let mut complement = vec![0.0f64; n_terms];
        for (row, &label) in x.rows.iter().zip(y) {
            if label != class {
                for &(i, v) in row {
                    complement[i] += v;
                }
            }
        }
        if alpha == 0.0 && complement.contains(&0.0) {
            return Err(ModelError::UnsmoothedZero { class });
        }
        let total: f64 = complement.iter().sum();
        let denom = alpha * n_terms as f64 + total;
        let mut w: Vec<f64> = complement.iter().map(|&n| ((alpha + n) / denom).ln()).collect();
        if options.normalize {
            let norm: f64 = w.iter().map(|v| v.abs()).sum();
            if norm > 0.0 {
                w.iter_mut().for_each(|v| *v /= norm);
            }
        }
        weights.push(w);
    }
    Ok(TrainedModel {
        classes,
        feature_fingerprint: x.fingerprint.clone(),
        n_features: n_terms,
        params: ModelParams::Cnb(CnbParams {
            alpha,
            normalize: options.normalize,
            weights,
        }),
        metadata: TrainingMetadata {
            n_train: y.len(),
            class_counts: counts,
            weighting: Some(x.weighting),
            ..TrainingMetadata::default()
        },
        features: None,
    })
}

/// Result of fitting one binary hinge-loss classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Euclidean norm of the weights after each epoch.
    pub epoch_norms: Vec<f64>,
}

/// Fits `w·x + b` to targets in {-1, +1} with per-example hinge updates on
/// a freshly shuffled order each epoch:
///
/// * margin `m = y(w·x + b)`
/// * if `m < 1`: `w ← w(1 − ηλ) + ηyx`, `b ← b + ηy`
/// * else: `w ← w(1 − ηλ)`
///
/// with `η = eta0 / (1 + eta0·λ·t)` and `t` counting updates from zero.
/// `init` warm-starts the weights and bias.
pub fn fit_binary_hinge(
    rows: &[Vec<(usize, f64)>],
    targets: &[f64],
    n_features: usize,
    options: &SgdOptions,
    init: Option<(Vec<f64>, f64)>,
) -> Result<BinaryFit, ModelError> {
    let lambda = options.l2_lambda;
    let (mut v, mut bias) = init.unwrap_or_else(|| (vec![0.0; n_features], 0.0));
    // w = scale * v keeps the shrink step O(1) on sparse rows.
    let mut scale = 1.0f64;
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut t = 0u64;
    let mut epoch_norms = Vec::with_capacity(options.epochs);
    for epoch in 0..options.epochs {
        order.shuffle(&mut rng);
        for &idx in &order {
            let eta = options.eta0 / (1.0 + options.eta0 * lambda * t as f64);
            let y = targets[idx];
            let row = &rows[idx];
            let dot: f64 = row.iter().map(|&(i, xv)| v[i] * xv).sum::<f64>() * scale;
            let margin = y * (dot + bias);
            let shrink = 1.0 - eta * lambda;
            if shrink <= 0.0 {
                v.iter_mut().for_each(|x| *x = 0.0);
                scale = 1.0;
            } else {
                scale *= shrink;
            }
            if scale < 1e-9 {
                v.iter_mut().for_each(|x| *x *= scale);
                scale = 1.0;
            }
            if margin < 1.0 {
                let step = eta * y / scale;
                for &(i, xv) in row {
                    v[i] += step * xv;
                }
                bias += eta * y;
            }
            t += 1;
        }
        let norm = scale * v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || !bias.is_finite() || !scale.is_finite() {
            return Err(ModelError::Diverged { epoch: epoch + 1 });
        }
        epoch_norms.push(norm);
    }
    v.iter_mut().for_each(|x| *x *= scale);
    Ok(BinaryFit {
        weights: v,
        bias,
        epoch_norms,
    })
}

pub fn train_sgd(x: &DocTermMatrix, y: &[ActionClass], options: &SgdOptions) -> Result<TrainedModel, ModelError> {
    let (classes, counts) = check_training(x, y)?;
    if options.loss != "hinge" {
        return Err(ModelError::UnsupportedVariant(format!("sgd loss {}", options.loss)));
    }
    let mut weights = Vec::with_capacity(classes.len());
    let mut biases = Vec::with_capacity(classes.len());
    for &class in &classes {
        let targets: Vec<f64> = y.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
        let fit = fit_binary_hinge(&x.rows, &targets, x.n_terms, options, None)?;
        weights.push(fit.weights);
        biases.push(fit.bias);
    }
    Ok(TrainedModel {
        classes,
        feature_fingerprint: x.fingerprint.clone(),
        n_features: x.n_terms,
        params: ModelParams::Sgd(SgdParams {
            hyperparameters: options.clone(),
            weights,
            biases,
        }),
        metadata: TrainingMetadata {
            n_train: y.len(),
            class_counts: counts,
            weighting: Some(x.weighting),
            ..TrainingMetadata::default()
        },
        features: None,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelOptions {
    pub cnb: CnbOptions,
    pub sgd: SgdOptions,
}

/// Trains the requested variant; `seed` drives the dummy sampler and the SGD
/// shuffle.
pub fn train(
    kind: ModelKind,
    x: &DocTermMatrix,
    y: &[ActionClass],
    options: &ModelOptions,
    seed: u64,
) -> Result<TrainedModel, ModelError> {
    match kind {
        ModelKind::Dummy => {
            if x.n_docs() != y.len() {
                return Err(ModelError::LengthMismatch {
                    rows: x.n_docs(),
                    labels: y.len(),
                });
            }
            let mut model = train_dummy(y, seed)?;
            model.feature_fingerprint = x.fingerprint.clone();
            model.n_features = x.n_terms;
            model.metadata.weighting = Some(x.weighting);
            Ok(model)
        }
        ModelKind::Cnb => train_cnb(x, y, options.cnb),
        ModelKind::Sgd => {
            let sgd = SgdOptions {
                seed,
                ..options.sgd.clone()
            };
            train_sgd(x, y, &sgd)
        }
    }
}

fn first_extreme(scores: &[f64], lowest: bool) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        let better = if lowest { s < scores[best] } else { s > scores[best] };
        if better {
            best = i;
        }
    }
    best
}

fn dot(weights: &[f64], row: &[(usize, f64)]) -> f64 {
    row.iter().map(|&(i, v)| weights[i] * v).sum()
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self.params {
            ModelParams::Dummy(_) => ModelKind::Dummy,
            ModelParams::Cnb(_) => ModelKind::Cnb,
            ModelParams::Sgd(_) => ModelKind::Sgd,
        }
    }

    /// Most frequent training class, earliest in schema order on ties.
    pub fn majority_class(&self) -> ActionClass {
        let counts = &self.metadata.class_counts;
        let mut best = 0;
        for i in 1..counts.len() {
            if counts[i] > counts[best] {
                best = i;
            }
        }
        self.classes[best]
    }

    pub fn with_features(mut self, space: FeatureSpace) -> TrainedModel {
        self.feature_fingerprint = space.fingerprint();
        self.n_features = space.vocab.len();
        self.features = Some(space);
        self
    }

    fn check_input(&self, x: &DocTermMatrix) -> Result<(), ModelError> {
        if self.feature_fingerprint.is_empty() {
            return Ok(());
        }
        if x.fingerprint != self.feature_fingerprint || (self.kind() != ModelKind::Dummy && x.n_terms != self.n_features)
        {
            return Err(ModelError::FeatureSpaceMismatch {
                expected: self.feature_fingerprint.clone(),
                found: if x.fingerprint.is_empty() {
                    "<none>".into()
                } else {
                    x.fingerprint.clone()
                },
            });
        }
        Ok(())
    }

    /// One score row per input row, aligned with `classes`. Dummy rows are
    /// one-hot on the sampled class; CNB rows are complement log-weights
    /// (lower is better); SGD rows are margins (higher is better).
    pub fn predict_scores(&self, x: &DocTermMatrix) -> Result<Scores, ModelError> {
        self.check_input(x)?;
        let rows = match &self.params {
            ModelParams::Dummy(p) => {
                let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
                (0..x.n_docs())
                    .map(|_| {
                        let drawn = sample_index(&p.probabilities, rng.random::<f64>());
                        (0..self.classes.len()).map(|c| if c == drawn { 1.0 } else { 0.0 }).collect()
                    })
                    .collect()
            }
            ModelParams::Cnb(p) => x
                .rows
                .iter()
                .map(|row| p.weights.iter().map(|w| dot(w, row)).collect())
                .collect(),
            ModelParams::Sgd(p) => x
                .rows
                .iter()
                .map(|row| p.weights.iter().zip(&p.biases).map(|(w, b)| dot(w, row) + b).collect())
                .collect(),
        };
        Ok(Scores {
            classes: self.classes.clone(),
            rows,
        })
    }

    /// Label for each row by the variant's decision rule.
    pub fn predict(&self, x: &DocTermMatrix) -> Result<Vec<ActionClass>, ModelError> {
        Ok(self.predict_detailed(x)?.into_iter().map(|p| p.label).collect())
    }

    pub fn predict_detailed(&self, x: &DocTermMatrix) -> Result<Vec<Prediction>, ModelError> {
        let scores = self.predict_scores(x)?;
        let lowest = matches!(self.params, ModelParams::Cnb(_));
        Ok(scores
            .rows
            .iter()
            .enumerate()
            .map(|(r, row)| Prediction {
                label: self.classes[first_extreme(row, lowest)],
                low_confidence: self.kind() != ModelKind::Dummy && x.is_zero_row(r),
            })
            .collect())
    }

    pub fn save<W: Write>(&self, mut sink: W) -> Result<(), ModelError> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            classes: self.classes.clone(),
            feature_fingerprint: self.feature_fingerprint.clone(),
            n_features: self.n_features,
            metadata: self.metadata.clone(),
            params: self.params.clone(),
            features: self.features.as_ref().map(FeatureSpace::to_text),
        };
        writeln!(sink, "{MAGIC} v{MODEL_FORMAT_VERSION}")?;
        serde_json::to_writer(&mut sink, &file).map_err(|e| ModelError::Corrupt(e.to_string()))?;
        sink.write_all(b"\n")?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.save(&mut buf).expect("writing to memory");
        buf
    }

    pub fn load<R: Read>(mut source: R) -> Result<TrainedModel, ModelError> {
        let mut text = String::new();
        source
            .read_to_string(&mut text)
            .map_err(|e| ModelError::Corrupt(e.to_string()))?;
        let (header, body) = text
            .split_once('\n')
            .ok_or_else(|| ModelError::Corrupt("missing header line".into()))?;
        let version = header
            .strip_prefix(MAGIC)
            .and_then(|rest| rest.trim().strip_prefix('v'))
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| ModelError::Corrupt("not a model file".into()))?;
        if version != MODEL_FORMAT_VERSION {
            return Err(ModelError::VersionMismatch {
                found: version,
                supported: MODEL_FORMAT_VERSION,
            });
        }
        let value: Value = serde_json::from_str(body).map_err(|e| ModelError::Corrupt(e.to_string()))?;
        match value.pointer("/params/variant").and_then(Value::as_str) {
            Some("dummy" | "cnb" | "sgd") => {}
            Some(other) => return Err(ModelError::UnsupportedVariant(other.to_string())),
            None => return Err(ModelError::Corrupt("missing variant tag".into())),
        }
        let file: ModelFile = serde_json::from_value(value).map_err(|e| ModelError::Corrupt(e.to_string()))?;
        if file.format_version != version {
            return Err(ModelError::Corrupt("header and body versions differ".into()));
        }
        let features = file.features.as_deref().map(FeatureSpace::from_text).transpose()?;
        let model = TrainedModel {
            classes: file.classes,
            feature_fingerprint: file.feature_fingerprint,
            n_features: file.n_features,
            params: file.params,
            metadata: file.metadata,
            features,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let k = self.classes.len();
        if k == 0 {
            return Err(ModelError::Corrupt("empty class list".into()));
        }
        if self.metadata.class_counts.len() != k {
            return Err(ModelError::Corrupt("class counts do not match class list".into()));
        }
        let shape_ok = match &self.params {
            ModelParams::Dummy(p) => p.probabilities.len() == k,
            ModelParams::Cnb(p) => p.weights.len() == k && p.weights.iter().all(|w| w.len() == self.n_features),
            ModelParams::Sgd(p) => {
                p.weights.len() == k && p.biases.len() == k && p.weights.iter().all(|w| w.len() == self.n_features)
            }
        };
        if !shape_ok {
            return Err(ModelError::Corrupt("weight shape does not match class list or vocabulary".into()));
        }
        if let Some(space) = &self.features {
            if space.fingerprint() != self.feature_fingerprint {
                return Err(ModelError::Corrupt("bundled features do not match fingerprint".into()));
            }
        }
        Ok(())
    }
}

fn sample_index(probabilities: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probabilities.len() - 1
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    classes: Vec<ActionClass>,
    feature_fingerprint: String,
    n_features: usize,
    metadata: TrainingMetadata,
    params: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<String>,
}
