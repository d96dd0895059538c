//! Logistic regression and random forest detectors, their cross-validated
//! training and the persisted model artifact.

pub mod cv;
pub mod forest;
pub mod logistic;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{
    normalize_fit, Feature, FeatureVector, NormalizationParams, Vector, N_FEATURES,
};
use crate::math;
use crate::packet::WindowLabel;
use crate::slice::SliceId;

pub use cv::{cross_validate, lr_grid, rf_grid, CvResult, GridPoint};
pub use forest::{train_rf, Forest, RfConfig};
pub use logistic::{sigmoid, train_lr, LogisticModel, LrConfig};

pub const ARTIFACT_VERSION: u32 = 1;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub(crate) fn check_training_set(n: usize, y: &[bool]) -> Result<()> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if n != y.len() {
        return Err(Error::LengthMismatch {
            left: n,
            right: y.len(),
        });
    }
    let pos = y.iter().filter(|&&v| v).count();
    if pos == 0 || pos == n {
        return Err(Error::SingleClass);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Lr,
    Rf,
}

impl ModelKind {
    pub const fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lr => "lr",
            ModelKind::Rf => "rf",
        }
    }

    pub fn grid(self) -> Vec<GridPoint> {
        match self {
            ModelKind::Lr => lr_grid(),
            ModelKind::Rf => rf_grid(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    PerSlice(SliceId),
    Global,
}

impl Scope {
    pub fn admits(self, slice: SliceId) -> bool {
        match self {
            Scope::PerSlice(s) => s == slice,
            Scope::Global => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Lr(LogisticModel),
    Rf(Forest),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Lr(_) => ModelKind::Lr,
            Model::Rf(_) => ModelKind::Rf,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::Lr(m) => m.weights.len(),
            Model::Rf(f) => f.n_features,
        }
    }

    /// Spoofed-class confidence of an already normalized vector.
    pub fn confidence(&self, x: &[f64]) -> f64 {
        match self {
            Model::Lr(m) => m.confidence(x),
            Model::Rf(f) => f.confidence(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: WindowLabel,
    pub confidence: f64,
}

/// Label is spoofed when the confidence reaches `threshold`.
pub fn predict(model: &Model, x: &[f64], threshold: f64) -> Result<Verdict> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: x.len(),
        });
    }
    let confidence = model.confidence(x);
    Ok(Verdict {
        label: WindowLabel::from_bool(confidence >= threshold),
        confidence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub grid_point: GridPoint,
    pub cv_f1: Option<f64>,
    pub seed: u64,
    pub dataset_digest: String,
    pub n_train: usize,
}

/// A trained detector with the normalization it was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub version: u32,
    pub scope: Scope,
    pub normalization: NormalizationParams,
    pub meta: TrainingMeta,
    pub model: Model,
}

impl ModelArtifact {
    pub fn kind(&self) -> ModelKind {
        self.model.kind()
    }

    /// Verdict for a raw (unnormalized) feature vector.
    pub fn classify(&self, raw: &Vector, threshold: f64) -> Verdict {
        let x = self.normalization.apply(raw);
        let confidence = self.model.confidence(&x);
        Verdict {
            label: WindowLabel::from_bool(confidence >= threshold),
            confidence,
        }
    }

    pub fn confidence(&self, raw: &Vector) -> f64 {
        self.model.confidence(&self.normalization.apply(raw))
    }
}

/// Hex SHA-256 over the sample bits and labels.
pub fn dataset_digest(x: &[Vector], y: &[bool]) -> String {
    let mut h = Sha256::new();
    h.update((x.len() as u64).to_le_bytes());
    for (r, &l) in x.iter().zip(y) {
        for v in r {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update([l as u8]);
    }
    let mut s = String::with_capacity(64);
    for b in h.finalize().iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Trains one grid point on normalized samples.
pub fn fit_point(x: &[Vector], y: &[bool], point: GridPoint, seed: u64) -> Result<Model> {
    Ok(match point {
        GridPoint::Lr { c } => Model::Lr(train_lr(x, y, &LrConfig::with_c(c))?),
        GridPoint::Rf {
            n_estimators,
            max_depth,
        } => Model::Rf(train_rf(
            x,
            y,
            &cv::rf_config(n_estimators, max_depth, seed),
        )?),
    })
}

/// Fits normalization on the training windows, picks the grid point by
/// stratified cross-validation and trains it on the whole training set.
pub fn train_artifact(
    kind: ModelKind,
    scope: Scope,
    train: &[FeatureVector],
    folds: usize,
    seed: u64,
) -> Result<(ModelArtifact, CvResult)> {
    train_artifact_on_grid(kind, scope, train, &kind.grid(), folds, seed)
}

pub fn train_artifact_on_grid(
    kind: ModelKind,
    scope: Scope,
    train: &[FeatureVector],
    grid: &[GridPoint],
    folds: usize,
    seed: u64,
) -> Result<(ModelArtifact, CvResult)> {
    if grid
        .iter()
        .any(|g| matches!(g, GridPoint::Lr { .. }) != (kind == ModelKind::Lr))
    {
        return Err(Error::InvalidConfig(
            "grid does not match model kind".into(),
        ));
    }
    let normalization = normalize_fit(train)?;
    let x: Vec<Vector> = train
        .iter()
        .map(|f| normalization.apply(&f.values))
        .collect();
    let y: Vec<bool> = train.iter().map(|f| f.label.is_spoofed()).collect();
    let result = cross_validate(&x, &y, grid, folds, seed)?;
    let point = result.best();
    let model = fit_point(&x, &y, point, seed)?;
    let artifact = ModelArtifact {
        version: ARTIFACT_VERSION,
        scope,
        normalization,
        meta: TrainingMeta {
            grid_point: point,
            cv_f1: Some(result.best_mean_f1()),
            seed,
            dataset_digest: dataset_digest(&x, &y),
            n_train: x.len(),
        },
        model,
    };
    Ok((artifact, result))
}

/// Gini importance of a forest artifact, sorted by weight.
pub fn feature_importance(artifact: &ModelArtifact) -> Result<Vec<(Feature, f64)>> {
    match &artifact.model {
        Model::Rf(f) => Ok(ranked(&f.importance())),
        Model::Lr(_) => Err(Error::NotAForest),
    }
}

/// Logistic weights ranked by magnitude, normalized to sum 1.
pub fn lr_weight_ranking(artifact: &ModelArtifact) -> Result<Vec<(Feature, f64)>> {
    match &artifact.model {
        Model::Lr(m) => {
            let s: f64 = m.weights.iter().map(|w| math::abs(*w)).sum();
            let w: Vec<f64> = m
                .weights
                .iter()
                .map(|w| if s > 0.0 { math::abs(*w) / s } else { 0.0 })
                .collect();
            Ok(ranked(&w))
        }
        Model::Rf(_) => Err(Error::InvalidConfig(
            "weight ranking needs a logistic model".into(),
        )),
    }
}

fn ranked(w: &[f64]) -> Vec<(Feature, f64)> {
    let mut out: Vec<(Feature, f64)> = (0..N_FEATURES.min(w.len()))
        .map(|i| (Feature::from_index(i).expect("index in range"), w[i]))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}
