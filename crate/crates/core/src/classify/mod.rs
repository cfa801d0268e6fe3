//! Self-contained classifiers and cross-validation.
//!
//! Labels are plain `u32` class ids. Every vote in this module breaks ties
//! towards the smallest label, so outputs are deterministic functions of
//! data, configuration and seed.

mod cv;
mod forest;
mod knn;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::FeatureMatrix;

pub use cv::{cross_validate, kfold_cv, stratified_folds, CvResult};
pub use forest::{forest_fit, ForestConfig, ForestModel, Tree};
pub use knn::{knn_fit, KnnModel};

/// Fraction of positions where prediction and truth agree.
pub fn accuracy(pred: &[u32], truth: &[u32]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty("accuracy of zero predictions".into()));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

pub fn error_rate(pred: &[u32], truth: &[u32]) -> Result<f64> {
    accuracy(pred, truth).map(|a| 1.0 - a)
}

/// Most frequent label; ties go to the smallest.
pub(crate) fn vote(labels: impl Iterator<Item = u32>) -> u32 {
    let mut tally: Vec<(u32, usize)> = Vec::new();
    for l in labels {
        match tally.iter_mut().find(|(x, _)| *x == l) {
            Some((_, c)) => *c += 1,
            None => tally.push((l, 1)),
        }
    }
    tally
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(l, _)| l)
        .expect("vote over at least one label")
}

/// Which model to train inside cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelConfig {
    Knn { k: usize },
    Forest(ForestConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Knn(KnnModel),
    Forest(ForestModel),
}

impl ModelConfig {
    pub fn fit(&self, features: &FeatureMatrix, labels: &[u32], seed: u64) -> Result<Model> {
        match self {
            ModelConfig::Knn { k } => knn_fit(features, labels, *k).map(Model::Knn),
            ModelConfig::Forest(cfg) => forest_fit(features, labels, cfg, seed).map(Model::Forest),
        }
    }
}

impl Model {
    pub fn predict(&self, features: &FeatureMatrix) -> Result<Vec<u32>> {
        match self {
            Model::Knn(m) => m.predict(features),
            Model::Forest(m) => m.predict(features),
        }
    }
}
