//! Cross-domain shift estimators.
//!
//! **Conditional shift.** For domains `i` and `j`, `mu(i, j)` is the fraction
//! of domain `i`'s rows whose label disagrees with a k-NN classifier trained
//! on domain `j`. The disparity matrix holds `d(i, j) = min(mu(i, j), mu(j, i))`
//! and the conditional shift is its Frobenius norm divided by `M`. Diagonal
//! entries use a disjoint train/test split of the domain, so they measure how
//! well the k-NN approximates the domain's own labeling.
//!
//! **Marginal shift.** For each unordered pair a random forest learns to tell
//! the two domains apart; the matrix entry is its cross-validated accuracy
//! (chance is 0.5) and the marginal shift is again the rescaled Frobenius norm.

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{accuracy, cross_validate, knn_fit, stratified_folds, ForestConfig, ModelConfig};
use crate::error::{Error, Result};
use crate::matrix::PairwiseMatrix;
use crate::rng;
use crate::table::{FeatureMatrix, FeatureTable, SegmentTag};

/// One domain's labeled rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub id: u32,
    pub features: FeatureMatrix,
    pub labels: Vec<u32>,
}

impl Domain {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Domains sharing one feature space; every domain holds both classes.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiDomainDataset {
    dim: usize,
    domains: Vec<Domain>,
}

impl MultiDomainDataset {
    pub fn new(domains: Vec<Domain>) -> Result<Self> {
        let dim = domains
            .first()
            .map(|d| d.features.dim())
            .ok_or_else(|| Error::Empty("dataset has no domains".into()))?;
        for d in &domains {
            if d.features.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: d.features.dim(),
                });
            }
            if d.features.len() != d.labels.len() {
                return Err(Error::DimensionMismatch {
                    expected: d.features.len(),
                    found: d.labels.len(),
                });
            }
            if d.is_empty() {
                return Err(Error::Empty(format!("domain {} has no rows", d.id)));
            }
            let first = d.labels[0];
            if d.labels.iter().all(|&l| l == first) {
                return Err(Error::DegenerateModel(format!(
                    "domain {} has a single class",
                    d.id
                )));
            }
        }
        Ok(MultiDomainDataset { dim, domains })
    }

    /// One domain per subject from the labeled task rows, in subject order.
    pub fn from_table(table: &FeatureTable) -> Result<Self> {
        let domains = table
            .subjects()
            .into_iter()
            .map(|s| {
                let mut features = FeatureMatrix::new(table.dim());
                let mut labels = Vec::new();
                for r in table.rows().iter().filter(|r| r.subject == s && r.segment == SegmentTag::Task) {
                    if let Some(c) = r.condition {
                        features.push(&r.features)?;
                        labels.push(c.label());
                    }
                }
                Ok(Domain { id: s, features, labels })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(domains.into_iter().filter(|d| !d.is_empty()).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    pub fn domain(&self, i: usize) -> &Domain {
        &self.domains[i]
    }

    pub fn ids(&self) -> Vec<u32> {
        self.domains.iter().map(|d| d.id).collect()
    }

    pub fn into_domains(self) -> Vec<Domain> {
        self.domains
    }
}

/// How pairwise discrimination results are stored in the marginal matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreEncoding {
    #[default]
    Accuracy,
    ErrorRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftConfig {
    /// Neighbours in the k-NN labeling function.
    pub k: usize,
    /// Trees in the domain discriminator.
    pub n_trees: usize,
    pub folds: usize,
    pub h_encoding: ScoreEncoding,
    /// Fixed diagonal of the marginal matrix.
    pub h_diagonal: f64,
    pub seed: u64,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        ShiftConfig {
            k: 1,
            n_trees: 20,
            folds: 5,
            h_encoding: ScoreEncoding::Accuracy,
            h_diagonal: 0.5,
            seed: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftKind {
    Conditional,
    Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftEstimate {
    pub kind: ShiftKind,
    pub value: f64,
    pub matrix: PairwiseMatrix,
    pub config: ShiftConfig,
}

fn check_index(ds: &MultiDomainDataset, i: usize) -> Result<()> {
    if i >= ds.len() {
        return Err(Error::Config(format!(
            "domain index {i} out of range for {} domains",
            ds.len()
        )));
    }
    Ok(())
}

/// Disagreement rate between domain `i`'s labels and a k-NN trained on
/// domain `j`. For `i == j` the domain is split into stratified halves with
/// the stream `(seed, i)`: train on one, evaluate on the other.
pub fn estimate_mu(ds: &MultiDomainDataset, i: usize, j: usize, cfg: &ShiftConfig) -> Result<f64> {
    check_index(ds, i)?;
    check_index(ds, j)?;
    let (di, dj) = (ds.domain(i), ds.domain(j));
    if i != j {
        let model = knn_fit(&dj.features, &dj.labels, cfg.k)?;
        let pred = model.predict(&di.features)?;
        return accuracy(&pred, &di.labels).map(|a| 1.0 - a);
    }
    let halves = stratified_folds(&di.labels, 2, rng::derive_seed(cfg.seed, &[0xD1A6, i as u64]))?;
    let (train, test) = (&halves[0], &halves[1]);
    let train_y: Vec<u32> = train.iter().map(|&r| di.labels[r]).collect();
    let test_y: Vec<u32> = test.iter().map(|&r| di.labels[r]).collect();
    let model = knn_fit(&di.features.select(train), &train_y, cfg.k)?;
    let pred = model.predict(&di.features.select(test))?;
    accuracy(&pred, &test_y).map(|a| 1.0 - a)
}

/// All `mu(i, j)`, row `i` = evaluated domain, column `j` = labeling domain.
pub fn mu_matrix(ds: &MultiDomainDataset, cfg: &ShiftConfig) -> Result<PairwiseMatrix> {
    let m = ds.len();
    let values = (0..m * m)
        .into_par_iter()
        .map(|k| estimate_mu(ds, k / m, k % m, cfg))
        .collect::<Result<Vec<f64>>>()?;
    let rows: Vec<Vec<f64>> = values.chunks(m).map(<[f64]>::to_vec).collect();
    PairwiseMatrix::from_rows(ds.ids(), &rows)
}

/// Symmetrizes a `mu` matrix with the elementwise minimum.
pub fn disparity_from_mu(mu: &PairwiseMatrix) -> PairwiseMatrix {
    let mut d = mu.clone();
    let m = mu.size();
    for i in 0..m {
        for j in 0..m {
            d.set(i, j, mu.get(i, j).min(mu.get(j, i)));
        }
    }
    d
}

pub fn disparity_matrix(ds: &MultiDomainDataset, cfg: &ShiftConfig) -> Result<PairwiseMatrix> {
    mu_matrix(ds, cfg).map(|mu| disparity_from_mu(&mu))
}

pub fn conditional_shift(disparity: &PairwiseMatrix, cfg: &ShiftConfig) -> ShiftEstimate {
    ShiftEstimate {
        kind: ShiftKind::Conditional,
        value: disparity.rescaled_frobenius(),
        matrix: disparity.clone(),
        config: *cfg,
    }
}

/// Cross-validated accuracy of a forest separating domain `i` (pseudo-label
/// 0) from domain `j` (pseudo-label 1).
///
/// The larger domain is subsampled to the size of the smaller. Folds are
/// paired: the `r`-th kept row of each domain lands in the same fold, so a
/// row and an exact copy of it in the other domain are never split between
/// training and test.
pub fn pairwise_domain_score(ds: &MultiDomainDataset, i: usize, j: usize, cfg: &ShiftConfig) -> Result<f64> {
    check_index(ds, i)?;
    check_index(ds, j)?;
    if i == j {
        return Err(Error::Config("pairwise discrimination needs two distinct domains".into()));
    }
    let (lo, hi) = (i.min(j), i.max(j));
    let mut rng = rng::stream(cfg.seed, &[0x4D, lo as u64, hi as u64]);
    let (a, b) = (ds.domain(i), ds.domain(j));
    let n = a.len().min(b.len());
    if n < cfg.folds {
        return Err(Error::DegenerateModel(format!(
            "domains {} and {} give {n} balanced rows for {} folds",
            a.id, b.id, cfg.folds
        )));
    }
    let mut keep = |d: &Domain| -> Vec<usize> {
        if d.len() == n {
            (0..n).collect()
        } else {
            let mut idx = index::sample(&mut rng, d.len(), n).into_vec();
            idx.sort_unstable();
            idx
        }
    };
    let (keep_a, keep_b) = (keep(a), keep(b));

    let mut pooled = a.features.select(&keep_a);
    for &r in &keep_b {
        pooled.push(b.features.row(r))?;
    }
    let labels: Vec<u32> = (0..2 * n).map(|r| (r >= n) as u32).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); cfg.folds];
    for (pos, &r) in order.iter().enumerate() {
        folds[pos % cfg.folds].push(r);
        folds[pos % cfg.folds].push(n + r);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());

    let model = ModelConfig::Forest(ForestConfig::with_trees(cfg.n_trees));
    let seed = rng::derive_seed(cfg.seed, &[0x4D, lo as u64, hi as u64, 1]);
    cross_validate(&pooled, &labels, &folds, &model, seed).map(|cv| cv.mean)
}

/// Pairwise discrimination scores, computed once per unordered pair.
pub fn marginal_matrix(ds: &MultiDomainDataset, cfg: &ShiftConfig) -> Result<PairwiseMatrix> {
    let m = ds.len();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let scores = pairs
        .par_iter()
        .map(|&(i, j)| pairwise_domain_score(ds, i, j, cfg))
        .collect::<Result<Vec<f64>>>()?;
    let mut h = PairwiseMatrix::filled(ds.ids(), cfg.h_diagonal);
    for (&(i, j), &acc) in pairs.iter().zip(&scores) {
        let v = match cfg.h_encoding {
            ScoreEncoding::Accuracy => acc,
            ScoreEncoding::ErrorRate => 1.0 - acc,
        };
        h.set(i, j, v);
        h.set(j, i, v);
    }
    Ok(h)
}

pub fn marginal_shift(h: &PairwiseMatrix, cfg: &ShiftConfig) -> ShiftEstimate {
    ShiftEstimate {
        kind: ShiftKind::Marginal,
        value: h.rescaled_frobenius(),
        matrix: h.clone(),
        config: *cfg,
    }
}

/// Column means of a (repetition-averaged) disparity matrix, excluding the
/// diagonal: how far each subject sits from all others.
pub fn per_subject_disparity(avg: &PairwiseMatrix) -> Vec<f64> {
    let m = avg.size();
    if m < 2 {
        return vec![0.0; m];
    }
    (0..m)
        .map(|j| (0..m).filter(|&i| i != j).map(|i| avg.get(i, j)).sum::<f64>() / (m - 1) as f64)
        .collect()
}
