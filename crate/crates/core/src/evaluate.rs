//! Leave-one-subject-out (LOSO) evaluation and the repeated experiment.
//!
//! In a LOSO run one subject is the unseen target. Every other subject gives
//! up a random hold-out of its rows; a forest is trained on what remains of
//! the training subjects, scored on the pooled hold-out (train accuracy) and
//! on the left-out subject (test accuracy). The generalization gap is the
//! absolute difference of the two.

use std::collections::BTreeMap;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{accuracy, forest_fit, ForestConfig};
use crate::error::{Error, Result};
use crate::matrix::PairwiseMatrix;
use crate::normalize::{normalize, NormKind, NormScheme};
use crate::rng;
use crate::shift::{
    conditional_shift, disparity_matrix, marginal_matrix, marginal_shift, per_subject_disparity, MultiDomainDataset,
    ScoreEncoding, ShiftConfig,
};
use crate::table::{FeatureMatrix, FeatureTable, SegmentTag};

pub const DEFAULT_HOLDOUT: usize = 200;

/// A row of a [`MultiDomainDataset`], by domain id and position in the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowRef {
    pub domain: u32,
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosoSplit {
    pub left_out: u32,
    pub train: Vec<RowRef>,
    pub holdout: Vec<RowRef>,
    pub test: Vec<RowRef>,
}

impl LosoSplit {
    /// Features and labels of the referenced rows, in order.
    pub fn gather(ds: &MultiDomainDataset, refs: &[RowRef]) -> Result<(FeatureMatrix, Vec<u32>)> {
        let mut x = FeatureMatrix::new(ds.dim());
        let mut y = Vec::with_capacity(refs.len());
        for r in refs {
            let d = ds
                .domains()
                .iter()
                .find(|d| d.id == r.domain)
                .ok_or_else(|| Error::Config(format!("no domain {}", r.domain)))?;
            x.push(d.features.row(r.row))?;
            y.push(d.labels[r.row]);
        }
        Ok((x, y))
    }
}

/// Splits off domain `left_out` (an index) as the target. Each training
/// domain loses `holdout` rows, drawn without replacement with the stream
/// `(seed, left_out id, domain id)`.
pub fn loso_split(ds: &MultiDomainDataset, left_out: usize, holdout: usize, seed: u64) -> Result<LosoSplit> {
    if ds.len() < 2 {
        return Err(Error::Config("LOSO needs at least 2 subjects".into()));
    }
    if left_out >= ds.len() {
        return Err(Error::Config(format!("subject index {left_out} out of range")));
    }
    if holdout == 0 {
        return Err(Error::Config("hold-out size must be positive".into()));
    }
    let target = ds.domain(left_out);
    let mut split = LosoSplit {
        left_out: target.id,
        train: Vec::new(),
        holdout: Vec::new(),
        test: (0..target.len()).map(|row| RowRef { domain: target.id, row }).collect(),
    };
    for d in ds.domains().iter().filter(|d| d.id != target.id) {
        if d.len() <= holdout {
            return Err(Error::InsufficientRows {
                subject: d.id,
                needed: holdout + 1,
                found: d.len(),
            });
        }
        let mut rng = rng::stream(seed, &[target.id as u64, d.id as u64]);
        let mut held = vec![false; d.len()];
        for i in index::sample(&mut rng, d.len(), holdout) {
            held[i] = true;
        }
        for (row, h) in held.into_iter().enumerate() {
            let r = RowRef { domain: d.id, row };
            if h {
                split.holdout.push(r);
            } else {
                split.train.push(r);
            }
        }
    }
    Ok(split)
}

pub fn generalization_gap(train_acc: f64, test_acc: f64) -> f64 {
    (train_acc - test_acc).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LosoConfig {
    pub n_trees: usize,
    pub holdout: usize,
}

impl Default for LosoConfig {
    fn default() -> Self {
        LosoConfig {
            n_trees: 30,
            holdout: DEFAULT_HOLDOUT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectOutcome {
    pub subject: u32,
    pub train_acc: f64,
    pub test_acc: f64,
    pub gap: f64,
}

/// One LOSO fold per subject. Rows should already be normalized; every
/// scheme in [`crate::normalize`] is subject-wise, so the target's rows never
/// reach another subject's statistics.
pub fn run_loso(ds: &MultiDomainDataset, cfg: &LosoConfig, seed: u64) -> Result<Vec<SubjectOutcome>> {
    let forest = ForestConfig::with_trees(cfg.n_trees);
    (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let split = loso_split(ds, i, cfg.holdout, rng::derive_seed(seed, &[0x5B1]))?;
            let (x, y) = LosoSplit::gather(ds, &split.train)?;
            let model = forest_fit(&x, &y, &forest, rng::derive_seed(seed, &[0xF0, split.left_out as u64]))?;
            let (hx, hy) = LosoSplit::gather(ds, &split.holdout)?;
            let (tx, ty) = LosoSplit::gather(ds, &split.test)?;
            let train_acc = accuracy(&model.predict(&hx)?, &hy)?;
            let test_acc = accuracy(&model.predict(&tx)?, &ty)?;
            Ok(SubjectOutcome {
                subject: split.left_out,
                train_acc,
                test_acc,
                gap: generalization_gap(train_acc, test_acc),
            })
        })
        .collect()
}

/// Keeps `n` task rows of every (subject, condition) group, drawn without
/// replacement; other segments pass through. Row order is preserved.
pub fn subsample_task_rows(table: &FeatureTable, n: usize, seed: u64) -> Result<FeatureTable> {
    let mut groups: BTreeMap<(u32, Option<u32>), Vec<usize>> = BTreeMap::new();
    for (i, r) in table.rows().iter().enumerate() {
        if r.segment == SegmentTag::Task {
            groups.entry((r.subject, r.condition.map(|c| c.label()))).or_default().push(i);
        }
    }
    let mut keep = vec![true; table.len()];
    for ((subject, label), rows) in &groups {
        if rows.len() < n {
            return Err(Error::InsufficientRows {
                subject: *subject,
                needed: n,
                found: rows.len(),
            });
        }
        rows.iter().for_each(|&i| keep[i] = false);
        let tag = label.map_or(u64::MAX, u64::from);
        let mut rng = rng::stream(seed, &[*subject as u64, tag]);
        for k in index::sample(&mut rng, rows.len(), n) {
            keep[rows[k]] = true;
        }
    }
    let rows = table
        .rows()
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(r, _)| r.clone())
        .collect();
    FeatureTable::from_rows(table.dim(), rows)
}

/// Everything a repeated experiment needs besides the data. Defaults follow
/// the reference protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub schemes: Vec<NormScheme>,
    /// Neighbours of the k-NN labeling function.
    pub k: usize,
    /// Trees of the subject (domain) discriminator.
    pub trees_subject: usize,
    /// Trees of the workload classifier in LOSO.
    pub trees_workload: usize,
    pub folds: usize,
    pub reps: usize,
    /// Task rows kept per subject and condition; `None` keeps all.
    pub subsample: Option<usize>,
    pub holdout: usize,
    pub seed: u64,
    pub h_encoding: ScoreEncoding,
    /// Whether to run the LOSO classifier as well as the shift estimators.
    pub loso: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schemes: vec![NormScheme::of(NormKind::None)],
            k: 1,
            trees_subject: 20,
            trees_workload: 30,
            folds: 5,
            reps: 30,
            subsample: Some(300),
            holdout: DEFAULT_HOLDOUT,
            seed: 10,
            h_encoding: ScoreEncoding::Accuracy,
            loso: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k", self.k),
            ("trees-subject", self.trees_subject),
            ("trees-workload", self.trees_workload),
            ("reps", self.reps),
            ("holdout", self.holdout),
            ("subsample", self.subsample.unwrap_or(1)),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("no normalization scheme selected".into()));
        }
        for (i, s) in self.schemes.iter().enumerate() {
            NormScheme::new(s.kind, s.exponent)?;
            if self.schemes[..i].iter().any(|t| t.label() == s.label()) {
                return Err(Error::Config(format!("scheme {s} listed twice")));
            }
        }
        Ok(())
    }

    pub fn shift_config(&self, seed: u64) -> ShiftConfig {
        ShiftConfig {
            k: self.k,
            n_trees: self.trees_subject,
            folds: self.folds,
            h_encoding: self.h_encoding,
            seed,
            ..ShiftConfig::default()
        }
    }

    pub fn loso_config(&self) -> LosoConfig {
        LosoConfig {
            n_trees: self.trees_workload,
            holdout: self.holdout,
        }
    }
}

/// Arithmetic mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        if values.is_empty() {
            return Summary { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Summary { mean, std: var.sqrt() }
    }
}

/// One scheme in one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepResult {
    pub repetition: usize,
    pub scheme: String,
    pub conditional_shift: f64,
    pub marginal_shift: f64,
    pub disparity: PairwiseMatrix,
    pub marginal: PairwiseMatrix,
    pub loso: Vec<SubjectOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LosoSummary {
    pub train: Summary,
    pub test: Summary,
    pub gap: Summary,
}

impl LosoSummary {
    fn of(outcomes: &[&SubjectOutcome]) -> Self {
        let pick = |f: fn(&SubjectOutcome) -> f64| Summary::of(&outcomes.iter().map(|o| f(o)).collect::<Vec<_>>());
        LosoSummary {
            train: pick(|o| o.train_acc),
            test: pick(|o| o.test_acc),
            gap: pick(|o| o.gap),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSummary {
    pub subject: u32,
    #[serde(flatten)]
    pub scores: LosoSummary,
}

/// Aggregates of one scheme over all repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeReport {
    pub scheme: String,
    pub norm: NormScheme,
    pub conditional_shift: Summary,
    pub marginal_shift: Summary,
    pub disparity_avg: PairwiseMatrix,
    pub marginal_avg: PairwiseMatrix,
    /// Off-diagonal column means of `disparity_avg`, in subject order.
    pub per_subject_disparity: Vec<f64>,
    pub loso: Vec<SubjectSummary>,
    /// Pooled over subjects and repetitions.
    pub loso_overall: Option<LosoSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSet {
    pub config: ExperimentConfig,
    pub subjects: Vec<u32>,
    pub schemes: Vec<SchemeReport>,
    /// Ordered by repetition, then by scheme in config order.
    pub runs: Vec<RepResult>,
}

fn run_scheme(
    table: &FeatureTable,
    scheme: NormScheme,
    cfg: &ExperimentConfig,
    repetition: usize,
    rep_seed: u64,
) -> Result<RepResult> {
    let normalized = normalize(table, scheme)?;
    let ds = MultiDomainDataset::from_table(&normalized)?;
    let shift_cfg = cfg.shift_config(rep_seed);
    let disparity = disparity_matrix(&ds, &shift_cfg)?;
    let marginal = marginal_matrix(&ds, &shift_cfg)?;
    let loso = if cfg.loso {
        run_loso(&ds, &cfg.loso_config(), rng::derive_seed(rep_seed, &[0x1050]))?
    } else {
        Vec::new()
    };
    Ok(RepResult {
        repetition,
        scheme: scheme.label(),
        conditional_shift: conditional_shift(&disparity, &shift_cfg).value,
        marginal_shift: marginal_shift(&marginal, &shift_cfg).value,
        disparity,
        marginal,
        loso,
    })
}

/// Runs `cfg.reps` repetitions. Repetition `r` draws its subsample with the
/// stream `(seed, r)`, shared by every scheme, then normalizes, estimates
/// both shifts and (optionally) runs LOSO for each scheme.
pub fn repeat_experiment(table: &FeatureTable, cfg: &ExperimentConfig) -> Result<ReportSet> {
    cfg.validate()?;
    let per_rep = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let rep_seed = rng::derive_seed(cfg.seed, &[r as u64]);
            let data = match cfg.subsample {
                Some(n) => subsample_task_rows(table, n, rep_seed)?,
                None => table.clone(),
            };
            cfg.schemes
                .iter()
                .map(|&s| run_scheme(&data, s, cfg, r, rep_seed))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let runs: Vec<RepResult> = per_rep.into_iter().flatten().collect();

    let schemes = cfg
        .schemes
        .iter()
        .map(|&norm| {
            let label = norm.label();
            let mine: Vec<&RepResult> = runs.iter().filter(|r| r.scheme == label).collect();
            let values = |f: fn(&RepResult) -> f64| mine.iter().map(|r| f(r)).collect::<Vec<_>>();
            let disparity_avg = PairwiseMatrix::mean(&mine.iter().map(|r| r.disparity.clone()).collect::<Vec<_>>())?;
            let marginal_avg = PairwiseMatrix::mean(&mine.iter().map(|r| r.marginal.clone()).collect::<Vec<_>>())?;
            let outcomes: Vec<&SubjectOutcome> = mine.iter().flat_map(|r| &r.loso).collect();
            let loso = disparity_avg
                .ids()
                .iter()
                .filter(|&&s| outcomes.iter().any(|o| o.subject == s))
                .map(|&s| SubjectSummary {
                    subject: s,
                    scores: LosoSummary::of(&outcomes.iter().copied().filter(|o| o.subject == s).collect::<Vec<_>>()),
                })
                .collect();
            Ok(SchemeReport {
                scheme: label,
                norm,
                conditional_shift: Summary::of(&values(|r| r.conditional_shift)),
                marginal_shift: Summary::of(&values(|r| r.marginal_shift)),
                per_subject_disparity: per_subject_disparity(&disparity_avg),
                disparity_avg,
                marginal_avg,
                loso,
                loso_overall: (!outcomes.is_empty()).then(|| LosoSummary::of(&outcomes)),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ReportSet {
        config: cfg.clone(),
        subjects: schemes.first().map(|s| s.disparity_avg.ids().to_vec()).unwrap_or_default(),
        schemes,
        runs,
    })
}
