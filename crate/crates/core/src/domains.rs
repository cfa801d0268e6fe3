//! Synthetic multi-domain oracle with known shift.
//!
//! Domain `i` draws features from an isotropic Gaussian `N(mean_i, scale_i * I)`
//! and labels them by the side of a hyperplane (`normal . x > offset` gives
//! class 1), then flips each label independently with probability `rho_i`.
//!
//! Ground truth is cheap for this family. Let `q` be the probability mass,
//! under domain `i`, of the region where the two noiseless hyperplane labelings
//! disagree, and `r = rho_i (1 - rho_j) + rho_j (1 - rho_i)` the probability
//! that exactly one of two independent flips happens. Then the probability
//! that the observed labels disagree is `q (1 - r) + (1 - q) r`. `q` is
//! estimated by Monte-Carlo; the rest is closed form.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::PairwiseMatrix;
use crate::rng;
use crate::shift::{Domain, MultiDomainDataset};
use crate::table::{Condition, FeatureMatrix, FeatureRow, FeatureTable, SegmentTag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub mean: Vec<f64>,
    /// Isotropic covariance `scale * I`.
    #[serde(default = "one")]
    pub scale: f64,
    pub normal: Vec<f64>,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub flip_rate: f64,
    pub n: usize,
    /// Overrides the `(master_seed, index)` stream when set.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn one() -> f64 {
    1.0
}

impl DomainSpec {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.flip_rate) {
            return Err(Error::Config(format!("flip rate {} outside [0, 0.5]", self.flip_rate)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!("covariance scale {} must be positive", self.scale)));
        }
        if self.normal.len() != self.mean.len() || self.mean.is_empty() {
            return Err(Error::Config("mean and normal must share a positive dimension".into()));
        }
        if self.normal.iter().all(|&v| v == 0.0) {
            return Err(Error::Config("hyperplane normal must be nonzero".into()));
        }
        Ok(())
    }

    /// Noiseless class of `x`.
    pub fn boundary_label(&self, x: &[f64]) -> u32 {
        let s: f64 = self.normal.iter().zip(x).map(|(w, v)| w * v).sum();
        (s > self.offset) as u32
    }

    fn sample_point(&self, rng: &mut rng::StreamRng, g: &Normal<f64>) -> Vec<f64> {
        let sd = self.scale.sqrt();
        self.mean.iter().map(|m| m + sd * g.sample(rng)).collect()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let d2: f64 = self.mean.iter().zip(x).map(|(m, v)| (v - m) * (v - m)).sum();
        -0.5 * d2 / self.scale - 0.5 * self.dim() as f64 * self.scale.ln()
    }
}

/// Scenario file contents: a master seed and the domain list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_mc")]
    pub n_mc: usize,
    pub domains: Vec<DomainSpec>,
}

fn default_seed() -> u64 {
    10
}

fn default_mc() -> usize {
    100_000
}

fn check_specs(specs: &[DomainSpec]) -> Result<usize> {
    let dim = specs
        .first()
        .ok_or_else(|| Error::Empty("no domain specs".into()))?
        .dim();
    for s in specs {
        s.validate()?;
        if s.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: s.dim(),
            });
        }
    }
    Ok(dim)
}

pub fn generate_domains(specs: &[DomainSpec], master_seed: u64) -> Result<MultiDomainDataset> {
    let dim = check_specs(specs)?;
    let g = Normal::new(0.0, 1.0).expect("unit normal");
    let domains = specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let mut rng = match spec.seed {
                Some(s) => rng::stream(s, &[]),
                None => rng::stream(master_seed, &[0xD0, i as u64]),
            };
            let mut features = FeatureMatrix::new(dim);
            let mut labels = Vec::with_capacity(spec.n);
            let flip = rand::distr::Bernoulli::new(spec.flip_rate).expect("validated flip rate");
            for _ in 0..spec.n {
                let x = spec.sample_point(&mut rng, &g);
                let clean = spec.boundary_label(&x);
                labels.push(if flip.sample(&mut rng) { 1 - clean } else { clean });
                features.push(&x)?;
            }
            Ok(Domain {
                id: i as u32,
                features,
                labels,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MultiDomainDataset::new(domains)
}

/// Disagreement of observed labels under domain `i`'s marginal.
pub fn directional_disagreement(spec_i: &DomainSpec, spec_j: &DomainSpec, n_mc: usize, seed: u64) -> f64 {
    let g = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = rng::stream(seed, &[0x0C]);
    let q = if n_mc == 0 {
        0.0
    } else {
        let hits = (0..n_mc)
            .filter(|_| {
                let x = spec_i.sample_point(&mut rng, &g);
                spec_i.boundary_label(&x) != spec_j.boundary_label(&x)
            })
            .count();
        hits as f64 / n_mc as f64
    };
    let (a, b) = (spec_i.flip_rate, spec_j.flip_rate);
    let r = a * (1.0 - b) + b * (1.0 - a);
    q * (1.0 - r) + (1.0 - q) * r
}

/// Minimum of the two directional disagreements.
pub fn true_disagreement(spec_i: &DomainSpec, spec_j: &DomainSpec, n_mc: usize, seed: u64) -> f64 {
    let ij = directional_disagreement(spec_i, spec_j, n_mc, rng::derive_seed(seed, &[0]));
    let ji = directional_disagreement(spec_j, spec_i, n_mc, rng::derive_seed(seed, &[1]));
    ij.min(ji)
}

/// Bayes accuracy of telling two equally likely domains apart by their
/// marginals alone (0.5 for identical marginals).
pub fn bayes_separability(spec_i: &DomainSpec, spec_j: &DomainSpec, n_mc: usize, seed: u64) -> f64 {
    if n_mc == 0 {
        return 0.5;
    }
    let g = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = rng::stream(seed, &[0x5E]);
    // Twice the number of correct calls; ties (identical marginals) count half.
    let mut score = 0usize;
    let mut judge = |own: f64, other: f64| {
        score += match own.partial_cmp(&other) {
            Some(std::cmp::Ordering::Greater) => 2,
            Some(std::cmp::Ordering::Equal) => 1,
            _ => 0,
        }
    };
    for _ in 0..n_mc {
        let x = spec_i.sample_point(&mut rng, &g);
        judge(spec_i.log_density(&x), spec_j.log_density(&x));
        let y = spec_j.sample_point(&mut rng, &g);
        judge(spec_j.log_density(&y), spec_i.log_density(&y));
    }
    score as f64 / (4 * n_mc) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTruth {
    /// Exact pairwise disagreement rates, the target of the disparity matrix.
    pub disagreement: PairwiseMatrix,
    /// Bayes pairwise separability of the marginals; diagonal 0.5.
    pub separability: PairwiseMatrix,
    pub conditional_shift: f64,
    pub marginal_shift: f64,
}

pub fn oracle_truth(specs: &[DomainSpec], n_mc: usize, seed: u64) -> Result<OracleTruth> {
    check_specs(specs)?;
    let m = specs.len();
    let ids: Vec<u32> = (0..m as u32).collect();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    let values: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let s = rng::derive_seed(seed, &[i as u64, j as u64]);
            let sep = if i == j {
                0.5
            } else {
                bayes_separability(&specs[i], &specs[j], n_mc, s)
            };
            (true_disagreement(&specs[i], &specs[j], n_mc, s), sep)
        })
        .collect();
    let mut disagreement = PairwiseMatrix::filled(ids.clone(), 0.0);
    let mut separability = PairwiseMatrix::filled(ids, 0.5);
    for (&(i, j), &(d, s)) in pairs.iter().zip(&values) {
        disagreement.set(i, j, d);
        disagreement.set(j, i, d);
        separability.set(i, j, s);
        separability.set(j, i, s);
    }
    Ok(OracleTruth {
        conditional_shift: disagreement.rescaled_frobenius(),
        marginal_shift: separability.rescaled_frobenius(),
        disagreement,
        separability,
    })
}

/// Maps domain `i`'s features through `x -> scale_i * x + offset_i`
/// (elementwise); labels are untouched.
pub fn affine_distort(ds: &MultiDomainDataset, scales: &[Vec<f64>], offsets: &[Vec<f64>]) -> Result<MultiDomainDataset> {
    if scales.len() != ds.len() || offsets.len() != ds.len() {
        return Err(Error::Config(format!(
            "need one scale and one offset vector per domain ({})",
            ds.len()
        )));
    }
    let dim = ds.dim();
    let domains = ds
        .domains()
        .iter()
        .zip(scales.iter().zip(offsets))
        .map(|(d, (s, o))| {
            if s.len() != dim || o.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.len().min(o.len()),
                });
            }
            if s.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Config("affine scales must be positive".into()));
            }
            let mut features = FeatureMatrix::new(dim);
            for row in d.features.rows() {
                let mapped: Vec<f64> = row.iter().zip(s).zip(o).map(|((x, a), b)| a * x + b).collect();
                features.push(&mapped)?;
            }
            Ok(Domain {
                id: d.id,
                features,
                labels: d.labels.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MultiDomainDataset::new(domains)
}

/// Task rows labeled low (class 0) / high (class 1), one subject per domain.
pub fn to_feature_table(ds: &MultiDomainDataset) -> Result<FeatureTable> {
    let mut table = FeatureTable::new(ds.dim());
    for d in ds.domains() {
        for (row, &label) in d.features.rows().zip(&d.labels) {
            table.push(FeatureRow {
                subject: d.id,
                condition: Condition::from_label(label),
                segment: SegmentTag::Task,
                features: row.to_vec(),
            })?;
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn spec(normal: Vec<f64>, flip_rate: f64) -> DomainSpec {
        DomainSpec {
            mean: vec![0.0; normal.len()],
            scale: 1.0,
            normal,
            offset: 0.0,
            flip_rate,
            n: 400,
            seed: None,
        }
    }

    #[test]
    fn identical_noiseless_specs_have_zero_truth() {
        let s = spec(vec![1.0, 0.0], 0.0);
        assert_eq!(true_disagreement(&s, &s, 10_000, 1), 0.0);
        let truth = oracle_truth(&[s.clone(), s.clone(), s], 10_000, 1).unwrap();
        assert_eq!(truth.conditional_shift, 0.0);
        assert_eq!(truth.separability.get(0, 1), 0.5);
    }

    #[test]
    fn reversed_hyperplane_disagrees_everywhere() {
        let a = spec(vec![1.0, 0.0], 0.0);
        let b = spec(vec![-1.0, 0.0], 0.0);
        assert_eq!(true_disagreement(&a, &b, 10_000, 2), 1.0);
    }

    #[test]
    fn flip_only_disagreement_is_closed_form() {
        let a = spec(vec![1.0, 1.0], 0.1);
        let b = spec(vec![1.0, 1.0], 0.0);
        assert!((true_disagreement(&a, &b, 1000, 3) - 0.1).abs() < 1e-12);
        let h = spec(vec![1.0, 1.0], 0.5);
        assert!((true_disagreement(&h, &h, 1000, 3) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_hyperplanes_disagree_half_the_time() {
        let a = spec(vec![1.0, 0.0], 0.0);
        let b = spec(vec![0.0, 1.0], 0.0);
        let d = true_disagreement(&a, &b, 100_000, 4);
        assert!((d - 0.5).abs() < 0.01, "{d}");
        // Rotation by 45 degrees: angle / pi.
        let c = spec(vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2], 0.0);
        assert!((true_disagreement(&a, &c, 100_000, 4) - 0.25).abs() < 0.01);
    }

    #[test]
    fn separability_of_shifted_gaussians() {
        let a = spec(vec![1.0], 0.0);
        let mut b = a.clone();
        b.mean = vec![8.0];
        assert!(bayes_separability(&a, &b, 20_000, 5) > 0.999);
        // Phi(0.5) for a unit-variance gap of 1.
        let mut c = a.clone();
        c.mean = vec![1.0];
        let s = bayes_separability(&a, &c, 100_000, 5);
        assert!((s - 0.6915).abs() < 0.01, "{s}");
    }

    #[test]
    fn generation_is_deterministic_and_labels_follow_the_boundary() {
        let specs = vec![spec(vec![1.0, -1.0], 0.0), spec(vec![0.0, 1.0], 0.2)];
        let a = generate_domains(&specs, 10).unwrap();
        let b = generate_domains(&specs, 10).unwrap();
        assert_eq!(a, b);
        let d0 = a.domain(0);
        for (row, &l) in d0.features.rows().zip(&d0.labels) {
            assert_eq!(specs[0].boundary_label(row), l);
        }
        let flips = a
            .domain(1)
            .features
            .rows()
            .zip(&a.domain(1).labels)
            .filter(|(r, &l)| specs[1].boundary_label(r) != l)
            .count();
        assert!((flips as f64 / 400.0 - 0.2).abs() < 0.06);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = spec(vec![1.0], 0.7);
        assert!(generate_domains(&[s.clone()], 0).is_err());
        s.flip_rate = 0.0;
        s.scale = 0.0;
        assert!(generate_domains(&[s], 0).is_err());
        let mixed = vec![spec(vec![1.0], 0.0), spec(vec![1.0, 0.0], 0.0)];
        assert!(matches!(generate_domains(&mixed, 0), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn identity_distortion_is_a_no_op() {
        let ds = generate_domains(&[spec(vec![1.0, 0.0], 0.0), spec(vec![1.0, 0.0], 0.0)], 1).unwrap();
        let same = affine_distort(&ds, &[vec![1.0; 2], vec![1.0; 2]], &[vec![0.0; 2], vec![0.0; 2]]).unwrap();
        assert_eq!(same, ds);
        assert!(affine_distort(&ds, &[vec![-1.0; 2], vec![1.0; 2]], &[vec![0.0; 2], vec![0.0; 2]]).is_err());
    }

    #[test]
    fn scenario_json_defaults() {
        let s: Scenario = serde_json::from_str(r#"{"domains":[{"mean":[0,0],"normal":[1,0],"n":10}]}"#).unwrap();
        assert_eq!(s.seed, 10);
        assert_eq!(s.domains[0].scale, 1.0);
        assert_eq!(s.domains[0].flip_rate, 0.0);
    }
}
