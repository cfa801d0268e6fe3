//! Random forest of fully grown CART trees: bootstrap rows, `ceil(sqrt(d))`
//! candidate features per split, Gini impurity, leaves when a node is pure or
//! has fewer than two rows.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::table::FeatureMatrix;

use super::vote;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Candidate features per split; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub bootstrap: bool,
}

impl ForestConfig {
    pub fn with_trees(n_trees: usize) -> Self {
        ForestConfig {
            n_trees,
            ..Default::default()
        }
    }
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 20,
            max_features: None,
            min_samples_split: 2,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Index into the forest's class list.
        class: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_class(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    trees: Vec<Tree>,
    classes: Vec<u32>,
    dim: usize,
    seed: u64,
}

struct Builder<'a> {
    x: &'a FeatureMatrix,
    y: &'a [usize],
    n_classes: usize,
    max_features: usize,
    min_samples_split: usize,
    nodes: Vec<Node>,
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    // Strict comparison keeps the smallest class index on ties.
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

impl Builder<'_> {
    fn counts(&self, rows: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &r in rows {
            counts[self.y[r]] += 1;
        }
        counts
    }

    /// Best threshold on one feature: (weighted child impurity, threshold),
    /// or `None` when the feature is constant on these rows.
    fn best_threshold(&self, rows: &[usize], feature: usize, scratch: &mut Vec<(f64, usize)>) -> Option<(f64, f64)> {
        scratch.clear();
        scratch.extend(rows.iter().map(|&r| (self.x.row(r)[feature], self.y[r])));
        scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = scratch.len();
        if scratch[0].0 == scratch[n - 1].0 {
            return None;
        }
        let mut right = vec![0usize; self.n_classes];
        for &(_, c) in scratch.iter() {
            right[c] += 1;
        }
        let mut left = vec![0usize; self.n_classes];
        let mut best: Option<(f64, f64)> = None;
        for i in 0..n - 1 {
            let c = scratch[i].1;
            left[c] += 1;
            right[c] -= 1;
            let (v, next) = (scratch[i].0, scratch[i + 1].0);
            if v == next {
                continue;
            }
            let nl = i + 1;
            let nr = n - nl;
            let impurity = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
            if best.is_none_or(|(b, _)| impurity < b) {
                let mid = v + (next - v) / 2.0;
                let threshold = if mid < next { mid } else { v };
                best = Some((impurity, threshold));
            }
        }
        best
    }

    fn build(&mut self, rows: Vec<usize>, rng: &mut rng::StreamRng) -> usize {
        let id = self.nodes.len();
        let counts = self.counts(&rows);
        self.nodes.push(Node::Leaf {
            class: majority(&counts),
        });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || rows.len() < self.min_samples_split {
            return id;
        }

        let dim = self.x.dim();
        let mut features: Vec<usize> = (0..dim).collect();
        features.shuffle(rng);
        let mut scratch = Vec::with_capacity(rows.len());
        let mut best: Option<(f64, usize, f64)> = None;
        let mut visited = 0;
        // Constant features do not count towards the candidate budget.
        for &f in &features {
            if visited >= self.max_features {
                break;
            }
            if let Some((imp, thr)) = self.best_threshold(&rows, f, &mut scratch) {
                visited += 1;
                if best.is_none_or(|(b, _, _)| imp < b) {
                    best = Some((imp, f, thr));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| self.x.row(r)[feature] <= threshold);
        let left = self.build(left_rows, rng);
        let right = self.build(right_rows, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

pub fn forest_fit(features: &FeatureMatrix, labels: &[u32], config: &ForestConfig, seed: u64) -> Result<ForestModel> {
    if labels.len() != features.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            found: labels.len(),
        });
    }
    if config.n_trees == 0 {
        return Err(Error::Config("n_trees must be at least 1".into()));
    }
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::DegenerateModel(format!(
            "forest needs at least two classes, found {}",
            classes.len()
        )));
    }
    let y: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label is in class list"))
        .collect();
    let dim = features.dim();
    let max_features = config
        .max_features
        .unwrap_or_else(|| (dim as f64).sqrt().ceil() as usize)
        .clamp(1, dim.max(1));
    let n = features.len();

    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(seed, &[t as u64]);
            let rows: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut b = Builder {
                x: features,
                y: &y,
                n_classes: classes.len(),
                max_features,
                min_samples_split: config.min_samples_split.max(2),
                nodes: Vec::new(),
            };
            b.build(rows, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect();

    Ok(ForestModel {
        trees,
        classes,
        dim,
        seed,
    })
}

impl ForestModel {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn classes(&self) -> &[u32] {
        &self.classes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Keeps only the listed trees, in the given order.
    pub fn subset(&self, tree_indices: &[usize]) -> ForestModel {
        ForestModel {
            trees: tree_indices.iter().map(|&i| self.trees[i].clone()).collect(),
            ..self.clone()
        }
    }

    pub fn predict_tree(&self, tree: usize, x: &[f64]) -> u32 {
        self.classes[self.trees[tree].predict_class(x)]
    }

    /// Majority vote over trees; ties go to the smallest label.
    pub fn predict_one(&self, x: &[f64]) -> u32 {
        vote(self.trees.iter().map(|t| self.classes[t.predict_class(x)]))
    }

    pub fn predict(&self, queries: &FeatureMatrix) -> Result<Vec<u32>> {
        if !queries.is_empty() && queries.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: queries.dim(),
            });
        }
        Ok(queries.rows().map(|q| self.predict_one(q)).collect())
    }
}
