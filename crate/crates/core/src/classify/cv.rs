use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{accuracy, ModelConfig};
use crate::error::{Error, Result};
use crate::rng;
use crate::table::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl CvResult {
    fn from_folds(fold_accuracies: Vec<f64>) -> Self {
        let n = fold_accuracies.len() as f64;
        let mean = fold_accuracies.iter().sum::<f64>() / n;
        let var = fold_accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        CvResult {
            fold_accuracies,
            mean,
            std: var.sqrt(),
        }
    }
}

/// Partitions `0..labels.len()` into `k` folds. Each class is shuffled and
/// dealt round-robin with a counter shared across classes, so fold sizes and
/// per-class counts differ by at most one. Falls back to an unstratified
/// shuffle (with a warning) when a class has fewer rows than folds.
pub fn stratified_folds(labels: &[u32], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if labels.len() < k {
        return Err(Error::Config(format!(
            "{} rows cannot fill {k} folds",
            labels.len()
        )));
    }
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let per_class: Vec<Vec<usize>> = classes
        .iter()
        .map(|c| (0..labels.len()).filter(|&i| labels[i] == *c).collect())
        .collect();

    let mut rng = rng::stream(seed, &[0xF01D]);
    let groups = if per_class.iter().any(|g| g.len() < k) {
        log::warn!("a class has fewer than {k} rows; using unstratified folds");
        vec![(0..labels.len()).collect::<Vec<_>>()]
    } else {
        per_class
    };
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for mut group in groups {
        group.shuffle(&mut rng);
        for i in group {
            folds[next % k].push(i);
            next += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Trains on all folds but one and tests on the held-out fold, for every fold.
/// Fold `f` fits its model with the seed stream `(seed, f)`.
pub fn cross_validate(
    features: &FeatureMatrix,
    labels: &[u32],
    folds: &[Vec<usize>],
    model: &ModelConfig,
    seed: u64,
) -> Result<CvResult> {
    let accs = folds
        .par_iter()
        .enumerate()
        .map(|(f, test)| {
            let train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, idx)| idx.iter().copied())
                .collect();
            let train_y: Vec<u32> = train.iter().map(|&i| labels[i]).collect();
            let test_y: Vec<u32> = test.iter().map(|&i| labels[i]).collect();
            let fitted = model.fit(&features.select(&train), &train_y, rng::derive_seed(seed, &[f as u64]))?;
            accuracy(&fitted.predict(&features.select(test))?, &test_y)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(CvResult::from_folds(accs))
}

/// Stratified k-fold cross-validation accuracy.
pub fn kfold_cv(
    features: &FeatureMatrix,
    labels: &[u32],
    k_folds: usize,
    model: &ModelConfig,
    seed: u64,
) -> Result<CvResult> {
    if labels.len() != features.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            found: labels.len(),
        });
    }
    let folds = stratified_folds(labels, k_folds, seed)?;
    cross_validate(features, labels, &folds, model, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::ForestConfig;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn clusters(n: usize, sep: f64, seed: u64) -> (FeatureMatrix, Vec<u32>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = Normal::new(0.0, 1.0).unwrap();
        let mut x = FeatureMatrix::new(2);
        let mut y = Vec::new();
        for i in 0..n {
            let label = (i % 2) as u32;
            x.push(&[label as f64 * sep + g.sample(&mut rng), g.sample(&mut rng)]).unwrap();
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn hundred_rows_five_folds_of_twenty() {
        let labels: Vec<u32> = (0..100).map(|i| (i % 3 == 0) as u32).collect();
        let folds = stratified_folds(&labels, 5, 1).unwrap();
        assert!(folds.iter().all(|f| f.len() == 20));
        let positives = labels.iter().filter(|&&l| l == 1).count();
        for f in &folds {
            let p = f.iter().filter(|&&i| labels[i] == 1).count() as f64;
            assert!((p - positives as f64 / 5.0).abs() <= 1.0);
        }
    }

    #[test]
    fn separable_data_scores_near_one() {
        let (x, y) = clusters(200, 8.0, 4);
        for model in [ModelConfig::Knn { k: 1 }, ModelConfig::Forest(ForestConfig::with_trees(10))] {
            let cv = kfold_cv(&x, &y, 5, &model, 10).unwrap();
            assert!(cv.mean >= 0.99, "{model:?}: {}", cv.mean);
            assert_eq!(cv.fold_accuracies.len(), 5);
        }
    }

    #[test]
    fn shuffled_labels_score_near_chance() {
        let (x, mut y) = clusters(300, 8.0, 5);
        y.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(9));
        let cv = kfold_cv(&x, &y, 5, &ModelConfig::Knn { k: 1 }, 10).unwrap();
        assert!((cv.mean - 0.5).abs() <= 0.1, "{}", cv.mean);
    }

    #[test]
    fn rare_class_falls_back_to_unstratified() {
        let mut labels = vec![0u32; 20];
        labels[3] = 1;
        let folds = stratified_folds(&labels, 5, 0).unwrap();
        assert!(folds.iter().all(|f| f.len() == 4));
    }

    #[test]
    fn too_few_rows_or_folds() {
        assert!(stratified_folds(&[0, 1, 0], 5, 0).is_err());
        assert!(stratified_folds(&[0, 1, 0], 1, 0).is_err());
    }

    #[test]
    fn mean_is_mean_of_folds_and_deterministic() {
        let (x, y) = clusters(60, 1.0, 6);
        let m = ModelConfig::Forest(ForestConfig::with_trees(5));
        let a = kfold_cv(&x, &y, 5, &m, 3).unwrap();
        let b = kfold_cv(&x, &y, 5, &m, 3).unwrap();
        assert_eq!(a, b);
        let mean = a.fold_accuracies.iter().sum::<f64>() / 5.0;
        assert_eq!(a.mean, mean);
        assert!(a.std >= 0.0);
    }

    proptest! {
        #[test]
        fn folds_partition_the_rows(labels in prop::collection::vec(0u32..3, 10..80), k in 2usize..8, seed: u64) {
            prop_assume!(labels.len() >= k);
            let folds = stratified_folds(&labels, k, seed).unwrap();
            let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
