use crate::error::{Error, Result};
use crate::table::FeatureMatrix;

use super::vote;

/// Lazy k-nearest-neighbour classifier under the Euclidean metric.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    k: usize,
    train: FeatureMatrix,
    labels: Vec<u32>,
}

pub fn knn_fit(features: &FeatureMatrix, labels: &[u32], k: usize) -> Result<KnnModel> {
    if labels.len() != features.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            found: labels.len(),
        });
    }
    if k == 0 || k > features.len() {
        return Err(Error::Config(format!(
            "k = {k} must be in 1..={} (training rows)",
            features.len()
        )));
    }
    Ok(KnnModel {
        k,
        train: features.clone(),
        labels: labels.to_vec(),
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KnnModel {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Majority label among the `k` nearest training rows. Equal distances
    /// are ordered by training index; vote ties go to the smallest label.
    pub fn predict_one(&self, query: &[f64]) -> u32 {
        if self.k == 1 {
            let mut best = (f64::INFINITY, 0);
            for (i, row) in self.train.rows().enumerate() {
                let d = sq_dist(row, query);
                if d < best.0 {
                    best = (d, i);
                }
            }
            return self.labels[best.1];
        }
        // Sorted by (distance, index), at most k long.
        let mut nearest: Vec<(f64, usize)> = Vec::with_capacity(self.k + 1);
        for (i, row) in self.train.rows().enumerate() {
            let d = sq_dist(row, query);
            if nearest.len() == self.k && d >= nearest[self.k - 1].0 {
                continue;
            }
            let pos = nearest.partition_point(|&(nd, _)| nd <= d);
            nearest.insert(pos, (d, i));
            nearest.truncate(self.k);
        }
        vote(nearest.iter().map(|&(_, i)| self.labels[i]))
    }

    pub fn predict(&self, queries: &FeatureMatrix) -> Result<Vec<u32>> {
        if !queries.is_empty() && queries.dim() != self.train.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.train.dim(),
                found: queries.dim(),
            });
        }
        Ok(queries.rows().map(|q| self.predict_one(q)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::accuracy;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn m(rows: &[[f64; 2]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(2, rows).unwrap()
    }

    #[test]
    fn nearest_point_wins() {
        let model = knn_fit(&m(&[[0.0, 0.0], [1.0, 1.0]]), &[0, 1], 1).unwrap();
        assert_eq!(model.predict(&m(&[[0.1, 0.1], [0.9, 1.2]])).unwrap(), vec![0, 1]);
    }

    #[test]
    fn resubstitution_is_exact_for_distinct_points() {
        let x = m(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]]);
        let y = [1, 0, 1, 0];
        let model = knn_fit(&x, &y, 1).unwrap();
        assert_eq!(model.predict(&x).unwrap(), y);
    }

    #[test]
    fn two_way_vote_tie_goes_to_smallest_label() {
        let x = m(&[[1.0, 0.0], [-1.0, 0.0]]);
        let model = knn_fit(&x, &[1, 0], 2).unwrap();
        assert_eq!(model.predict_one(&[0.0, 0.0]), 0);
    }

    #[test]
    fn duplicate_training_points_each_vote() {
        let x = m(&[[0.0, 0.0], [0.0, 0.0], [0.1, 0.0], [9.0, 9.0]]);
        let model = knn_fit(&x, &[1, 1, 0, 0], 3).unwrap();
        assert_eq!(model.predict_one(&[0.05, 0.0]), 1);
    }

    #[test]
    fn empty_query_and_errors() {
        let x = m(&[[0.0, 0.0]]);
        let model = knn_fit(&x, &[0], 1).unwrap();
        assert!(model.predict(&FeatureMatrix::new(2)).unwrap().is_empty());
        assert!(matches!(
            model.predict(&FeatureMatrix::from_rows(3, [[0.0; 3]]).unwrap()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(knn_fit(&x, &[0], 2), Err(Error::Config(_))));
        assert!(knn_fit(&x, &[0, 1], 1).is_err());
    }

    #[test]
    fn separated_clusters_are_learned() {
        // Clusters 8 sigma apart.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut x = FeatureMatrix::new(2);
        let mut y = Vec::new();
        for i in 0..400 {
            let c = (i % 2) as f64 * 8.0;
            x.push(&[c + noise.sample(&mut rng), noise.sample(&mut rng)]).unwrap();
            y.push((i % 2) as u32);
        }
        let train: Vec<usize> = (0..200).collect();
        let test: Vec<usize> = (200..400).collect();
        let model = knn_fit(&x.select(&train), &y[..200], 1).unwrap();
        let pred = model.predict(&x.select(&test)).unwrap();
        assert!(accuracy(&pred, &y[200..]).unwrap() >= 0.95);
    }
}
