use serde::{Deserialize, Serialize};

use super::{column_standardizer, standardize_row, Dataset};

/// Inverse-distance weighted k-nearest neighbours (Euclidean).
///
/// When any of the `k` neighbours sits at distance zero, only exact matches
/// vote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedKnn {
    pub k: usize,
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    /// Present when features are standardized before distances.
    pub scaling: Option<(Vec<f64>, Vec<f64>)>,
}

impl WeightedKnn {
    pub fn fit(data: &Dataset, k: usize, standardize: bool) -> WeightedKnn {
        let scaling = standardize.then(|| column_standardizer(&data.x));
        let points = match &scaling {
            Some((m, s)) => data.x.iter().map(|r| standardize_row(r, m, s)).collect(),
            None => data.x.clone(),
        };
        WeightedKnn {
            k: k.max(1),
            points,
            labels: data.y.clone(),
            n_classes: data.n_classes,
            scaling,
        }
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let q = match &self.scaling {
            Some((m, s)) => standardize_row(x, m, s),
            None => x.to_vec(),
        };
        let mut dist: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let d2: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum();
                (d2.sqrt(), i)
            })
            .collect();
        let k = self.k.min(dist.len());
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nearest = &dist[..k];
        let mut scores = vec![0.0; self.n_classes];
        if nearest.iter().any(|(d, _)| *d == 0.0) {
            for (d, i) in nearest {
                if *d == 0.0 {
                    scores[self.labels[*i]] += 1.0;
                }
            }
        } else {
            for (d, i) in nearest {
                scores[self.labels[*i]] += 1.0 / d;
            }
        }
        let total: f64 = scores.iter().sum();
        scores.iter_mut().for_each(|s| *s /= total);
        scores
    }
}
