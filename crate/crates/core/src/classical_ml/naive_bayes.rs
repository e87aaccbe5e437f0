use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{Dataset, MlError, Result};

const VAR_FLOOR: f64 = 1e-9;

/// Gaussian naive Bayes with per-feature variances floored at 1e-9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    /// `None` for classes absent from training.
    pub log_priors: Vec<Option<f64>>,
}

impl GaussianNb {
    pub fn fit(data: &Dataset) -> Result<GaussianNb> {
        let counts = data.class_counts();
        if counts.iter().filter(|&&n| n > 0).count() < 2 {
            return Err(MlError::Train("at least two classes are required".into()));
        }
        let d = data.n_features();
        let k = data.n_classes;
        let mut means = vec![vec![0.0; d]; k];
        for (row, &c) in data.x.iter().zip(&data.y) {
            for j in 0..d {
                means[c][j] += row[j];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                means[c].iter_mut().for_each(|m| *m /= counts[c] as f64);
            }
        }
        let mut variances = vec![vec![0.0; d]; k];
        for (row, &c) in data.x.iter().zip(&data.y) {
            for j in 0..d {
                variances[c][j] += (row[j] - means[c][j]).powi(2);
            }
        }
        for c in 0..k {
            for v in &mut variances[c] {
                *v = if counts[c] > 0 { *v / counts[c] as f64 } else { 1.0 };
                *v = v.max(VAR_FLOOR);
            }
        }
        let n = data.len() as f64;
        let log_priors = counts
            .iter()
            .map(|&c| (c > 0).then(|| (c as f64 / n).ln()))
            .collect();
        Ok(GaussianNb {
            means,
            variances,
            log_priors,
        })
    }

    pub fn log_scores(&self, x: &[f64]) -> Vec<f64> {
        self.log_priors
            .iter()
            .enumerate()
            .map(|(c, prior)| match prior {
                None => f64::MIN,
                Some(p) => {
                    p + x
                        .iter()
                        .zip(self.means[c].iter().zip(&self.variances[c]))
                        .map(|(v, (m, s2))| -0.5 * (2.0 * PI * s2).ln() - (v - m).powi(2) / (2.0 * s2))
                        .sum::<f64>()
                }
            })
            .collect()
    }
}
