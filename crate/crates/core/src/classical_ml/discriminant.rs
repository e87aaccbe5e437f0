//! Linear and quadratic discriminant analysis with diagonal shrinkage.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Dataset, MlError, Result};

/// Shrinkage added to the covariance diagonal, relative to `trace/d`.
const SHRINKAGE: f64 = 1e-6;

fn class_means(data: &Dataset) -> (Vec<DVector<f64>>, Vec<usize>) {
    let d = data.n_features();
    let mut sums = vec![DVector::zeros(d); data.n_classes];
    let counts = data.class_counts();
    for (row, &c) in data.x.iter().zip(&data.y) {
        sums[c] += DVector::from_column_slice(row);
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            *s /= n as f64;
        }
    }
    (sums, counts)
}

/// Inverts `cov + λI` through a Cholesky factor, growing `λ` until the
/// factorization succeeds. Returns the inverse and `ln det(cov + λI)`.
fn regularized_inverse(cov: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let d = cov.nrows();
    let trace = cov.trace();
    let mut lambda = if trace > 0.0 && trace.is_finite() {
        SHRINKAGE * trace / d as f64
    } else {
        SHRINKAGE
    };
    for _ in 0..30 {
        let mut reg = cov.clone();
        for i in 0..d {
            reg[(i, i)] += lambda;
        }
        if let Some(chol) = reg.cholesky() {
            let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            if log_det.is_finite() {
                return Ok((chol.inverse(), log_det));
            }
        }
        lambda *= 10.0;
    }
    Err(MlError::Train(
        "covariance could not be regularized to positive definite".into(),
    ))
}

fn present_classes(counts: &[usize]) -> Result<()> {
    if counts.iter().filter(|&&n| n > 0).count() < 2 {
        return Err(MlError::Train("at least two classes are required".into()));
    }
    Ok(())
}

/// Shared-covariance Gaussian classifier; scores are affine in `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lda {
    /// Per class: `Σ⁻¹ μ_c`.
    pub coef: Vec<Vec<f64>>,
    /// Per class: `−½ μ_cᵀ Σ⁻¹ μ_c + ln π_c`.
    pub intercept: Vec<f64>,
}

impl Lda {
    pub fn fit(data: &Dataset) -> Result<Lda> {
        let (means, counts) = class_means(data);
        present_classes(&counts)?;
        let d = data.n_features();
        let n = data.len() as f64;
        let mut cov = DMatrix::zeros(d, d);
        for (row, &c) in data.x.iter().zip(&data.y) {
            let diff = DVector::from_column_slice(row) - &means[c];
            cov += &diff * diff.transpose();
        }
        cov /= n;
        let (prec, _) = regularized_inverse(&cov)?;
        let mut coef = Vec::with_capacity(data.n_classes);
        let mut intercept = Vec::with_capacity(data.n_classes);
        for (mean, &count) in means.iter().zip(&counts) {
            let w = &prec * mean;
            let prior = count as f64 / n;
            intercept.push(if count == 0 {
                f64::MIN
            } else {
                -0.5 * mean.dot(&w) + prior.ln()
            });
            coef.push(w.iter().copied().collect());
        }
        Ok(Lda { coef, intercept })
    }

    pub fn log_scores(&self, x: &[f64]) -> Vec<f64> {
        self.coef
            .iter()
            .zip(&self.intercept)
            .map(|(w, b)| w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QdaClass {
    pub mean: Vec<f64>,
    /// Row-major `d × d` inverse covariance.
    pub precision: Vec<f64>,
    pub log_det: f64,
    pub log_prior: f64,
}

/// Per-class covariance Gaussian classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Qda {
    pub classes: Vec<Option<QdaClass>>,
    pub n_features: usize,
}

impl Qda {
    pub fn fit(data: &Dataset) -> Result<Qda> {
        let (means, counts) = class_means(data);
        present_classes(&counts)?;
        let d = data.n_features();
        let n = data.len() as f64;
        let mut covs = vec![DMatrix::<f64>::zeros(d, d); data.n_classes];
        for (row, &c) in data.x.iter().zip(&data.y) {
            let diff = DVector::from_column_slice(row) - &means[c];
            covs[c] += &diff * diff.transpose();
        }
        let mut classes = Vec::with_capacity(data.n_classes);
        for c in 0..data.n_classes {
            if counts[c] == 0 {
                classes.push(None);
                continue;
            }
            let cov = &covs[c] / counts[c] as f64;
            let (prec, log_det) = regularized_inverse(&cov)?;
            let mut precision = Vec::with_capacity(d * d);
            for i in 0..d {
                for j in 0..d {
                    precision.push(prec[(i, j)]);
                }
            }
            classes.push(Some(QdaClass {
                mean: means[c].iter().copied().collect(),
                precision,
                log_det,
                log_prior: (counts[c] as f64 / n).ln(),
            }));
        }
        Ok(Qda {
            classes,
            n_features: d,
        })
    }

    pub fn log_scores(&self, x: &[f64]) -> Vec<f64> {
        let d = self.n_features;
        self.classes
            .iter()
            .map(|c| match c {
                None => f64::MIN,
                Some(c) => {
                    let diff: Vec<f64> = x.iter().zip(&c.mean).map(|(a, m)| a - m).collect();
                    let mut quad = 0.0;
                    for i in 0..d {
                        let row = &c.precision[i * d..(i + 1) * d];
                        quad += diff[i] * row.iter().zip(&diff).map(|(p, v)| p * v).sum::<f64>();
                    }
                    -0.5 * c.log_det - 0.5 * quad + c.log_prior
                }
            })
            .collect()
    }
}
