use serde::{Deserialize, Serialize};

use super::{column_standardizer, softmax, standardize_row, Dataset};

/// Multinomial logistic regression trained by full-batch gradient descent
/// on internally standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl LogisticRegression {
    pub fn fit(data: &Dataset, learning_rate: f64, epochs: usize, l2: f64) -> LogisticRegression {
        let (mean, sd) = column_standardizer(&data.x);
        let xs: Vec<Vec<f64>> = data
            .x
            .iter()
            .map(|r| standardize_row(r, &mean, &sd))
            .collect();
        let k = data.n_classes;
        let d = data.n_features();
        let n = data.len() as f64;
        let mut weights = vec![vec![0.0; d]; k];
        let mut bias = vec![0.0; k];
        let mut grad_w = vec![vec![0.0; d]; k];
        let mut grad_b = vec![0.0; k];
        for _ in 0..epochs {
            grad_w.iter_mut().for_each(|g| g.fill(0.0));
            grad_b.fill(0.0);
            for (row, &yi) in xs.iter().zip(&data.y) {
                let p = softmax(&linear(&weights, &bias, row));
                for c in 0..k {
                    let err = p[c] - f64::from(u8::from(c == yi));
                    grad_b[c] += err;
                    for (g, v) in grad_w[c].iter_mut().zip(row) {
                        *g += err * v;
                    }
                }
            }
            for c in 0..k {
                bias[c] -= learning_rate * grad_b[c] / n;
                for j in 0..d {
                    let g = grad_w[c][j] / n + l2 * weights[c][j];
                    weights[c][j] -= learning_rate * g;
                }
            }
        }
        LogisticRegression {
            weights,
            bias,
            mean,
            sd,
        }
    }

    pub fn log_scores(&self, x: &[f64]) -> Vec<f64> {
        linear(&self.weights, &self.bias, &standardize_row(x, &self.mean, &self.sd))
    }
}

fn linear(weights: &[Vec<f64>], bias: &[f64], x: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .zip(bias)
        .map(|(w, b)| w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical_ml::argmax;

    #[test]
    fn zero_epochs_leave_uniform_scores() {
        let data = Dataset::new(vec![vec![1.0], vec![2.0], vec![3.0]], vec![0, 1, 2], 3);
        let m = LogisticRegression::fit(&data, 0.1, 0, 1e-4);
        let p = softmax(&m.log_scores(&[2.5]));
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(argmax(&p), 0);
    }

    #[test]
    fn learns_a_linear_boundary() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i % 5) as f64]).collect();
        let y: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        let data = Dataset::new(x.clone(), y.clone(), 2);
        let m = LogisticRegression::fit(&data, 0.1, 500, 1e-4);
        let correct = x
            .iter()
            .zip(&y)
            .filter(|(r, &c)| argmax(&m.log_scores(r)) == c)
            .count();
        assert!(correct >= 38);
    }
}
