//! Bagged trees and RUSBoost (random undersampling + AdaBoost.M1).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, TreeParams};
use super::{argmax, Dataset};

/// RNG for ensemble member `index`, independent of every other member.
fn member_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaggedTrees {
    pub trees: Vec<DecisionTree>,
    pub n_classes: usize,
}

impl BaggedTrees {
    pub fn fit(data: &Dataset, n_bags: usize, bootstrap: bool, params: TreeParams, seed: u64) -> BaggedTrees {
        let n = data.len();
        let w = vec![1.0; n];
        let trees = (0..n_bags.max(1))
            .map(|b| {
                let idx: Vec<usize> = if bootstrap {
                    let mut rng = member_rng(seed, b);
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                DecisionTree::fit_weighted(&data.x, &data.y, &w, &idx, data.n_classes, params)
            })
            .collect();
        BaggedTrees {
            trees,
            n_classes: data.n_classes,
        }
    }

    /// Fraction of member votes per class.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let mut votes = vec![0.0; self.n_classes];
        for t in &self.trees {
            votes[t.predict_class(x)] += 1.0;
        }
        let n = self.trees.len() as f64;
        votes.iter_mut().for_each(|v| *v /= n);
        votes
    }
}

/// Undersamples every present class to the minority count, without
/// replacement. Returned indices are sorted.
pub fn undersample_indices<R: Rng>(y: &[usize], n_classes: usize, rng: &mut R) -> Vec<usize> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in y.iter().enumerate() {
        by_class[c].push(i);
    }
    let minority = by_class
        .iter()
        .map(Vec::len)
        .filter(|&n| n > 0)
        .min()
        .unwrap_or(0);
    let mut out = Vec::with_capacity(minority * n_classes);
    for members in &mut by_class {
        if members.is_empty() {
            continue;
        }
        members.shuffle(rng);
        out.extend_from_slice(&members[..minority]);
    }
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostRound {
    pub tree: DecisionTree,
    pub alpha: f64,
    pub weighted_error: f64,
    /// Per-class row counts of this round's undersampled training set.
    pub class_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RusBoost {
    pub rounds: Vec<BoostRound>,
    pub n_classes: usize,
}

impl RusBoost {
    pub fn fit(data: &Dataset, rounds: usize, max_depth: usize, seed: u64) -> RusBoost {
        let n = data.len();
        let params = TreeParams {
            max_depth,
            min_leaf: 1,
        };
        let mut w = vec![1.0 / n as f64; n];
        let mut fitted: Vec<BoostRound> = Vec::new();
        for t in 0..rounds.max(1) {
            let mut rng = member_rng(seed, t);
            let idx = undersample_indices(&data.y, data.n_classes, &mut rng);
            let tree = DecisionTree::fit_weighted(&data.x, &data.y, &w, &idx, data.n_classes, params);
            let wrong: Vec<bool> = data
                .x
                .iter()
                .zip(&data.y)
                .map(|(x, &y)| tree.predict_class(x) != y)
                .collect();
            let total: f64 = w.iter().sum();
            let err = w
                .iter()
                .zip(&wrong)
                .filter(|(_, &bad)| bad)
                .map(|(wi, _)| wi)
                .sum::<f64>()
                / total;
            let mut class_counts = vec![0; data.n_classes];
            for &i in &idx {
                class_counts[data.y[i]] += 1;
            }
            if err >= 0.5 {
                if fitted.is_empty() {
                    fitted.push(BoostRound {
                        tree,
                        alpha: 1.0,
                        weighted_error: err,
                        class_counts,
                    });
                }
                break;
            }
            let beta = err.max(1e-10) / (1.0 - err);
            fitted.push(BoostRound {
                tree,
                alpha: (1.0 / beta).ln(),
                weighted_error: err,
                class_counts,
            });
            if err <= 1e-12 {
                break;
            }
            for (wi, &bad) in w.iter_mut().zip(&wrong) {
                if !bad {
                    *wi *= beta;
                }
            }
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|wi| *wi /= total);
        }
        RusBoost {
            rounds: fitted,
            n_classes: data.n_classes,
        }
    }

    /// Alpha-weighted vote share per class.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let mut votes = vec![0.0; self.n_classes];
        for r in &self.rounds {
            votes[r.tree.predict_class(x)] += r.alpha;
        }
        let total: f64 = votes.iter().sum();
        if total > 0.0 {
            votes.iter_mut().for_each(|v| *v /= total);
        }
        votes
    }

    pub fn predict_class(&self, x: &[f64]) -> usize {
        argmax(&self.scores(x))
    }
}
