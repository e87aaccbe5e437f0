use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::discriminant::{Lda, Qda};
use super::ensemble::{BaggedTrees, RusBoost};
use super::knn::WeightedKnn;
use super::logistic::LogisticRegression;
use super::naive_bayes::GaussianNb;
use super::tree::{DecisionTree, TreeParams};
use super::{argmax, softmax, Dataset, MlError, Result, Scenario};
use crate::features::{FeatureSubset, FeatureTable, FeatureVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgoKind {
    DecisionTree,
    Lda,
    Qda,
    GaussianNb,
    LogisticRegression,
    WeightedKnn,
    BaggedTrees,
    RusBoostedTrees,
}

impl AlgoKind {
    pub const ALL: [AlgoKind; 8] = [
        AlgoKind::DecisionTree,
        AlgoKind::Lda,
        AlgoKind::Qda,
        AlgoKind::GaussianNb,
        AlgoKind::LogisticRegression,
        AlgoKind::WeightedKnn,
        AlgoKind::BaggedTrees,
        AlgoKind::RusBoostedTrees,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgoKind::DecisionTree => "decision_tree",
            AlgoKind::Lda => "lda",
            AlgoKind::Qda => "qda",
            AlgoKind::GaussianNb => "gaussian_nb",
            AlgoKind::LogisticRegression => "logistic_regression",
            AlgoKind::WeightedKnn => "weighted_knn",
            AlgoKind::BaggedTrees => "bagged_trees",
            AlgoKind::RusBoostedTrees => "rus_boosted_trees",
        }
    }
}

impl fmt::Display for AlgoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlgoKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        AlgoKind::ALL
            .into_iter()
            .find(|k| k.as_str() == key)
            .ok_or_else(|| format!("unknown algorithm `{s}`"))
    }
}

/// Algorithm choice plus its hyperparameters. Stochastic algorithms carry
/// their own seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlgoSpec {
    DecisionTree {
        max_depth: usize,
        min_leaf: usize,
    },
    Lda,
    Qda,
    GaussianNb,
    LogisticRegression {
        learning_rate: f64,
        epochs: usize,
        l2: f64,
    },
    WeightedKnn {
        k: usize,
        standardize: bool,
    },
    BaggedTrees {
        n_bags: usize,
        bootstrap: bool,
        max_depth: usize,
        min_leaf: usize,
        seed: u64,
    },
    RusBoostedTrees {
        rounds: usize,
        max_depth: usize,
        seed: u64,
    },
}

impl AlgoSpec {
    pub fn default_for(kind: AlgoKind, seed: u64) -> AlgoSpec {
        let tree = TreeParams::default();
        match kind {
            AlgoKind::DecisionTree => AlgoSpec::DecisionTree {
                max_depth: tree.max_depth,
                min_leaf: tree.min_leaf,
            },
            AlgoKind::Lda => AlgoSpec::Lda,
            AlgoKind::Qda => AlgoSpec::Qda,
            AlgoKind::GaussianNb => AlgoSpec::GaussianNb,
            AlgoKind::LogisticRegression => AlgoSpec::LogisticRegression {
                learning_rate: 0.1,
                epochs: 500,
                l2: 1e-4,
            },
            AlgoKind::WeightedKnn => AlgoSpec::WeightedKnn {
                k: 10,
                standardize: true,
            },
            AlgoKind::BaggedTrees => AlgoSpec::BaggedTrees {
                n_bags: 50,
                bootstrap: true,
                max_depth: tree.max_depth,
                min_leaf: tree.min_leaf,
                seed,
            },
            AlgoKind::RusBoostedTrees => AlgoSpec::RusBoostedTrees {
                rounds: 50,
                max_depth: 4,
                seed,
            },
        }
    }

    pub fn kind(&self) -> AlgoKind {
        match self {
            AlgoSpec::DecisionTree { .. } => AlgoKind::DecisionTree,
            AlgoSpec::Lda => AlgoKind::Lda,
            AlgoSpec::Qda => AlgoKind::Qda,
            AlgoSpec::GaussianNb => AlgoKind::GaussianNb,
            AlgoSpec::LogisticRegression { .. } => AlgoKind::LogisticRegression,
            AlgoSpec::WeightedKnn { .. } => AlgoKind::WeightedKnn,
            AlgoSpec::BaggedTrees { .. } => AlgoKind::BaggedTrees,
            AlgoSpec::RusBoostedTrees { .. } => AlgoKind::RusBoostedTrees,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            AlgoSpec::BaggedTrees { seed, .. } | AlgoSpec::RusBoostedTrees { seed, .. } => Some(*seed),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MlError::Config(m.to_string()));
        match *self {
            AlgoSpec::DecisionTree { min_leaf, .. } | AlgoSpec::BaggedTrees { min_leaf, .. } if min_leaf == 0 => {
                bad("min_leaf must be at least 1")
            }
            AlgoSpec::BaggedTrees { n_bags: 0, .. } => bad("n_bags must be at least 1"),
            AlgoSpec::RusBoostedTrees { rounds: 0, .. } => bad("rounds must be at least 1"),
            AlgoSpec::WeightedKnn { k: 0, .. } => bad("k must be at least 1"),
            AlgoSpec::LogisticRegression { learning_rate, l2, .. }
                if !(learning_rate > 0.0 && learning_rate.is_finite()) || !(l2 >= 0.0) =>
            {
                bad("learning_rate must be positive and l2 non-negative")
            }
            _ => Ok(()),
        }
    }

    /// Fits on `data`; scores are laid out over `data.n_classes`.
    pub fn fit(&self, data: &Dataset) -> Result<Learned> {
        self.validate()?;
        if data.is_empty() {
            return Err(MlError::Train("empty training set".into()));
        }
        if data.class_counts().iter().filter(|&&n| n > 0).count() < 2 {
            return Err(MlError::Train("at least two classes are required".into()));
        }
        if data.x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MlError::Train("non-finite feature value".into()));
        }
        Ok(match *self {
            AlgoSpec::DecisionTree { max_depth, min_leaf } => Learned::DecisionTree(DecisionTree::fit(
                &data.x,
                &data.y,
                data.n_classes,
                TreeParams { max_depth, min_leaf },
            )),
            AlgoSpec::Lda => Learned::Lda(Lda::fit(data)?),
            AlgoSpec::Qda => Learned::Qda(Qda::fit(data)?),
            AlgoSpec::GaussianNb => Learned::GaussianNb(GaussianNb::fit(data)?),
            AlgoSpec::LogisticRegression {
                learning_rate,
                epochs,
                l2,
            } => Learned::LogisticRegression(LogisticRegression::fit(data, learning_rate, epochs, l2)),
            AlgoSpec::WeightedKnn { k, standardize } => {
                Learned::WeightedKnn(WeightedKnn::fit(data, k, standardize))
            }
            AlgoSpec::BaggedTrees {
                n_bags,
                bootstrap,
                max_depth,
                min_leaf,
                seed,
            } => Learned::BaggedTrees(BaggedTrees::fit(
                data,
                n_bags,
                bootstrap,
                TreeParams { max_depth, min_leaf },
                seed,
            )),
            AlgoSpec::RusBoostedTrees {
                rounds,
                max_depth,
                seed,
            } => Learned::RusBoostedTrees(RusBoost::fit(data, rounds, max_depth, seed)),
        })
    }
}

/// Fitted parameters of one classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Learned {
    DecisionTree(DecisionTree),
    Lda(Lda),
    Qda(Qda),
    GaussianNb(GaussianNb),
    LogisticRegression(LogisticRegression),
    WeightedKnn(WeightedKnn),
    BaggedTrees(BaggedTrees),
    RusBoostedTrees(RusBoost),
}

impl Learned {
    /// Class scores summing to 1. Probabilistic models return posteriors,
    /// voting models return vote shares.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Learned::DecisionTree(t) => t.predict_proba(x).to_vec(),
            Learned::Lda(m) => softmax(&m.log_scores(x)),
            Learned::Qda(m) => softmax(&m.log_scores(x)),
            Learned::GaussianNb(m) => softmax(&m.log_scores(x)),
            Learned::LogisticRegression(m) => softmax(&m.log_scores(x)),
            Learned::WeightedKnn(m) => m.scores(x),
            Learned::BaggedTrees(m) => m.scores(x),
            Learned::RusBoostedTrees(m) => m.scores(x),
        }
    }

    pub fn predict_class(&self, x: &[f64]) -> usize {
        argmax(&self.scores(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub spec: AlgoSpec,
    pub scenario: Scenario,
    pub classes: Vec<String>,
    pub subset: FeatureSubset,
    pub n_features: usize,
    pub learned: Learned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class_index: usize,
    pub label: String,
    pub scores: Vec<f64>,
}

/// Trains on the table's active subset. Classes are those of `scenario`.
pub fn train_classifier(table: &FeatureTable, spec: &AlgoSpec, scenario: Scenario) -> Result<ClassifierModel> {
    let data = Dataset::from_table(table, scenario);
    let learned = spec.fit(&data)?;
    Ok(ClassifierModel {
        spec: spec.clone(),
        scenario,
        classes: scenario.class_names(),
        subset: table.subset,
        n_features: data.n_features(),
        learned,
    })
}

/// Scores one already-projected feature row.
pub fn predict(model: &ClassifierModel, features: &[f64]) -> Result<Prediction> {
    if features.len() != model.n_features {
        return Err(MlError::Predict(format!(
            "expected {} features, got {}",
            model.n_features,
            features.len()
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(MlError::Predict("non-finite feature value".into()));
    }
    let scores = model.learned.scores(features);
    let class_index = argmax(&scores);
    Ok(Prediction {
        class_index,
        label: model.classes[class_index].clone(),
        scores,
    })
}

impl ClassifierModel {
    /// Projects a full feature vector onto the model's subset and predicts.
    pub fn predict_vector(&self, fv: &FeatureVector) -> Result<Prediction> {
        predict(self, &self.subset.project(&fv.values()))
    }
}
