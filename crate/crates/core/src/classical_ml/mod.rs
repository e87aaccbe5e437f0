//! Classical classifiers over feature tables, cross-validation and
//! confusion-matrix metrics.
//!
//! Two scenarios are supported: `Binary` (Human vs. Synthetic) and `Multi`
//! (Human, NaturalReader, SpikAI, Replica).

mod cv;
mod discriminant;
mod ensemble;
mod knn;
mod logistic;
mod metrics;
mod model;
mod naive_bayes;
mod persist;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::ClassLabel;
use crate::features::FeatureTable;

pub use cv::{cross_validate, kfold_split, stratified_folds, CvReport};
pub use discriminant::{Lda, Qda};
pub use ensemble::{undersample_indices, BaggedTrees, BoostRound, RusBoost};
pub use knn::WeightedKnn;
pub use logistic::LogisticRegression;
pub use metrics::{f1_score, metrics, precision, recall, ClassMetrics, ConfusionMatrix, MetricsReport};
pub use model::{predict, train_classifier, AlgoKind, AlgoSpec, ClassifierModel, Learned, Prediction};
pub use naive_bayes::GaussianNb;
pub use persist::{ClassifierFile, CLASSIFIER_FORMAT, CLASSIFIER_VERSION};
pub use tree::{DecisionTree, TreeNode, TreeParams};

#[derive(Debug, Error)]
pub enum MlError {
    #[error("training failed: {0}")]
    Train(String),
    #[error("prediction failed: {0}")]
    Predict(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model file: {0}")]
    Format(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MlError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Binary,
    Multi,
}

impl Scenario {
    pub fn n_classes(self) -> usize {
        match self {
            Scenario::Binary => 2,
            Scenario::Multi => 4,
        }
    }

    pub fn class_names(self) -> Vec<String> {
        match self {
            Scenario::Binary => vec!["Human".into(), "Synthetic".into()],
            Scenario::Multi => ClassLabel::ALL.iter().map(|l| l.to_string()).collect(),
        }
    }

    pub fn class_of(self, label: ClassLabel) -> usize {
        match self {
            Scenario::Binary => usize::from(label != ClassLabel::Human),
            Scenario::Multi => label.index(),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Binary => "binary",
            Scenario::Multi => "multi",
        })
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binary" => Ok(Scenario::Binary),
            "multi" | "multiclass" => Ok(Scenario::Multi),
            other => Err(format!("unknown scenario `{other}`")),
        }
    }
}

/// Dense design matrix with class indices in `0..n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<usize>, n_classes: usize) -> Self {
        assert_eq!(x.len(), y.len());
        debug_assert!(y.iter().all(|&c| c < n_classes));
        Self { x, y, n_classes }
    }

    /// Active feature columns of `table`, labels mapped through `scenario`.
    pub fn from_table(table: &FeatureTable, scenario: Scenario) -> Self {
        let y = table
            .rows
            .iter()
            .map(|r| scenario.class_of(r.label))
            .collect();
        Self::new(table.matrix(), y, scenario.n_classes())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &c in &self.y {
            counts[c] += 1;
        }
        counts
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            n_classes: self.n_classes,
        }
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax of log-scores.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Per-column mean and standard deviation; zero deviations become 1.
pub(crate) fn column_standardizer(x: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = x.first().map_or(0, Vec::len);
    let n = x.len() as f64;
    let mut mean = vec![0.0; d];
    for row in x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut sd = vec![0.0; d];
    for row in x {
        for j in 0..d {
            sd[j] += (row[j] - mean[j]).powi(2);
        }
    }
    for s in &mut sd {
        *s = (*s / n).sqrt();
        if !(*s > 1e-12) {
            *s = 1.0;
        }
    }
    (mean, sd)
}

pub(crate) fn standardize_row(row: &[f64], mean: &[f64], sd: &[f64]) -> Vec<f64> {
    row.iter()
        .zip(mean.iter().zip(sd))
        .map(|(v, (m, s))| (v - m) / s)
        .collect()
}
