use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics, ConfusionMatrix, MetricsReport};
use super::model::AlgoSpec;
use super::{Dataset, MlError, Result, Scenario};
use crate::features::FeatureTable;

/// Shuffles `0..n` and deals it into `k` folds whose sizes differ by at
/// most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::with_capacity(n / k.max(1) + 1); k];
    for (pos, i) in idx.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    folds
}

/// Stratified folds: each class is shuffled separately, then all classes
/// are dealt round-robin in sequence so every fold gets a near-equal share
/// of every class and fold sizes still differ by at most one.
pub fn stratified_folds(y: &[usize], k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = y.iter().copied().max().map_or(0, |m| m + 1);
    let mut order = Vec::with_capacity(y.len());
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        members.shuffle(&mut rng);
        order.extend(members);
    }
    let mut folds = vec![Vec::new(); k];
    for (pos, i) in order.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    folds
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
}

/// Stratified k-fold cross-validation; each row is predicted exactly once
/// by a model that never saw it.
pub fn cross_validate(
    table: &FeatureTable,
    spec: &AlgoSpec,
    scenario: Scenario,
    k: usize,
    seed: u64,
) -> Result<CvReport> {
    if k < 2 {
        return Err(MlError::Config(format!("k must be at least 2, got {k}")));
    }
    let data = Dataset::from_table(table, scenario);
    let counts = data.class_counts();
    if counts.iter().filter(|&&n| n > 0).count() < 2 {
        return Err(MlError::Config("at least two classes are required".into()));
    }
    if let Some((c, n)) = counts.iter().enumerate().find(|(_, &n)| n > 0 && n < k) {
        return Err(MlError::Config(format!(
            "class `{}` has {n} rows, fewer than k = {k}",
            scenario.class_names()[c]
        )));
    }
    let folds = stratified_folds(&data.y, k, seed);
    let mut confusion = ConfusionMatrix::new(scenario.class_names());
    for (f, test) in folds.iter().enumerate() {
        let train: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        let model = spec.fit(&data.subset(&train))?;
        for &i in test {
            confusion.record(data.y[i], model.predict_class(&data.x[i]));
        }
    }
    Ok(CvReport {
        k,
        metrics: metrics(&confusion),
        confusion,
    })
}
