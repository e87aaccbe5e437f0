use std::io::Write;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CrnnError, Mode, Network, Params, Result, Tensor};
use crate::classical_ml::{metrics, ConfusionMatrix, MetricsReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    /// Ends training early once the eval-mode training accuracy reaches
    /// this value.
    pub stop_at_train_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            split: [0.6, 0.2, 0.2],
            stop_at_train_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CrnnError::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(CrnnError::Config("learning rate must be positive".into()));
        }
        if self.split.iter().any(|f| !(0.0..=1.0).contains(f)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CrnnError::Config(format!("split {:?} must be fractions summing to 1", self.split)));
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step(&self, net: &mut Network, grads: &Params) {
        if net.training.first_moment.is_empty() {
            net.training.first_moment = net.zero_like_params();
            net.training.second_moment = net.zero_like_params();
        }
        net.training.step += 1;
        let t = net.training.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let state = &mut net.training;
        let blocks = net
            .params
            .iter_mut()
            .flatten()
            .zip(state.first_moment.iter_mut().flatten())
            .zip(state.second_moment.iter_mut().flatten())
            .zip(grads.iter().flatten());
        for (((p, m), v), g) in blocks {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= self.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + self.epsilon);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochStats>,
}

impl History {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }

    /// `epoch,train_loss,train_acc,val_loss,val_acc`; missing validation
    /// values are left empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,train_loss,train_acc,val_loss,val_acc")?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &self.epochs {
            writeln!(
                out,
                "{},{},{},{},{}",
                e.epoch,
                e.train_loss,
                e.train_accuracy,
                opt(e.val_loss),
                opt(e.val_accuracy)
            )?;
        }
        Ok(())
    }
}

const EVAL_CHUNK: usize = 64;

/// Eval-mode mean loss, accuracy and predicted classes.
pub(crate) fn evaluate(net: &Network, images: &[Vec<f64>], labels: &[usize]) -> Result<(f64, f64, Vec<usize>)> {
    let mut loss = 0.0;
    let mut preds = Vec::with_capacity(labels.len());
    for (imgs, ys) in images.chunks(EVAL_CHUNK).zip(labels.chunks(EVAL_CHUNK)) {
        let pass = net.forward(&Tensor::stack(imgs, net.input_shape())?, Mode::Eval)?;
        loss += Network::loss(&pass, ys) * ys.len() as f64;
        preds.extend(pass.predictions());
    }
    let n = labels.len() as f64;
    let correct = preds.iter().zip(labels).filter(|(p, y)| p == y).count() as f64;
    Ok((loss / n, correct / n, preds))
}

fn check_data(net: &Network, images: &[Vec<f64>], labels: &[usize]) -> Result<()> {
    if images.is_empty() {
        return Err(CrnnError::Config("empty training set".into()));
    }
    if images.len() != labels.len() {
        return Err(CrnnError::Shape(format!("{} images but {} labels", images.len(), labels.len())));
    }
    if let Some(y) = labels.iter().find(|&&y| y >= net.num_classes()) {
        return Err(CrnnError::Config(format!("label {y} out of range")));
    }
    Ok(())
}

/// Minibatch Adam over `images` for `cfg.epochs` epochs (fewer when the
/// early-stop accuracy is reached). Deterministic for a fixed seed.
pub fn fit(
    net: &mut Network,
    images: &[Vec<f64>],
    labels: &[usize],
    val: Option<(&[Vec<f64>], &[usize])>,
    cfg: &TrainConfig,
) -> Result<History> {
    cfg.validate()?;
    check_data(net, images, labels)?;
    if let Some((vi, vl)) = val {
        check_data(net, vi, vl)?;
    }
    let adam = Adam::new(cfg.learning_rate);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(1);
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut history = History::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size) {
            let imgs: Vec<&[f64]> = chunk.iter().map(|&i| images[i].as_slice()).collect();
            let ys: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let batch = Tensor::stack(&imgs, net.input_shape())?;
            let pass = net.forward(
                &batch,
                Mode::Train {
                    dropout_seed: dropout_rng.next_u64(),
                },
            )?;
            let grads = net.backward(&pass, &ys)?;
            adam.step(net, &grads.params);
        }
        let (train_loss, train_accuracy, _) = evaluate(net, images, labels)?;
        let (val_loss, val_accuracy) = match val {
            Some((vi, vl)) => {
                let (l, a, _) = evaluate(net, vi, vl)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        history.epochs.push(EpochStats {
            epoch: epoch + 1,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        });
        if cfg.stop_at_train_accuracy.is_some_and(|target| train_accuracy >= target) {
            break;
        }
    }
    Ok(history)
}

/// Per-class shuffled split by `fractions`; every class present must land
/// in each of the three parts.
pub fn stratified_split(
    labels: &[usize],
    fractions: [f64; 3],
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let (mut tr, mut va, mut te) = (Vec::new(), Vec::new(), Vec::new());
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let n = members.len() as f64;
        let n_train = (fractions[0] * n).round() as usize;
        let n_val = ((fractions[1] * n).round() as usize).min(members.len() - n_train.min(members.len()));
        let n_test = members.len() - n_train.min(members.len()) - n_val;
        if n_train == 0 || n_val == 0 || n_test == 0 {
            return Err(CrnnError::Config(format!(
                "class {c} has {} samples, too few for a {:?} split",
                members.len(),
                fractions
            )));
        }
        tr.extend_from_slice(&members[..n_train]);
        va.extend_from_slice(&members[n_train..n_train + n_val]);
        te.extend_from_slice(&members[n_train + n_val..]);
    }
    tr.sort_unstable();
    va.sort_unstable();
    te.sort_unstable();
    Ok((tr, va, te))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: History,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub test_confusion: ConfusionMatrix,
    pub test_metrics: MetricsReport,
}

/// Stratified train/validation/test split, [`fit`] on the training part and
/// a held-out evaluation on the test part.
pub fn train(net: &mut Network, images: &[Vec<f64>], labels: &[usize], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    check_data(net, images, labels)?;
    let (tr, va, te) = stratified_split(labels, cfg.split, cfg.seed)?;
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        (idx.iter().map(|&i| images[i].clone()).collect(), idx.iter().map(|&i| labels[i]).collect())
    };
    let (tr_x, tr_y) = pick(&tr);
    let (va_x, va_y) = pick(&va);
    let (te_x, te_y) = pick(&te);
    let history = fit(net, &tr_x, &tr_y, Some((&va_x, &va_y)), cfg)?;
    let (_, _, preds) = evaluate(net, &te_x, &te_y)?;
    let mut confusion = ConfusionMatrix::new(net.classes.clone());
    for (&y, &p) in te_y.iter().zip(&preds) {
        confusion.record(y, p);
    }
    Ok(TrainReport {
        history,
        train_indices: tr,
        val_indices: va,
        test_indices: te,
        test_metrics: metrics(&confusion),
        test_confusion: confusion,
    })
}
