//! Small convolutional-recurrent network over 32×32 spectrogram images:
//! three convolutions, two bidirectional LSTMs and a dense head, with
//! hand-written gradients and an Adam trainer.

#[cfg(test)]
mod checks;
mod layers;
mod lstm;
mod persist;
mod train;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::AudioClip;
use crate::classical_ml::argmax;
use crate::features::FeatureConfig;
use crate::spectral::{mel_spectrogram, spectrogram_image, SpectralError};

use layers::ConvGeom;
use lstm::{BiLstmCache, LstmDims};

pub use persist::{NETWORK_MAGIC, NETWORK_VERSION};
pub use train::{fit, stratified_split, train, Adam, EpochStats, History, TrainConfig, TrainReport};

#[derive(Debug, Error)]
pub enum CrnnError {
    #[error("layer {index} ({name}): {message}")]
    Build {
        index: usize,
        name: &'static str,
        message: String,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("network file: {0}")]
    Format(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CrnnError>;

/// Dense tensor, row-major. Batches put the sample index first.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(CrnnError::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    /// Stacks equally sized samples into a batch with `sample_shape` per
    /// sample.
    pub fn stack<S: AsRef<[f64]>>(samples: &[S], sample_shape: &[usize]) -> Result<Self> {
        let per: usize = sample_shape.iter().product();
        let mut data = Vec::with_capacity(per * samples.len());
        for s in samples {
            if s.as_ref().len() != per {
                return Err(CrnnError::Shape(format!(
                    "sample of {} values does not fit {sample_shape:?}",
                    s.as_ref().len()
                )));
            }
            data.extend_from_slice(s.as_ref());
        }
        let mut shape = vec![samples.len()];
        shape.extend_from_slice(sample_shape);
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn batch_size(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let per = self.data.len() / self.batch_size().max(1);
        &self.data[i * per..(i + 1) * per]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case")]
pub enum LayerSpec {
    Resize { height: usize, width: usize },
    /// `(x − offset) / scale`.
    Normalize { offset: f64, scale: f64 },
    /// Valid-padding `kernel × kernel` convolution with stride 1.
    Conv2d { filters: usize, kernel: usize, relu: bool },
    MaxPool { size: usize },
    Dropout { rate: f64 },
    /// `[h, w, c]` image to an `h`-step sequence of `w·c` features.
    SqueezeToSequence,
    BiLstm { hidden: usize },
    Flatten,
    Dense { units: usize, relu: bool },
    Softmax,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Resize { .. } => "resize",
            LayerSpec::Normalize { .. } => "normalize",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::SqueezeToSequence => "squeeze_to_sequence",
            LayerSpec::BiLstm { .. } => "bilstm",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Softmax => "softmax",
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        let image = || match input {
            [h, w, c] => Ok((*h, *w, *c)),
            other => Err(format!("expects an image [h, w, c], got {other:?}")),
        };
        match *self {
            LayerSpec::Resize { height, width } => {
                let (_, _, c) = image()?;
                if height == 0 || width == 0 {
                    return Err("target size must be positive".into());
                }
                Ok(vec![height, width, c])
            }
            LayerSpec::Normalize { scale, .. } => {
                if scale == 0.0 || !scale.is_finite() {
                    return Err("scale must be finite and nonzero".into());
                }
                Ok(input.to_vec())
            }
            LayerSpec::Conv2d { filters, kernel, .. } => {
                let (h, w, _) = image()?;
                if filters == 0 || kernel == 0 {
                    return Err("filters and kernel must be positive".into());
                }
                if h < kernel || w < kernel {
                    return Err(format!("input {h}×{w} is smaller than the {kernel}×{kernel} kernel"));
                }
                Ok(vec![h - kernel + 1, w - kernel + 1, filters])
            }
            LayerSpec::MaxPool { size } => {
                let (h, w, c) = image()?;
                if size == 0 || h < size || w < size {
                    return Err(format!("cannot pool {h}×{w} with window {size}"));
                }
                Ok(vec![h / size, w / size, c])
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(format!("rate {rate} is outside [0, 1)"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::SqueezeToSequence => {
                let (h, w, c) = image()?;
                Ok(vec![h, w * c])
            }
            LayerSpec::BiLstm { hidden } => match input {
                [t, _] if hidden > 0 && *t > 0 => Ok(vec![*t, 2 * hidden]),
                [_, _] => Err("hidden size and sequence length must be positive".into()),
                other => Err(format!("expects a sequence [steps, features], got {other:?}")),
            },
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { units, .. } => match input {
                [_] if units > 0 => Ok(vec![units]),
                [_] => Err("units must be positive".into()),
                other => Err(format!("expects a flat vector, got {other:?}")),
            },
            LayerSpec::Softmax => match input {
                [n] if *n > 0 => Ok(vec![*n]),
                other => Err(format!("expects a flat vector, got {other:?}")),
            },
        }
    }

    /// Lengths of the parameter blocks this layer owns for `input`.
    pub fn param_blocks(&self, input: &[usize]) -> Vec<usize> {
        match (*self, input) {
            (LayerSpec::Conv2d { filters, kernel, .. }, [_, _, c]) => {
                vec![kernel * kernel * c * filters, filters]
            }
            (LayerSpec::BiLstm { hidden }, [_, d]) => {
                let one = [d * 4 * hidden, hidden * 4 * hidden, 4 * hidden];
                one.iter().chain(&one).copied().collect()
            }
            (LayerSpec::Dense { units, .. }, [n]) => vec![n * units, units],
            _ => Vec::new(),
        }
    }

    /// Closed-form parameter count: `k²·c_in·c_out + c_out` for a
    /// convolution, `2 · 4h(d + h + 1)` for a bidirectional LSTM and
    /// `in·out + out` for a dense layer.
    pub fn param_count(&self, input: &[usize]) -> usize {
        match (*self, input) {
            (LayerSpec::Conv2d { filters, kernel, .. }, [_, _, c]) => kernel * kernel * c * filters + filters,
            (LayerSpec::BiLstm { hidden }, [_, d]) => 2 * 4 * hidden * (d + hidden + 1),
            (LayerSpec::Dense { units, .. }, [n]) => n * units + units,
            _ => 0,
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Resize { height, width } => write!(f, "resize({height}, {width})"),
            LayerSpec::Normalize { offset, scale } => write!(f, "normalize({offset}, {scale})"),
            LayerSpec::Conv2d { filters, kernel, .. } => write!(f, "conv2d({filters}, {kernel}×{kernel})"),
            LayerSpec::MaxPool { size } => write!(f, "maxpool({size})"),
            LayerSpec::Dropout { rate } => write!(f, "dropout({rate})"),
            LayerSpec::SqueezeToSequence => f.write_str("squeeze_to_sequence"),
            LayerSpec::BiLstm { hidden } => write!(f, "bilstm({hidden})"),
            LayerSpec::Flatten => f.write_str("flatten"),
            LayerSpec::Dense { units, .. } => write!(f, "dense({units})"),
            LayerSpec::Softmax => f.write_str("softmax"),
        }
    }
}

/// Geometry of the default network. The defaults reproduce the reference
/// parameter counts: 39 424 and 98 816 in the two recurrent layers and a
/// 1 536-wide flatten.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrnnConfig {
    pub input_height: usize,
    pub input_width: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub conv3_filters: usize,
    pub lstm1_hidden: usize,
    pub lstm2_hidden: usize,
    pub dense_units: usize,
    pub pool_dropout: f64,
    pub head_dropout: f64,
    pub init_seed: u64,
}

impl Default for CrnnConfig {
    fn default() -> Self {
        Self {
            input_height: 32,
            input_width: 32,
            conv1_filters: 32,
            conv2_filters: 64,
            conv3_filters: 1,
            lstm1_hidden: 64,
            lstm2_hidden: 64,
            dense_units: 64,
            pool_dropout: 0.25,
            head_dropout: 0.5,
            init_seed: 0,
        }
    }
}

impl CrnnConfig {
    pub fn layers(&self, num_classes: usize) -> Vec<LayerSpec> {
        vec![
            LayerSpec::Resize {
                height: self.input_height,
                width: self.input_width,
            },
            LayerSpec::Normalize {
                offset: 0.5,
                scale: 0.5,
            },
            LayerSpec::Conv2d {
                filters: self.conv1_filters,
                kernel: 3,
                relu: true,
            },
            LayerSpec::Conv2d {
                filters: self.conv2_filters,
                kernel: 3,
                relu: true,
            },
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::Dropout {
                rate: self.pool_dropout,
            },
            LayerSpec::Conv2d {
                filters: self.conv3_filters,
                kernel: 3,
                relu: true,
            },
            LayerSpec::SqueezeToSequence,
            LayerSpec::BiLstm {
                hidden: self.lstm1_hidden,
            },
            LayerSpec::BiLstm {
                hidden: self.lstm2_hidden,
            },
            LayerSpec::Flatten,
            LayerSpec::Dense {
                units: self.dense_units,
                relu: true,
            },
            LayerSpec::Dropout {
                rate: self.head_dropout,
            },
            LayerSpec::Dense {
                units: num_classes,
                relu: false,
            },
            LayerSpec::Softmax,
        ]
    }
}

pub type Params = Vec<Vec<Vec<f64>>>;

/// Optimizer moments and step counter, rebuilt on load.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingState {
    pub step: u64,
    pub first_moment: Params,
    pub second_moment: Params,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    specs: Vec<LayerSpec>,
    /// `shapes[i]` is the per-sample input of layer `i`; the last entry is
    /// the network output.
    shapes: Vec<Vec<usize>>,
    /// Per layer, per block.
    pub params: Params,
    pub classes: Vec<String>,
    pub frontend: FeatureConfig,
    pub training: TrainingState,
}

/// Glorot-uniform weights, zero biases.
fn init_blocks(spec: &LayerSpec, input: &[usize], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut uniform = |len: usize, fan_in: usize, fan_out: usize| -> Vec<f64> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        (0..len).map(|_| rng.random_range(-limit..limit)).collect()
    };
    match (*spec, input) {
        (LayerSpec::Conv2d { filters, kernel, .. }, [_, _, c]) => {
            let k2 = kernel * kernel;
            vec![uniform(k2 * c * filters, k2 * c, k2 * filters), vec![0.0; filters]]
        }
        (LayerSpec::BiLstm { hidden }, [_, d]) => {
            let g4 = 4 * hidden;
            let mut blocks = Vec::with_capacity(6);
            for _ in 0..2 {
                blocks.push(uniform(d * g4, *d, g4));
                blocks.push(uniform(hidden * g4, hidden, g4));
                blocks.push(vec![0.0; g4]);
            }
            blocks
        }
        (LayerSpec::Dense { units, .. }, [n]) => vec![uniform(n * units, *n, units), vec![0.0; units]],
        _ => Vec::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Inverted dropout with masks drawn from `dropout_seed`.
    Train { dropout_seed: u64 },
}

#[derive(Debug, Clone)]
pub enum LayerCache {
    None,
    Conv { input: Vec<f64>, pre: Vec<f64> },
    Pool { winners: Vec<usize> },
    Dropout { mask: Vec<f64> },
    BiLstm(Box<BiLstmCache>),
    Dense { input: Vec<f64>, pre: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub logits: Tensor,
    pub probs: Tensor,
    /// Per sample, per layer.
    pub caches: Vec<Vec<LayerCache>>,
    pub mode: Mode,
}

impl ForwardPass {
    /// Pre-activation output of a convolution or dense layer.
    pub fn pre_activation(&self, sample: usize, layer: usize) -> Option<&[f64]> {
        match &self.caches[sample][layer] {
            LayerCache::Conv { pre, .. } | LayerCache::Dense { pre, .. } => Some(pre),
            _ => None,
        }
    }

    pub fn predictions(&self) -> Vec<usize> {
        let k = self.probs.shape()[1];
        self.probs.data().chunks(k).map(argmax).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Params,
    /// Gradient at the softmax input, `(p − onehot) / B`.
    pub logits: Tensor,
    /// Gradient with respect to the batch input; absent when the stack
    /// starts with a resize.
    pub input: Option<Tensor>,
}

impl Network {
    /// Validates the shape chain and initializes parameters from `seed`.
    pub fn new(input_shape: Vec<usize>, specs: Vec<LayerSpec>, classes: Vec<String>, seed: u64) -> Result<Self> {
        let shapes = shape_chain(&input_shape, &specs)?;
        let out = shapes.last().expect("chain has an output");
        if out != &vec![classes.len()] {
            return Err(CrnnError::Build {
                index: specs.len() - 1,
                name: specs.last().map_or("output", LayerSpec::name),
                message: format!("produces {out:?} for {} classes", classes.len()),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = specs
            .iter()
            .zip(&shapes)
            .map(|(s, shape)| init_blocks(s, shape, &mut rng))
            .collect();
        Ok(Self {
            input_shape,
            specs,
            shapes,
            params,
            classes,
            frontend: FeatureConfig::default(),
            training: TrainingState::default(),
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    /// Per-sample input shape of layer `i`; index `len` gives the output.
    pub fn shape_at(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().flatten().map(Vec::len).sum()
    }

    /// Analytic per-layer parameter counts from the layer specs alone.
    pub fn analytic_param_counts(&self) -> Vec<usize> {
        self.specs
            .iter()
            .zip(&self.shapes)
            .map(|(s, shape)| s.param_count(shape))
            .collect()
    }

    pub fn zero_like_params(&self) -> Params {
        self.params
            .iter()
            .map(|layer| layer.iter().map(|b| vec![0.0; b.len()]).collect())
            .collect()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        if batch.shape().len() != self.input_shape.len() + 1 || batch.shape()[1..] != self.input_shape[..] {
            return Err(CrnnError::Shape(format!(
                "batch shape {:?} does not match (B, {:?})",
                batch.shape(),
                self.input_shape
            )));
        }
        if batch.batch_size() == 0 {
            return Err(CrnnError::Shape("empty batch".into()));
        }
        Ok(())
    }

    fn forward_sample(&self, x: &[f64], mode: Mode, sample: usize) -> (Vec<f64>, Vec<f64>, Vec<LayerCache>) {
        let mut act = x.to_vec();
        let mut caches = Vec::with_capacity(self.specs.len());
        let mut logits = Vec::new();
        for (i, spec) in self.specs.iter().enumerate() {
            let shape = &self.shapes[i];
            let p = &self.params[i];
            let cache = match *spec {
                LayerSpec::Resize { height, width } => {
                    act = layers::resize(&act, shape[0], shape[1], shape[2], height, width);
                    LayerCache::None
                }
                LayerSpec::Normalize { offset, scale } => {
                    act.iter_mut().for_each(|v| *v = (*v - offset) / scale);
                    LayerCache::None
                }
                LayerSpec::Conv2d { filters, kernel, relu } => {
                    let g = ConvGeom {
                        h: shape[0],
                        w: shape[1],
                        c: shape[2],
                        k: kernel,
                        f: filters,
                    };
                    let pre = layers::conv_forward(&g, &act, &p[0], &p[1]);
                    let mut out = pre.clone();
                    if relu {
                        layers::relu_in_place(&mut out);
                    }
                    let input = std::mem::replace(&mut act, out);
                    LayerCache::Conv { input, pre }
                }
                LayerSpec::MaxPool { size } => {
                    let (out, winners) = layers::maxpool_forward(&act, shape[0], shape[1], shape[2], size);
                    act = out;
                    LayerCache::Pool { winners }
                }
                LayerSpec::Dropout { rate } => match mode {
                    Mode::Eval => LayerCache::None,
                    Mode::Train { dropout_seed } => {
                        let mask = layers::dropout_mask(act.len(), rate, dropout_seed, i, sample);
                        act.iter_mut().zip(&mask).for_each(|(a, m)| *a *= m);
                        LayerCache::Dropout { mask }
                    }
                },
                LayerSpec::SqueezeToSequence | LayerSpec::Flatten => LayerCache::None,
                LayerSpec::BiLstm { hidden } => {
                    let dims = LstmDims {
                        steps: shape[0],
                        input: shape[1],
                        hidden,
                    };
                    let (out, cache) = lstm::bilstm_forward(&dims, &act, p);
                    act = out;
                    LayerCache::BiLstm(Box::new(cache))
                }
                LayerSpec::Dense { relu, .. } => {
                    let pre = layers::dense_forward(&act, &p[0], &p[1]);
                    let mut out = pre.clone();
                    if relu {
                        layers::relu_in_place(&mut out);
                    }
                    let input = std::mem::replace(&mut act, out);
                    LayerCache::Dense { input, pre }
                }
                LayerSpec::Softmax => {
                    logits = act.clone();
                    act = layers::softmax(&act);
                    LayerCache::None
                }
            };
            caches.push(cache);
        }
        if logits.is_empty() {
            logits = act.clone();
        }
        (logits, act, caches)
    }

    /// Runs the batch through every layer. Eval mode is a pure function of
    /// the parameters; train mode applies dropout masks drawn from the seed.
    pub fn forward(&self, batch: &Tensor, mode: Mode) -> Result<ForwardPass> {
        self.check_batch(batch)?;
        let b = batch.batch_size();
        let k = self.num_classes();
        let mut logits = Vec::with_capacity(b * k);
        let mut probs = Vec::with_capacity(b * k);
        let mut caches = Vec::with_capacity(b);
        for s in 0..b {
            let (l, p, c) = self.forward_sample(batch.sample(s), mode, s);
            logits.extend(l);
            probs.extend(p);
            caches.push(c);
        }
        Ok(ForwardPass {
            logits: Tensor::new(vec![b, k], logits)?,
            probs: Tensor::new(vec![b, k], probs)?,
            caches,
            mode,
        })
    }

    /// Class probabilities in eval mode.
    pub fn predict_proba(&self, batch: &Tensor) -> Result<Tensor> {
        Ok(self.forward(batch, Mode::Eval)?.probs)
    }

    /// Mean categorical cross-entropy.
    pub fn loss(pass: &ForwardPass, labels: &[usize]) -> f64 {
        let k = pass.probs.shape()[1];
        let total: f64 = labels
            .iter()
            .enumerate()
            .map(|(s, &y)| -pass.probs.data()[s * k + y].max(f64::MIN_POSITIVE).ln())
            .sum();
        total / labels.len() as f64
    }

    /// Gradients of the mean cross-entropy with respect to every parameter.
    pub fn backward(&self, pass: &ForwardPass, labels: &[usize]) -> Result<Gradients> {
        let b = pass.caches.len();
        let k = self.num_classes();
        if labels.len() != b {
            return Err(CrnnError::Shape(format!("{} labels for a batch of {b}", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(CrnnError::Shape(format!("label {bad} out of range for {k} classes")));
        }
        let mut d_logits = pass.probs.data().to_vec();
        for (s, &y) in labels.iter().enumerate() {
            d_logits[s * k + y] -= 1.0;
        }
        d_logits.iter_mut().for_each(|g| *g /= b as f64);
        let mut grads = self.zero_like_params();
        let mut d_input = Vec::new();
        let stops_at_resize = self.specs.iter().any(|s| matches!(s, LayerSpec::Resize { .. }));
        for s in 0..b {
            let dx = self.backward_sample(&pass.caches[s], &d_logits[s * k..(s + 1) * k], &mut grads);
            if let Some(dx) = dx {
                d_input.extend(dx);
            }
        }
        let input = if stops_at_resize {
            None
        } else {
            let mut shape = vec![b];
            shape.extend_from_slice(&self.input_shape);
            Some(Tensor::new(shape, d_input)?)
        };
        Ok(Gradients {
            params: grads,
            logits: Tensor::new(vec![b, k], d_logits)?,
            input,
        })
    }

    fn backward_sample(&self, caches: &[LayerCache], d_logits: &[f64], grads: &mut Params) -> Option<Vec<f64>> {
        let mut grad = d_logits.to_vec();
        for i in (0..self.specs.len()).rev() {
            let shape = &self.shapes[i];
            let p = &self.params[i];
            match (self.specs[i], &caches[i]) {
                (LayerSpec::Softmax, _) => {}
                (LayerSpec::Resize { .. }, _) => return None,
                (LayerSpec::Normalize { scale, .. }, _) => grad.iter_mut().for_each(|g| *g /= scale),
                (LayerSpec::Conv2d { filters, kernel, relu }, LayerCache::Conv { input, pre }) => {
                    if relu {
                        layers::relu_mask(&mut grad, pre);
                    }
                    let g = ConvGeom {
                        h: shape[0],
                        w: shape[1],
                        c: shape[2],
                        k: kernel,
                        f: filters,
                    };
                    let (dw, db) = grads[i].split_at_mut(1);
                    // nothing below a resize receives gradients
                    let want_input = !self.specs[..i].iter().any(|s| matches!(s, LayerSpec::Resize { .. }))
                        || self.params[..i].iter().any(|b| !b.is_empty());
                    match layers::conv_backward(&g, input, &p[0], &grad, &mut dw[0], &mut db[0], want_input) {
                        Some(dx) => grad = dx,
                        None => return None,
                    }
                }
                (LayerSpec::MaxPool { .. }, LayerCache::Pool { winners }) => {
                    grad = layers::maxpool_backward(winners, &grad, shape.iter().product());
                }
                (LayerSpec::Dropout { .. }, LayerCache::Dropout { mask }) => {
                    grad.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
                }
                (LayerSpec::Dropout { .. }, _) => {}
                (LayerSpec::SqueezeToSequence | LayerSpec::Flatten, _) => {}
                (LayerSpec::BiLstm { hidden }, LayerCache::BiLstm(cache)) => {
                    let dims = LstmDims {
                        steps: shape[0],
                        input: shape[1],
                        hidden,
                    };
                    grad = lstm::bilstm_backward(&dims, cache, p, &grad, &mut grads[i]);
                }
                (LayerSpec::Dense { relu, .. }, LayerCache::Dense { input, pre }) => {
                    if relu {
                        layers::relu_mask(&mut grad, pre);
                    }
                    let (dw, db) = grads[i].split_at_mut(1);
                    grad = layers::dense_backward(input, &p[0], &grad, &mut dw[0], &mut db[0]);
                }
                (spec, _) => unreachable!("cache does not match layer {spec}"),
            }
        }
        Some(grad)
    }

    /// Flat view of every parameter, in layer then block order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params.iter().flatten().flatten().copied().collect()
    }

    /// Mutable reference to the `n`-th parameter in [`Network::flat_params`]
    /// order.
    pub fn param_mut(&mut self, mut n: usize) -> &mut f64 {
        for block in self.params.iter_mut().flatten() {
            if n < block.len() {
                return &mut block[n];
            }
            n -= block.len();
        }
        panic!("parameter index out of range");
    }
}

fn shape_chain(input: &[usize], specs: &[LayerSpec]) -> Result<Vec<Vec<usize>>> {
    if specs.is_empty() {
        return Err(CrnnError::Config("network has no layers".into()));
    }
    let mut shapes = vec![input.to_vec()];
    for (index, spec) in specs.iter().enumerate() {
        if matches!(spec, LayerSpec::Softmax) && index + 1 != specs.len() {
            return Err(CrnnError::Build {
                index,
                name: spec.name(),
                message: "softmax must be the last layer".into(),
            });
        }
        let next = spec.output_shape(&shapes[index]).map_err(|message| CrnnError::Build {
            index,
            name: spec.name(),
            message,
        })?;
        shapes.push(next);
    }
    Ok(shapes)
}

/// The default image classifier for 2 or 4 classes.
pub fn build_crnn32(classes: Vec<String>, cfg: &CrnnConfig) -> Result<Network> {
    let n = classes.len();
    if n != 2 && n != 4 {
        return Err(CrnnError::Config(format!("expected 2 or 4 classes, got {n}")));
    }
    Network::new(
        vec![cfg.input_height, cfg.input_width, 1],
        cfg.layers(n),
        classes,
        cfg.init_seed,
    )
}

/// Mel spectrogram of `clip` rendered as a network input image.
pub fn clip_image(frontend: &FeatureConfig, clip: &AudioClip, height: usize, width: usize) -> Result<Vec<f64>> {
    let spec = mel_spectrogram(clip, &frontend.mel_config(clip.sample_rate()))?;
    Ok(spectrogram_image(&spec, height, width)?.data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub class_index: usize,
    pub label: String,
    pub scores: Vec<f64>,
}

/// Mel spectrogram → image → eval forward → argmax (lowest index on ties).
pub fn classify(net: &Network, clip: &AudioClip) -> Result<Classification> {
    let [h, w, _] = net.input_shape[..] else {
        return Err(CrnnError::Shape("network input is not an image".into()));
    };
    let image = clip_image(&net.frontend, clip, h, w)?;
    let probs = net.predict_proba(&Tensor::stack(&[image], &net.input_shape)?)?;
    let scores = probs.into_data();
    let class_index = argmax(&scores);
    Ok(Classification {
        class_index,
        label: net.classes[class_index].clone(),
        scores,
    })
}
