//! Frequency-domain transforms: DFT, power spectrum, STFT, mel filterbank,
//! log-mel spectrogram and fixed-size spectrogram images.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::AudioClip;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("empty result: {0}")]
    EmptyResult(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, SpectralError>;

/// Floor added to mel energies before taking the natural log.
pub const LOG_FLOOR: f64 = 1e-10;

/// DFT of a real signal, all `n` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    pub bins: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn n(&self) -> usize {
        self.bins.len()
    }
}

/// A reusable forward transform for one length.
#[derive(Clone)]
pub struct DftPlan {
    fft: Arc<dyn Fft<f64>>,
}

impl DftPlan {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "transform length must be at least 1");
        Self {
            fft: FftPlanner::new().plan_fft_forward(n),
        }
    }

    pub fn len(&self) -> usize {
        self.fft.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Transforms `signal`, zero-padding or truncating it to the plan length.
    pub fn transform_into(&self, signal: &[f64], out: &mut Vec<Complex64>) {
        let n = self.len();
        out.clear();
        out.extend(signal.iter().take(n).map(|&x| Complex64::new(x, 0.0)));
        out.resize(n, Complex64::new(0.0, 0.0));
        self.fft.process(out);
    }

    pub fn transform(&self, signal: &[f64]) -> ComplexSpectrum {
        let mut bins = Vec::with_capacity(self.len());
        self.transform_into(signal, &mut bins);
        ComplexSpectrum { bins }
    }
}

/// `Y[k] = Σ y[t]·exp(−2πi·kt/n)` for `k` in `0..n`.
pub fn dft(signal: &[f64]) -> Result<ComplexSpectrum> {
    if signal.is_empty() {
        return Err(SpectralError::EmptyResult("dft of an empty signal".into()));
    }
    Ok(DftPlan::new(signal.len()).transform(signal))
}

/// `|Y[k]|²` per bin.
pub fn power_spectrum(spec: &ComplexSpectrum) -> Vec<f64> {
    spec.bins.iter().map(|c| c.norm_sqr()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Rectangular,
    /// Periodic Hann.
    Hann,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; len],
            Window::Hann => (0..len)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrogramScale {
    Power,
    MelLog,
}

/// Time × frequency matrix, row-major with one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub data: Vec<f64>,
    pub n_frames: usize,
    pub n_bins: usize,
    pub frame_len: usize,
    pub hop: usize,
    pub scale: SpectrogramScale,
}

impl Spectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.n_bins..(t + 1) * self.n_bins]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_bins)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub window: Window,
}

impl StftConfig {
    /// Zero-padded transform length: the next power of two ≥ `frame_len`.
    pub fn fft_len(&self) -> usize {
        self.frame_len.next_power_of_two()
    }

    pub fn n_frames(&self, n_samples: usize) -> usize {
        if n_samples < self.frame_len {
            0
        } else {
            (n_samples - self.frame_len) / self.hop + 1
        }
    }
}

fn check_mono(clip: &AudioClip) -> Result<()> {
    if clip.channels() != 1 {
        return Err(SpectralError::Config(format!(
            "expected a mono clip, got {} channels",
            clip.channels()
        )));
    }
    Ok(())
}

/// One-sided power STFT: frame `t` covers samples `[t·hop, t·hop + frame_len)`.
pub fn stft(clip: &AudioClip, cfg: &StftConfig) -> Result<Spectrogram> {
    check_mono(clip)?;
    if cfg.frame_len == 0 || cfg.hop == 0 {
        return Err(SpectralError::Config(
            "frame length and hop must be positive".into(),
        ));
    }
    let samples = clip.samples();
    let n_frames = cfg.n_frames(samples.len());
    if n_frames == 0 {
        return Err(SpectralError::EmptyResult(format!(
            "clip has {} samples, fewer than one {}-sample frame",
            samples.len(),
            cfg.frame_len
        )));
    }
    let n_fft = cfg.fft_len();
    let n_bins = n_fft / 2 + 1;
    let window = cfg.window.coefficients(cfg.frame_len);
    let plan = DftPlan::new(n_fft);
    let mut frame = vec![0.0; cfg.frame_len];
    let mut bins = Vec::with_capacity(n_fft);
    let mut data = Vec::with_capacity(n_frames * n_bins);
    for t in 0..n_frames {
        let start = t * cfg.hop;
        for (dst, (&x, &w)) in frame
            .iter_mut()
            .zip(samples[start..start + cfg.frame_len].iter().zip(&window))
        {
            *dst = x * w;
        }
        plan.transform_into(&frame, &mut bins);
        data.extend(bins[..n_bins].iter().map(|c| c.norm_sqr()));
    }
    Ok(Spectrogram {
        data,
        n_frames,
        n_bins,
        frame_len: cfg.frame_len,
        hop: cfg.hop,
        scale: SpectrogramScale::Power,
    })
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters over the one-sided FFT bins, centers equally spaced
/// on the mel scale.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    /// `n_filters × (n_fft/2 + 1)`, row-major.
    pub weights: Vec<f64>,
    pub n_filters: usize,
    pub n_fft: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// FFT bin of each filter's peak.
    pub center_bins: Vec<usize>,
}

impl MelFilterbank {
    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn row(&self, m: usize) -> &[f64] {
        let nb = self.n_bins();
        &self.weights[m * nb..(m + 1) * nb]
    }

    /// Filter energies `W · power` for one power frame.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_filters];
        self.apply_into(power, &mut out);
        out
    }

    pub fn apply_into(&self, power: &[f64], out: &mut [f64]) {
        debug_assert_eq!(power.len(), self.n_bins());
        for (m, o) in out.iter_mut().enumerate() {
            *o = self.row(m).iter().zip(power).map(|(w, p)| w * p).sum();
        }
    }
}

pub fn mel_filterbank(
    n_filters: usize,
    n_fft: usize,
    sample_rate: u32,
    f_min: f64,
    f_max: f64,
) -> Result<MelFilterbank> {
    let nyquist = sample_rate as f64 / 2.0;
    if n_filters == 0 {
        return Err(SpectralError::Config("n_filters must be at least 1".into()));
    }
    if !n_fft.is_power_of_two() || n_fft < 2 {
        return Err(SpectralError::Config(format!(
            "n_fft {n_fft} is not a power of two"
        )));
    }
    if !(0.0 <= f_min && f_min < f_max && f_max <= nyquist) {
        return Err(SpectralError::Config(format!(
            "frequency range [{f_min}, {f_max}] must satisfy 0 ≤ f_min < f_max ≤ {nyquist}"
        )));
    }
    let (mel_lo, mel_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let n_points = n_filters + 2;
    let points: Vec<usize> = (0..n_points)
        .map(|i| {
            let mel = mel_lo + (mel_hi - mel_lo) * i as f64 / (n_points - 1) as f64;
            ((n_fft + 1) as f64 * mel_to_hz(mel) / sample_rate as f64).floor() as usize
        })
        .map(|b| b.min(n_fft / 2))
        .collect();
    if let Some(w) = points.windows(2).position(|w| w[0] >= w[1]) {
        return Err(SpectralError::Config(format!(
            "{n_filters} filters are too many for n_fft={n_fft}: mel points {w} and {} share FFT bin {}",
            w + 1,
            points[w]
        )));
    }
    let n_bins = n_fft / 2 + 1;
    let mut weights = vec![0.0; n_filters * n_bins];
    for m in 0..n_filters {
        let (lo, center, hi) = (points[m], points[m + 1], points[m + 2]);
        let row = &mut weights[m * n_bins..(m + 1) * n_bins];
        for k in lo..=center {
            row[k] = (k - lo) as f64 / (center - lo) as f64;
        }
        for k in center..=hi {
            row[k] = (hi - k) as f64 / (hi - center) as f64;
        }
    }
    Ok(MelFilterbank {
        weights,
        n_filters,
        n_fft,
        f_min,
        f_max,
        center_bins: points[1..=n_filters].to_vec(),
    })
}

/// STFT geometry plus filterbank settings. `f_max = None` means Nyquist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub stft: StftConfig,
    pub n_filters: usize,
    pub f_min: f64,
    pub f_max: Option<f64>,
}

impl MelConfig {
    /// 25 ms Hann frames, 10 ms hop, 26 filters over the full band.
    pub fn speech_default(sample_rate: u32) -> Self {
        let frame_len = (sample_rate as f64 * 0.025).round() as usize;
        let hop = (sample_rate as f64 * 0.010).round() as usize;
        Self {
            stft: StftConfig {
                frame_len,
                hop,
                window: Window::Hann,
            },
            n_filters: 26,
            f_min: 0.0,
            f_max: None,
        }
    }

    pub fn filterbank(&self, sample_rate: u32) -> Result<MelFilterbank> {
        mel_filterbank(
            self.n_filters,
            self.stft.fft_len(),
            sample_rate,
            self.f_min,
            self.f_max.unwrap_or(sample_rate as f64 / 2.0),
        )
    }
}

/// Natural-log mel energies per frame: `ln(W · P + 1e-10)`.
pub fn mel_spectrogram(clip: &AudioClip, cfg: &MelConfig) -> Result<Spectrogram> {
    let fb = cfg.filterbank(clip.sample_rate())?;
    let power = stft(clip, &cfg.stft)?;
    let mut data = Vec::with_capacity(power.n_frames * fb.n_filters);
    let mut energies = vec![0.0; fb.n_filters];
    for frame in power.frames() {
        fb.apply_into(frame, &mut energies);
        data.extend(energies.iter().map(|e| (e + LOG_FLOOR).ln()));
    }
    Ok(Spectrogram {
        data,
        n_frames: power.n_frames,
        n_bins: fb.n_filters,
        frame_len: power.frame_len,
        hop: power.hop,
        scale: SpectrogramScale::MelLog,
    })
}

/// Single-channel image, row-major `height × width`, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

/// Bilinear resize with half-pixel centers and edge clamping.
pub fn resize_bilinear(
    src: &[f64],
    src_h: usize,
    src_w: usize,
    dst_h: usize,
    dst_w: usize,
) -> Vec<f64> {
    assert_eq!(src.len(), src_h * src_w);
    assert!(src_h > 0 && src_w > 0 && dst_h > 0 && dst_w > 0);
    let axis = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f64) {
        let scale = src_len as f64 / dst_len as f64;
        let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(src_len - 1);
        (lo, hi, pos - lo as f64)
    };
    let mut out = Vec::with_capacity(dst_h * dst_w);
    for y in 0..dst_h {
        let (y0, y1, fy) = axis(y, src_h, dst_h);
        for x in 0..dst_w {
            let (x0, x1, fx) = axis(x, src_w, dst_w);
            let top = src[y0 * src_w + x0] * (1.0 - fx) + src[y0 * src_w + x1] * fx;
            let bottom = src[y1 * src_w + x0] * (1.0 - fx) + src[y1 * src_w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// `(x − min)/(max − min)`; a constant input maps to all zeros.
pub fn minmax_scale(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0.0; values.len()];
    }
    values
        .iter()
        .map(|&v| ((v - lo) / range).clamp(0.0, 1.0))
        .collect()
}

/// Resizes a spectrogram (frames as rows) to `height × width` and min-max
/// scales it to `[0, 1]`.
pub fn spectrogram_image(spec: &Spectrogram, height: usize, width: usize) -> Result<Image> {
    if spec.n_frames == 0 || spec.n_bins == 0 {
        return Err(SpectralError::EmptyResult("empty spectrogram".into()));
    }
    let resized = resize_bilinear(&spec.data, spec.n_frames, spec.n_bins, height, width);
    Ok(Image {
        height,
        width,
        data: minmax_scale(&resized),
    })
}
