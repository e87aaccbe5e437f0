//! Seeded synthetic speech-like corpus for tests and demos.
//!
//! Every clip is a vibrato harmonic series under a syllabic amplitude
//! envelope. Human clips let each harmonic's phase wander independently,
//! which destroys quadratic phase coupling; synthetic clips keep harmonic
//! phases locked (so `φ(f₁) + φ(f₂) = φ(f₁ + f₂)`) and use a per-source
//! spectral envelope.

use std::f64::consts::PI;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::audio_io::{encode_wav_pcm16, AudioClip, ClassLabel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_clips: usize,
    /// 2 (Human vs. synthetic sources) or 4 (one class per source).
    pub classes: usize,
    pub sample_rate: u32,
    pub duration_secs: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_clips: 400,
            classes: 2,
            sample_rate: 8000,
            duration_secs: 4.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthClip {
    pub clip: AudioClip,
    pub label: ClassLabel,
}

const SYNTHETIC: [ClassLabel; 3] = [ClassLabel::NaturalReader, ClassLabel::SpikAI, ClassLabel::Replica];

/// Label of clip `i`. With two classes, even clips are human and odd clips
/// cycle through the synthetic sources.
pub fn synth_label(i: usize, classes: usize) -> ClassLabel {
    if classes == 4 {
        ClassLabel::ALL[i % 4]
    } else if i % 2 == 0 {
        ClassLabel::Human
    } else {
        SYNTHETIC[(i / 2) % 3]
    }
}

fn gauss(f: f64, center: f64, width: f64) -> f64 {
    (-((f - center) / width).powi(2)).exp()
}

/// Relative amplitude of a harmonic at `f` Hz (index `k`) for a source.
fn envelope(label: ClassLabel, f: f64, k: usize) -> f64 {
    let k = k as f64;
    match label {
        ClassLabel::Human => 1.0 / k + 0.6 * gauss(f, 500.0, 200.0) + 0.3 * gauss(f, 1500.0, 300.0),
        ClassLabel::NaturalReader => 1.0 / k.sqrt(),
        ClassLabel::SpikAI => 0.3 / k + gauss(f, 1800.0, 400.0),
        ClassLabel::Replica => 1.0 / k.powf(1.5) + 0.5 * gauss(f, 2600.0, 300.0),
    }
}

/// Phase wander per sample in radians; zero keeps harmonics locked.
fn phase_jitter(label: ClassLabel) -> f64 {
    match label {
        ClassLabel::Human => 0.12,
        _ => 0.0,
    }
}

/// One clip of `label`, fully determined by `(seed, index)`.
pub fn synth_clip(label: ClassLabel, index: usize, cfg: &SynthConfig) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let sr = cfg.sample_rate as f64;
    let n = (cfg.duration_secs * sr).round() as usize;
    let f0 = rng.random_range(100.0..180.0);
    let vib_rate = rng.random_range(4.0..6.0);
    let vib_depth = rng.random_range(0.005..0.015);
    let syllable_rate = rng.random_range(3.0..5.0);
    let gain = rng.random_range(0.3..0.6);
    let noise_sd = gain * 0.01;
    let n_harm = ((0.95 * sr / 2.0) / (f0 * (1.0 + vib_depth))).floor() as usize;
    let amps: Vec<f64> = (1..=n_harm).map(|k| envelope(label, k as f64 * f0, k)).collect();
    let norm: f64 = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
    let jitter = Normal::new(0.0, phase_jitter(label).max(f64::MIN_POSITIVE)).expect("valid sd");
    let noise = Normal::new(0.0, noise_sd).expect("valid sd");
    let locked = phase_jitter(label) == 0.0;
    let mut drift: Vec<f64> = (0..n_harm).map(|_| rng.random_range(-PI..PI)).collect();
    if locked {
        drift.fill(0.0);
    }
    let mut base = 0.0;
    let mut samples = Vec::with_capacity(n);
    for t in 0..n {
        let time = t as f64 / sr;
        let f = f0 * (1.0 + vib_depth * (2.0 * PI * vib_rate * time).sin());
        base += 2.0 * PI * f / sr;
        let mut v = 0.0;
        for (k, (a, d)) in amps.iter().zip(drift.iter_mut()).enumerate() {
            if !locked {
                *d += jitter.sample(&mut rng);
            }
            v += a * ((k + 1) as f64 * base + *d).sin();
        }
        let syllable = 0.6 + 0.4 * (2.0 * PI * syllable_rate * time).sin();
        samples.push(gain * syllable * v / norm + noise.sample(&mut rng));
    }
    // aligned harmonics can exceed full scale; peak-normalize to the gain
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        samples.iter_mut().for_each(|v| *v *= gain / peak);
    }
    AudioClip::mono(samples, cfg.sample_rate, format!("synth_{index:04}"))
}

/// The whole corpus in memory, labels from [`synth_label`].
pub fn synth_corpus(cfg: &SynthConfig) -> Vec<SynthClip> {
    (0..cfg.n_clips)
        .map(|i| {
            let label = synth_label(i, cfg.classes);
            SynthClip {
                clip: synth_clip(label, i, cfg),
                label,
            }
        })
        .collect()
}

/// Writes `synth_NNNN.wav` files (16-bit PCM) plus `manifest.csv` into
/// `dir` and returns the manifest path.
pub fn write_corpus(dir: &Path, cfg: &SynthConfig) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::from("# path,label\n");
    for i in 0..cfg.n_clips {
        let label = synth_label(i, cfg.classes);
        let clip = synth_clip(label, i, cfg);
        let name = format!("{}.wav", clip.source_id());
        fs::write(dir.join(&name), encode_wav_pcm16(&clip))?;
        manifest.push_str(&format!("{name},{label}\n"));
    }
    let path = dir.join("manifest.csv");
    fs::write(&path, manifest)?;
    Ok(path)
}
