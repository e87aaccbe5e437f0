//! Statistical summaries of the bicoherence grids and cepstral matrices,
//! assembled into a 14-value vector plus class label.

use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audio_io::{AudioClip, ClassLabel};
use crate::bispectral::{self, BispectralConfig, BispectralError};
use crate::cepstral::{self, CepstralMatrix, MfccConfig};
use crate::spectral::{MelConfig, SpectralError, StftConfig, Window};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("clip too short: {0}")]
    TooShort(String),
    #[error("clip must be mono, got {0} channels")]
    NotMono(u16),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Bispectral(#[from] BispectralError),
    #[error("non-finite feature value in `{0}`")]
    NonFinite(&'static str),
    #[error("feature table: {0}")]
    Table(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

/// Population moments. Skewness and kurtosis are 0 when the variance is 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Moments {
        assert!(!values.is_empty(), "moments of an empty sequence");
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &v in values {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        let variance = m2 / n;
        if variance <= 0.0 {
            return Moments {
                mean,
                variance: 0.0,
                skewness: 0.0,
                kurtosis: 0.0,
            };
        }
        let sd = variance.sqrt();
        Moments {
            mean,
            variance,
            skewness: m3 / n / (variance * sd),
            kurtosis: m4 / n / (variance * variance),
        }
    }
}

/// Mean and population variance over every cell of a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanVar {
    pub mean: f64,
    pub variance: f64,
}

impl MeanVar {
    pub fn of(values: &[f64]) -> MeanVar {
        let m = Moments::of(values);
        MeanVar {
            mean: m.mean,
            variance: m.variance,
        }
    }
}

pub const N_FEATURES: usize = 14;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "bm_mean", "bm_var", "bm_skew", "bm_kurt", "bp_mean", "bp_var", "bp_skew", "bp_kurt",
    "mfcc_mean", "mfcc_var", "d_mean", "d_var", "d2_mean", "d2_var",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub bico_mag: Moments,
    pub bico_phase: Moments,
    pub mfcc: MeanVar,
    pub delta: MeanVar,
    pub delta2: MeanVar,
    pub label: ClassLabel,
}

impl FeatureVector {
    /// Numeric entries in CSV column order.
    pub fn values(&self) -> [f64; N_FEATURES] {
        let (m, p) = (&self.bico_mag, &self.bico_phase);
        [
            m.mean,
            m.variance,
            m.skewness,
            m.kurtosis,
            p.mean,
            p.variance,
            p.skewness,
            p.kurtosis,
            self.mfcc.mean,
            self.mfcc.variance,
            self.delta.mean,
            self.delta.variance,
            self.delta2.mean,
            self.delta2.variance,
        ]
    }

    pub fn from_values(v: [f64; N_FEATURES], label: ClassLabel) -> FeatureVector {
        let moments = |o: usize| Moments {
            mean: v[o],
            variance: v[o + 1],
            skewness: v[o + 2],
            kurtosis: v[o + 3],
        };
        let mv = |o: usize| MeanVar {
            mean: v[o],
            variance: v[o + 1],
        };
        FeatureVector {
            bico_mag: moments(0),
            bico_phase: moments(4),
            mfcc: mv(8),
            delta: mv(10),
            delta2: mv(12),
            label,
        }
    }
}

/// Everything that determines feature geometry. Frame timings are in
/// milliseconds and resolved against each clip's own sample rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub bispectral: BispectralConfig,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub window: Window,
    pub n_filters: usize,
    pub n_coeffs: usize,
    pub f_min: f64,
    pub f_max: Option<f64>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            bispectral: BispectralConfig::default(),
            frame_ms: 25.0,
            hop_ms: 10.0,
            window: Window::Hann,
            n_filters: 26,
            n_coeffs: 13,
            f_min: 0.0,
            f_max: None,
        }
    }
}

impl FeatureConfig {
    pub fn mel_config(&self, sample_rate: u32) -> MelConfig {
        let samples = |ms: f64| ((sample_rate as f64 * ms / 1000.0).round() as usize).max(1);
        MelConfig {
            stft: StftConfig {
                frame_len: samples(self.frame_ms),
                hop: samples(self.hop_ms),
                window: self.window,
            },
            n_filters: self.n_filters,
            f_min: self.f_min,
            f_max: self.f_max,
        }
    }

    pub fn mfcc_config(&self, sample_rate: u32) -> MfccConfig {
        MfccConfig {
            mel: self.mel_config(sample_rate),
            n_coeffs: self.n_coeffs,
        }
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("feature config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Bicoherence moments on the normalized grids, plus scalar mean and
/// variance of the MFCC, Δ and Δ² matrices.
pub fn extract_feature_vector(
    clip: &AudioClip,
    label: ClassLabel,
    cfg: &FeatureConfig,
) -> Result<FeatureVector> {
    if clip.channels() != 1 {
        return Err(FeatureError::NotMono(clip.channels()));
    }
    let needed = cfg.bispectral.min_samples();
    if clip.frames() < needed {
        return Err(FeatureError::TooShort(format!(
            "{} samples, bispectral analysis needs {needed}",
            clip.frames()
        )));
    }
    let grid = bispectral::bicoherence(clip.samples(), &cfg.bispectral)?;
    let mfcc = cepstral::mfcc(clip, &cfg.mfcc_config(clip.sample_rate())).map_err(|e| match e {
        SpectralError::EmptyResult(msg) => FeatureError::TooShort(msg),
        other => other.into(),
    })?;
    let delta = cepstral::delta(&mfcc);
    let delta2 = cepstral::delta(&delta);
    let stats = |m: &CepstralMatrix| MeanVar::of(&m.values);
    let fv = FeatureVector {
        bico_mag: Moments::of(&grid.magnitude),
        bico_phase: Moments::of(&grid.phase),
        mfcc: stats(&mfcc),
        delta: stats(&delta),
        delta2: stats(&delta2),
        label,
    };
    if let Some(i) = fv.values().iter().position(|v| !v.is_finite()) {
        return Err(FeatureError::NonFinite(FEATURE_NAMES[i]));
    }
    Ok(fv)
}

/// Column groups used for per-feature and combined experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubset {
    BicoMag,
    BicoPhase,
    Mfcc,
    Delta,
    Delta2,
    BicoAll,
    CepstralAll,
    All,
}

impl FeatureSubset {
    pub const ALL_SUBSETS: [FeatureSubset; 8] = [
        FeatureSubset::BicoMag,
        FeatureSubset::BicoPhase,
        FeatureSubset::Mfcc,
        FeatureSubset::Delta,
        FeatureSubset::Delta2,
        FeatureSubset::BicoAll,
        FeatureSubset::CepstralAll,
        FeatureSubset::All,
    ];

    /// Indices into [`FEATURE_NAMES`].
    pub fn columns(self) -> &'static [usize] {
        const ALL: [usize; N_FEATURES] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13];
        match self {
            FeatureSubset::BicoMag => &ALL[0..4],
            FeatureSubset::BicoPhase => &ALL[4..8],
            FeatureSubset::Mfcc => &ALL[8..10],
            FeatureSubset::Delta => &ALL[10..12],
            FeatureSubset::Delta2 => &ALL[12..14],
            FeatureSubset::BicoAll => &ALL[0..8],
            FeatureSubset::CepstralAll => &ALL[8..14],
            FeatureSubset::All => &ALL,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSubset::BicoMag => "bico_mag",
            FeatureSubset::BicoPhase => "bico_phase",
            FeatureSubset::Mfcc => "mfcc",
            FeatureSubset::Delta => "delta",
            FeatureSubset::Delta2 => "delta2",
            FeatureSubset::BicoAll => "bico_all",
            FeatureSubset::CepstralAll => "cepstral_all",
            FeatureSubset::All => "all",
        }
    }

    /// Picks this subset's columns out of a full 14-value row.
    pub fn project(self, full: &[f64; N_FEATURES]) -> Vec<f64> {
        self.columns().iter().map(|&c| full[c]).collect()
    }
}

impl fmt::Display for FeatureSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSubset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        FeatureSubset::ALL_SUBSETS
            .into_iter()
            .find(|sub| sub.as_str() == s.trim())
            .ok_or_else(|| format!("unknown feature subset `{s}`"))
    }
}

/// Labelled feature rows with an active column subset. Rows always keep
/// all 14 values; the subset only restricts what [`FeatureTable::matrix`]
/// exposes.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub rows: Vec<FeatureVector>,
    pub subset: FeatureSubset,
}

const CSV_MAGIC: &str = "# speechprint-features v1";

impl FeatureTable {
    pub fn new(rows: Vec<FeatureVector>) -> Self {
        Self {
            rows,
            subset: FeatureSubset::All,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_columns(&self) -> usize {
        self.subset.columns().len()
    }

    pub fn select_subset(&self, subset: FeatureSubset) -> FeatureTable {
        FeatureTable {
            rows: self.rows.clone(),
            subset,
        }
    }

    /// Row-major values restricted to the active subset.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| self.subset.project(&r.values()))
            .collect()
    }

    pub fn labels(&self) -> Vec<ClassLabel> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn column_names(&self) -> Vec<&'static str> {
        self.subset
            .columns()
            .iter()
            .map(|&c| FEATURE_NAMES[c])
            .collect()
    }

    /// Writes a `#` provenance line, the fixed header, then one row per
    /// vector. Floats use the shortest representation that round-trips.
    pub fn write_csv<W: Write>(&self, mut out: W, config_hash: Option<&str>) -> Result<()> {
        match config_hash {
            Some(h) => writeln!(out, "{CSV_MAGIC} config_hash={h}")?,
            None => writeln!(out, "{CSV_MAGIC}")?,
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = FEATURE_NAMES.to_vec();
        header.push("label");
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec: Vec<String> = row.values().iter().map(|v| v.to_string()).collect();
            rec.push(row.label.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table written by [`FeatureTable::write_csv`], returning the
    /// embedded config hash when present.
    pub fn read_csv<R: BufRead>(mut input: R) -> Result<(FeatureTable, Option<String>)> {
        let mut preamble = String::new();
        let mut hash = None;
        let mut header_line = String::new();
        loop {
            preamble.clear();
            if input.read_line(&mut preamble)? == 0 {
                return Err(FeatureError::Table("missing header".into()));
            }
            let line = preamble.trim();
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(h) = rest.split_whitespace().find_map(|t| t.strip_prefix("config_hash=")) {
                    hash = Some(h.to_string());
                }
                continue;
            }
            if !line.is_empty() {
                header_line.push_str(&preamble);
                break;
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .has_headers(true)
            .from_reader(header_line.as_bytes().chain(input));
        let headers = reader.headers()?.clone();
        let expected: Vec<&str> = FEATURE_NAMES.iter().copied().chain(["label"]).collect();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(FeatureError::Table(format!(
                "unexpected header `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let mut values = [0.0f64; N_FEATURES];
            for (c, v) in values.iter_mut().enumerate() {
                *v = rec[c].trim().parse().map_err(|_| {
                    FeatureError::Table(format!("row {}: bad number `{}`", i + 1, &rec[c]))
                })?;
                if !v.is_finite() {
                    return Err(FeatureError::NonFinite(FEATURE_NAMES[c]));
                }
            }
            let label = rec[N_FEATURES]
                .parse::<ClassLabel>()
                .map_err(|e| FeatureError::Table(format!("row {}: {e}", i + 1)))?;
            rows.push(FeatureVector::from_values(values, label));
        }
        Ok((FeatureTable::new(rows), hash))
    }
}
