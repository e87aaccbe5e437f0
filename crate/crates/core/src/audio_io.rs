//! Audio decoding, channel handling, duration trimming and dataset manifests.
//!
//! Only RIFF/WAVE with 16-bit integer PCM or 32-bit IEEE float payloads is
//! understood. Samples are held as `f64` in `[-1, 1]`, interleaved when the
//! clip has more than one channel.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV data: {0}")]
    Decode(String),
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("no segments produced: {0}")]
    EmptyResult(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AudioError>;

/// An immutable block of PCM audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
    channels: u16,
    source_id: String,
}

impl AudioClip {
    /// Builds a mono clip. Amplitudes outside `[-1, 1]` are clamped.
    pub fn mono(samples: Vec<f64>, sample_rate: u32, source_id: impl Into<String>) -> Self {
        Self::from_interleaved(samples, sample_rate, 1, source_id)
    }

    pub fn from_interleaved(
        mut samples: Vec<f64>,
        sample_rate: u32,
        channels: u16,
        source_id: impl Into<String>,
    ) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        assert!(channels > 0, "channel count must be positive");
        for s in &mut samples {
            *s = s.clamp(-1.0, 1.0);
        }
        Self {
            samples,
            sample_rate,
            channels,
            source_id: source_id.into(),
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> u16 {
        self.channels
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    /// Number of sample frames (samples per channel).
    pub fn frames(&self) -> usize {
        self.samples.len() / self.channels as usize
    }

    pub fn duration_secs(&self) -> f64 {
        self.frames() as f64 / self.sample_rate as f64
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn with_source_id(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }
}

/// Speech source. `Human` is genuine speech; the rest are synthesis engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    Human,
    NaturalReader,
    SpikAI,
    Replica,
}

/// Human vs. synthetic projection of [`ClassLabel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryLabel {
    Human,
    Synthetic,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 4] = [
        ClassLabel::Human,
        ClassLabel::NaturalReader,
        ClassLabel::SpikAI,
        ClassLabel::Replica,
    ];

    pub fn binary(self) -> BinaryLabel {
        match self {
            ClassLabel::Human => BinaryLabel::Human,
            _ => BinaryLabel::Synthetic,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Human => "Human",
            ClassLabel::NaturalReader => "NaturalReader",
            ClassLabel::SpikAI => "SpikAI",
            ClassLabel::Replica => "Replica",
        }
    }

    /// Position in [`ClassLabel::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

impl BinaryLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BinaryLabel::Human => "Human",
            BinaryLabel::Synthetic => "Synthetic",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown class label `{0}`")]
pub struct ParseLabelError(pub String);

impl FromStr for ClassLabel {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .chars()
            .filter(|c| !matches!(c, ' ' | '.' | '_' | '-'))
            .flat_map(char::to_lowercase)
            .collect();
        match key.as_str() {
            "human" => Ok(ClassLabel::Human),
            "naturalreader" => Ok(ClassLabel::NaturalReader),
            "spikai" => Ok(ClassLabel::SpikAI),
            "replica" | "replicaai" => Ok(ClassLabel::Replica),
            _ => Err(ParseLabelError(s.trim().to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitHint {
    Train,
    Val,
    Test,
}

impl FromStr for SplitHint {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(SplitHint::Train),
            "val" | "validation" => Ok(SplitHint::Val),
            "test" => Ok(SplitHint::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: ClassLabel,
    pub split_hint: Option<SplitHint>,
}

const WAVE_FORMAT_PCM: u16 = 1;
const WAVE_FORMAT_IEEE_FLOAT: u16 = 3;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

struct FmtChunk {
    format: u16,
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
}

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk> {
    if body.len() < 16 {
        return Err(AudioError::Decode("fmt chunk shorter than 16 bytes".into()));
    }
    let mut format = read_u16(body, 0);
    let channels = read_u16(body, 2);
    let sample_rate = read_u32(body, 4);
    let bits_per_sample = read_u16(body, 14);
    if format == WAVE_FORMAT_EXTENSIBLE {
        if body.len() < 26 {
            return Err(AudioError::Decode("truncated WAVE_FORMAT_EXTENSIBLE".into()));
        }
        // first two bytes of the subformat GUID carry the actual format tag
        format = read_u16(body, 24);
    }
    if channels == 0 {
        return Err(AudioError::Decode("zero channels".into()));
    }
    if sample_rate == 0 {
        return Err(AudioError::Decode("zero sample rate".into()));
    }
    Ok(FmtChunk {
        format,
        channels,
        sample_rate,
        bits_per_sample,
    })
}

/// Decodes a RIFF/WAVE byte buffer into a clip with samples in `[-1, 1]`.
///
/// Multi-channel audio stays interleaved; see [`to_mono`].
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::Decode("missing RIFF/WAVE header".into()));
    }
    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let start = pos + 8;
        let end = start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                AudioError::Decode(format!(
                    "chunk `{}` overruns the buffer",
                    String::from_utf8_lossy(id)
                ))
            })?;
        match id {
            b"fmt " => fmt = Some(parse_fmt(&bytes[start..end])?),
            b"data" => data = Some(&bytes[start..end]),
            _ => {}
        }
        // chunks are word aligned
        pos = end + (size & 1);
    }
    let fmt = fmt.ok_or_else(|| AudioError::Decode("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| AudioError::Decode("missing data chunk".into()))?;
    if data.is_empty() {
        return Err(AudioError::Decode("empty data chunk".into()));
    }

    let samples: Vec<f64> = match (fmt.format, fmt.bits_per_sample) {
        (WAVE_FORMAT_PCM, 16) => {
            if data.len() % 2 != 0 {
                return Err(AudioError::Decode("odd-length 16-bit data chunk".into()));
            }
            data.chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
                .collect()
        }
        (WAVE_FORMAT_IEEE_FLOAT, 32) => {
            if data.len() % 4 != 0 {
                return Err(AudioError::Decode("misaligned float data chunk".into()));
            }
            let mut out = Vec::with_capacity(data.len() / 4);
            for c in data.chunks_exact(4) {
                let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                if !v.is_finite() {
                    return Err(AudioError::Decode("non-finite float sample".into()));
                }
                out.push(v as f64);
            }
            out
        }
        (format, bits) => {
            return Err(AudioError::UnsupportedFormat(format!(
                "format tag {format} with {bits} bits per sample"
            )))
        }
    };
    if samples.len() % fmt.channels as usize != 0 {
        return Err(AudioError::Decode(
            "sample count is not a multiple of the channel count".into(),
        ));
    }
    Ok(AudioClip::from_interleaved(
        samples,
        fmt.sample_rate,
        fmt.channels,
        String::new(),
    ))
}

/// Reads and decodes a WAV file; the clip's source id is the path.
pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let bytes = std::fs::read(path)?;
    Ok(decode_wav(&bytes)?.with_source_id(path.display().to_string()))
}

fn wav_header(out: &mut Vec<u8>, format: u16, channels: u16, rate: u32, bits: u16, data_len: usize) {
    let block_align = channels * (bits / 8);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&format.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * block_align as u32).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
}

/// Encodes a clip as 16-bit PCM. Samples are rounded to the nearest step of
/// 1/32768 and saturate at the integer range.
pub fn encode_wav_pcm16(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    wav_header(&mut out, WAVE_FORMAT_PCM, clip.channels, clip.sample_rate, 16, data_len);
    for &s in &clip.samples {
        let v = (s * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn encode_wav_f32(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.samples.len() * 4;
    let mut out = Vec::with_capacity(44 + data_len);
    wav_header(
        &mut out,
        WAVE_FORMAT_IEEE_FLOAT,
        clip.channels,
        clip.sample_rate,
        32,
        data_len,
    );
    for &s in &clip.samples {
        out.extend_from_slice(&(s as f32).to_le_bytes());
    }
    out
}

/// Downmixes stereo to mono with an equal-weight mean. Mono passes through.
pub fn to_mono(clip: AudioClip) -> Result<AudioClip> {
    match clip.channels {
        1 => Ok(clip),
        2 => {
            let samples = clip
                .samples
                .chunks_exact(2)
                .map(|p| 0.5 * (p[0] + p[1]))
                .collect();
            Ok(AudioClip {
                samples,
                sample_rate: clip.sample_rate,
                channels: 1,
                source_id: clip.source_id,
            })
        }
        n => Err(AudioError::UnsupportedFormat(format!(
            "{n} channels (only mono and stereo are supported)"
        ))),
    }
}

/// Cuts a mono clip into consecutive segments of `max_s` seconds.
///
/// A trailing remainder is kept when it lasts at least `min_s` seconds and
/// dropped otherwise.
pub fn trim_segments(clip: &AudioClip, min_s: f64, max_s: f64) -> Result<Vec<AudioClip>> {
    if !(min_s > 0.0 && min_s <= max_s && max_s.is_finite()) {
        return Err(AudioError::Config(format!(
            "invalid trim range [{min_s}, {max_s}]"
        )));
    }
    if clip.channels != 1 {
        return Err(AudioError::UnsupportedFormat(
            "trim_segments expects a mono clip".into(),
        ));
    }
    let rate = clip.sample_rate as f64;
    let seg_len = (max_s * rate).round() as usize;
    let min_len = (min_s * rate).round() as usize;
    if seg_len == 0 {
        return Err(AudioError::Config("segment length rounds to zero samples".into()));
    }
    let mut out = Vec::new();
    for (i, chunk) in clip.samples.chunks(seg_len).enumerate() {
        if chunk.len() < min_len {
            break;
        }
        out.push(AudioClip {
            samples: chunk.to_vec(),
            sample_rate: clip.sample_rate,
            channels: 1,
            source_id: format!("{}#{i}", clip.source_id),
        });
    }
    if out.is_empty() {
        return Err(AudioError::EmptyResult(format!(
            "clip lasts {:.3} s, shorter than the {min_s} s minimum",
            clip.duration_secs()
        )));
    }
    Ok(out)
}

/// Parses manifest text: one `path,label[,split]` record per line, `#`
/// comments and blank lines ignored.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(2..=3).contains(&fields.len()) || fields[0].is_empty() {
            return Err(AudioError::Manifest {
                line: line_no,
                message: format!("expected `path,label[,split]`, got `{line}`"),
            });
        }
        let label = fields[1].parse::<ClassLabel>().map_err(|e| AudioError::Manifest {
            line: line_no,
            message: e.to_string(),
        })?;
        let split_hint = match fields.get(2) {
            Some(s) if !s.is_empty() => Some(s.parse::<SplitHint>().map_err(|message| {
                AudioError::Manifest {
                    line: line_no,
                    message,
                }
            })?),
            _ => None,
        };
        entries.push(ManifestEntry {
            path: PathBuf::from(fields[0]),
            label,
            split_hint,
        });
    }
    Ok(entries)
}

/// Reads a manifest file. Relative entry paths are resolved against the
/// manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let mut entries = parse_manifest(&text)?;
    for e in &mut entries {
        if e.path.is_relative() {
            e.path = base.join(&e.path);
        }
    }
    Ok(entries)
}
