//! MFCC extraction and first/second temporal differences.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio_io::AudioClip;
use crate::spectral::{self, MelConfig, SpectralError, LOG_FLOOR};

/// Orthonormal DCT-II of a fixed length, computed through an `N`-point FFT
/// of the even/odd reordered input.
#[derive(Clone)]
pub struct DctPlan {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    twiddles: Vec<Complex64>,
}

impl DctPlan {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "DCT length must be at least 1");
        let twiddles = (0..n)
            .map(|k| Complex64::from_polar(1.0, -PI * k as f64 / (2.0 * n as f64)))
            .collect();
        Self {
            n,
            fft: FftPlanner::new().plan_fft_forward(n),
            twiddles,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let n = self.n;
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        for (i, &xi) in x.iter().enumerate() {
            let slot = if i % 2 == 0 { i / 2 } else { n - 1 - i / 2 };
            v[slot] = Complex64::new(xi, 0.0);
        }
        self.fft.process(&mut v);
        let s0 = (1.0 / n as f64).sqrt();
        let sk = (2.0 / n as f64).sqrt();
        v.iter()
            .zip(&self.twiddles)
            .enumerate()
            .map(|(k, (vk, tw))| (vk * tw).re * if k == 0 { s0 } else { sk })
            .collect()
    }
}

/// `c[k] = s_k Σ x[n] cos(πk(n + ½)/N)` with `s_0 = √(1/N)`, `s_k = √(2/N)`.
pub fn dct_ii(x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    DctPlan::new(x.len()).transform(x)
}

/// Inverse of [`dct_ii`] (orthonormal DCT-III).
pub fn dct_iii(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let s0 = (1.0 / n as f64).sqrt();
    let sk = (2.0 / n as f64).sqrt();
    (0..n)
        .map(|i| {
            c.iter()
                .enumerate()
                .map(|(k, &ck)| {
                    let s = if k == 0 { s0 } else { sk };
                    s * ck * (PI * k as f64 * (i as f64 + 0.5) / n as f64).cos()
                })
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CepstralKind {
    Mfcc,
    Delta,
    Delta2,
}

/// Frames × coefficients, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CepstralMatrix {
    pub values: Vec<f64>,
    pub n_frames: usize,
    pub n_coeffs: usize,
    pub kind: CepstralKind,
}

impl CepstralMatrix {
    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_coeffs..(t + 1) * self.n_coeffs]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_coeffs)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(f64::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub mel: MelConfig,
    pub n_coeffs: usize,
}

impl MfccConfig {
    /// 25 ms frames, 10 ms hop, 26 filters, 13 coefficients (c0 kept).
    pub fn speech_default(sample_rate: u32) -> Self {
        Self {
            mel: MelConfig::speech_default(sample_rate),
            n_coeffs: 13,
        }
    }
}

/// Per frame: window, power spectrum, mel filterbank, natural log, DCT-II,
/// first `n_coeffs` coefficients.
pub fn mfcc(clip: &AudioClip, cfg: &MfccConfig) -> Result<CepstralMatrix, SpectralError> {
    if cfg.n_coeffs == 0 || cfg.n_coeffs > cfg.mel.n_filters {
        return Err(SpectralError::Config(format!(
            "n_coeffs {} must lie in 1..={}",
            cfg.n_coeffs, cfg.mel.n_filters
        )));
    }
    let fb = cfg.mel.filterbank(clip.sample_rate())?;
    let power = spectral::stft(clip, &cfg.mel.stft)?;
    let dct = DctPlan::new(fb.n_filters);
    let mut energies = vec![0.0; fb.n_filters];
    let mut values = Vec::with_capacity(power.n_frames * cfg.n_coeffs);
    for frame in power.frames() {
        fb.apply_into(frame, &mut energies);
        for e in &mut energies {
            *e = (*e + LOG_FLOOR).ln();
        }
        values.extend_from_slice(&dct.transform(&energies)[..cfg.n_coeffs]);
    }
    Ok(CepstralMatrix {
        values,
        n_frames: power.n_frames,
        n_coeffs: cfg.n_coeffs,
        kind: CepstralKind::Mfcc,
    })
}

/// First difference along time: `d[t] = c[t] − c[t−1]`, `d[0] = 0`.
///
/// MFCC → Δ → Δ²; differencing a Δ² matrix again keeps the Δ² tag.
pub fn delta(mat: &CepstralMatrix) -> CepstralMatrix {
    let c = mat.n_coeffs;
    let mut values = vec![0.0; mat.values.len()];
    for t in 1..mat.n_frames {
        for j in 0..c {
            values[t * c + j] = mat.values[t * c + j] - mat.values[(t - 1) * c + j];
        }
    }
    CepstralMatrix {
        values,
        n_frames: mat.n_frames,
        n_coeffs: c,
        kind: match mat.kind {
            CepstralKind::Mfcc => CepstralKind::Delta,
            CepstralKind::Delta | CepstralKind::Delta2 => CepstralKind::Delta2,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_dct(x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        (0..x.len())
            .map(|k| {
                let s: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * (PI * k as f64 * (i as f64 + 0.5) / n).cos())
                    .sum();
                s * if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() }
            })
            .collect()
    }

    fn matrix(rows: Vec<Vec<f64>>, kind: CepstralKind) -> CepstralMatrix {
        let n_coeffs = rows[0].len();
        CepstralMatrix {
            n_frames: rows.len(),
            n_coeffs,
            values: rows.concat(),
            kind,
        }
    }

    #[test]
    fn dct_of_constant_and_zero() {
        let c = dct_ii(&[1.0; 4]);
        assert!((c[0] - 2.0).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
        assert_eq!(dct_ii(&[0.0; 6]), vec![0.0; 6]);
    }

    #[test]
    fn dct_matches_naive_on_a_fixed_vector() {
        let x = [0.3, -1.2, 2.5, 0.0, 4.4, -0.7, 1.1, 0.9];
        for (a, b) in dct_ii(&x).iter().zip(naive_dct(&x)) {
            assert!((a - b).abs() < 1e-9);
        }
        // odd length exercises the reordering
        let x = [1.0, 2.0, -3.0, 0.5, 7.0];
        for (a, b) in dct_ii(&x).iter().zip(naive_dct(&x)) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn silence_frames_are_identical() {
        let clip = AudioClip::mono(vec![0.0; 4000], 8000, "s");
        let m = mfcc(&clip, &MfccConfig::speech_default(8000)).unwrap();
        let first = m.row(0).to_vec();
        assert!(m.rows().all(|r| r == first.as_slice()));
        let expected = dct_ii(&[LOG_FLOOR.ln(); 26]);
        for (a, b) in first.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn shifting_by_one_hop_shifts_rows() {
        let cfg = MfccConfig::speech_default(8000);
        let hop = cfg.mel.stft.hop;
        let samples: Vec<f64> = (0..6000)
            .map(|t| 0.4 * (2.0 * PI * 330.0 * t as f64 / 8000.0).sin())
            .collect();
        let a = mfcc(&AudioClip::mono(samples.clone(), 8000, "a"), &cfg).unwrap();
        let b = mfcc(&AudioClip::mono(samples[hop..].to_vec(), 8000, "b"), &cfg).unwrap();
        assert_eq!(b.n_frames, a.n_frames - 1);
        for t in 0..b.n_frames {
            for (x, y) in a.row(t + 1).iter().zip(b.row(t)) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gain_only_moves_c0() {
        let cfg = MfccConfig::speech_default(8000);
        let mut state = 7u64;
        let samples: Vec<f64> = (0..4000)
            .map(|t| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let noise = ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
                0.3 * (2.0 * PI * 500.0 * t as f64 / 8000.0).sin() + 0.1 * noise
            })
            .collect();
        let scaled: Vec<f64> = samples.iter().map(|x| 1.5 * x).collect();
        let a = mfcc(&AudioClip::mono(samples, 8000, "a"), &cfg).unwrap();
        let b = mfcc(&AudioClip::mono(scaled, 8000, "b"), &cfg).unwrap();
        let c0_shift = 2.0 * 1.5f64.ln() * (26f64).sqrt();
        for t in 0..a.n_frames {
            assert!((b.row(t)[0] - a.row(t)[0] - c0_shift).abs() < 1e-6);
            for j in 1..a.n_coeffs {
                assert!((a.row(t)[j] - b.row(t)[j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn mfcc_rejects_bad_coefficient_counts() {
        let clip = AudioClip::mono(vec![0.0; 4000], 8000, "s");
        let mut cfg = MfccConfig::speech_default(8000);
        cfg.n_coeffs = 27;
        assert!(mfcc(&clip, &cfg).is_err());
        cfg.n_coeffs = 13;
        let short = AudioClip::mono(vec![0.0; 10], 8000, "s");
        assert!(matches!(
            mfcc(&short, &cfg),
            Err(SpectralError::EmptyResult(_))
        ));
    }

    #[test]
    fn delta_cases() {
        let constant = matrix(vec![vec![1.5, -2.0]; 5], CepstralKind::Mfcc);
        let d = delta(&constant);
        assert_eq!(d.kind, CepstralKind::Delta);
        assert!(d.values.iter().all(|&v| v == 0.0));

        let u = [1.0, -2.0, 0.5];
        let ramp = matrix(
            (0..4).map(|t| u.iter().map(|x| x * t as f64).collect()).collect(),
            CepstralKind::Mfcc,
        );
        let d = delta(&ramp);
        assert_eq!(d.row(0), &[0.0, 0.0, 0.0]);
        for t in 1..4 {
            assert_eq!(d.row(t), &u);
        }
        let d2 = delta(&d);
        assert_eq!(d2.kind, CepstralKind::Delta2);
        assert_eq!(d2.row(1), &u);
        for t in 2..4 {
            assert!(d2.row(t).iter().all(|&v| v == 0.0));
        }
    }

    proptest! {
        #[test]
        fn dct_round_trips(x in proptest::collection::vec(-10.0f64..10.0, 1..64)) {
            let back = dct_iii(&dct_ii(&x));
            for (a, b) in x.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn delta_is_linear_and_telescopes(
            a in proptest::collection::vec(-5i32..5, 12),
            b in proptest::collection::vec(-5i32..5, 12),
        ) {
            let to_rows = |v: &[i32]| v.chunks(3).map(|r| r.iter().map(|&x| x as f64).collect()).collect::<Vec<Vec<f64>>>();
            let ma = matrix(to_rows(&a), CepstralKind::Mfcc);
            let mb = matrix(to_rows(&b), CepstralKind::Mfcc);
            let sum = CepstralMatrix {
                values: ma.values.iter().zip(&mb.values).map(|(x, y)| x + y).collect(),
                ..ma.clone()
            };
            let (da, db, ds) = (delta(&ma), delta(&mb), delta(&sum));
            for i in 0..ds.values.len() {
                prop_assert_eq!(ds.values[i], da.values[i] + db.values[i]);
            }
            for j in 0..3 {
                let col: f64 = da.rows().map(|r| r[j]).sum();
                prop_assert_eq!(col, ma.row(3)[j] - ma.row(0)[j]);
            }
        }
    }
}
