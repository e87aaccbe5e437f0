//! Third-order spectral statistics.
//!
//! A clip is cut into `K` equal segments. For each segment with DFT `Y` the
//! triple product `Y[k1]·Y[k2]·conj(Y[k1+k2])` is formed over the first `G`
//! non-negative bins on each axis. Magnitudes `|Y[k1]||Y[k2]||Y[k1+k2]|`
//! and phases `∠Y[k1] + ∠Y[k2] − ∠Y[k1+k2]` are averaged over the
//! segments and then min-max scaled to `[0, 1]`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::DftPlan;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BispectralError {
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, BispectralError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BispectralConfig {
    /// Number of segments averaged.
    pub k_segments: usize,
    /// Frequency bins per grid axis.
    pub grid: usize,
}

impl Default for BispectralConfig {
    fn default() -> Self {
        Self {
            k_segments: 100,
            grid: 64,
        }
    }
}

impl BispectralConfig {
    /// Fewest samples a clip needs for this configuration.
    pub fn min_samples(&self) -> usize {
        self.k_segments * 2 * self.grid
    }
}

/// `G × G` magnitude and phase grids, row index `k1`, column index `k2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BicoherenceGrid {
    pub magnitude: Vec<f64>,
    pub phase: Vec<f64>,
    pub grid_size: usize,
    pub k_segments: usize,
    pub normalized: bool,
}

impl BicoherenceGrid {
    pub fn magnitude_at(&self, k1: usize, k2: usize) -> f64 {
        self.magnitude[k1 * self.grid_size + k2]
    }

    pub fn phase_at(&self, k1: usize, k2: usize) -> f64 {
        self.phase[k1 * self.grid_size + k2]
    }

    /// Min-max scales both grids independently.
    pub fn normalize(&self) -> BicoherenceGrid {
        BicoherenceGrid {
            magnitude: minmax_normalize(&self.magnitude),
            phase: minmax_normalize(&self.phase),
            grid_size: self.grid_size,
            k_segments: self.k_segments,
            normalized: true,
        }
    }
}

/// `K` contiguous segments of `floor(N/K)` samples; the tail is dropped.
pub fn segment_signal(samples: &[f64], k: usize) -> Result<Vec<&[f64]>> {
    if k == 0 {
        return Err(BispectralError::Config("segment count must be ≥ 1".into()));
    }
    if samples.len() < k {
        return Err(BispectralError::Config(format!(
            "{} samples cannot form {k} segments",
            samples.len()
        )));
    }
    let len = samples.len() / k;
    Ok(samples.chunks_exact(len).take(k).collect())
}

fn check_grid(segment_len: usize, grid: usize) -> Result<()> {
    if grid == 0 {
        return Err(BispectralError::Config("grid size must be ≥ 1".into()));
    }
    if segment_len < 2 * grid {
        return Err(BispectralError::Config(format!(
            "grid {grid} needs segments of at least {} samples, got {segment_len}",
            2 * grid
        )));
    }
    Ok(())
}

/// Complex bispectrum of one segment, `G × G` row-major.
pub fn bispectrum_segment(segment: &[f64], grid: usize) -> Result<Vec<Complex64>> {
    check_grid(segment.len(), grid)?;
    let y = DftPlan::new(segment.len()).transform(segment).bins;
    let mut out = Vec::with_capacity(grid * grid);
    for k1 in 0..grid {
        for k2 in 0..grid {
            out.push(y[k1] * y[k2] * y[k1 + k2].conj());
        }
    }
    Ok(out)
}

/// Maps an angle into `(−π, π]`.
pub fn wrap_phase(theta: f64) -> f64 {
    let w = theta.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Segment-averaged magnitude and phase, before normalization.
///
/// Each phase summand is wrapped to `(−π, π]` before averaging.
pub fn bicoherence_average<S: AsRef<[f64]>>(segments: &[S], grid: usize) -> Result<BicoherenceGrid> {
    let first = segments
        .first()
        .ok_or_else(|| BispectralError::Config("no segments to average".into()))?;
    let len = first.as_ref().len();
    if let Some(i) = segments.iter().position(|s| s.as_ref().len() != len) {
        return Err(BispectralError::Config(format!(
            "segment {i} has length {}, expected {len}",
            segments[i].as_ref().len()
        )));
    }
    check_grid(len, grid)?;

    let plan = DftPlan::new(len);
    let span = 2 * grid - 1;
    let mut bins = Vec::with_capacity(len);
    let mut mag = vec![0.0; span];
    let mut ang = vec![0.0; span];
    let mut magnitude = vec![0.0; grid * grid];
    let mut phase = vec![0.0; grid * grid];
    // ordered accumulation keeps the sums bit-stable
    for seg in segments {
        plan.transform_into(seg.as_ref(), &mut bins);
        for k in 0..span {
            mag[k] = bins[k].norm();
            ang[k] = bins[k].arg();
        }
        for k1 in 0..grid {
            let row = k1 * grid;
            for k2 in 0..grid {
                let k3 = k1 + k2;
                magnitude[row + k2] += mag[k1] * mag[k2] * mag[k3];
                phase[row + k2] += wrap_phase(ang[k1] + ang[k2] - ang[k3]);
            }
        }
    }
    let inv = 1.0 / segments.len() as f64;
    magnitude.iter_mut().for_each(|v| *v *= inv);
    phase.iter_mut().for_each(|v| *v *= inv);
    Ok(BicoherenceGrid {
        magnitude,
        phase,
        grid_size: grid,
        k_segments: segments.len(),
        normalized: false,
    })
}

/// `(x − min)/(max − min)`, or all zeros when `max = min`.
pub fn minmax_normalize(values: &[f64]) -> Vec<f64> {
    crate::spectral::minmax_scale(values)
}

/// Segments `samples` and returns the normalized averaged grids.
pub fn bicoherence(samples: &[f64], cfg: &BispectralConfig) -> Result<BicoherenceGrid> {
    let segments = segment_signal(samples, cfg.k_segments)?;
    Ok(bicoherence_average(&segments, cfg.grid)?.normalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn segmentation_arithmetic() {
        let x = vec![0.0; 1000];
        let segs = segment_signal(&x, 100).unwrap();
        assert_eq!(segs.len(), 100);
        assert!(segs.iter().all(|s| s.len() == 10));

        let x: Vec<f64> = (0..1005).map(|i| i as f64).collect();
        let segs = segment_signal(&x, 100).unwrap();
        assert_eq!(segs.len(), 100);
        assert!(segs.iter().all(|s| s.len() == 10));
        assert_eq!(*segs[99].last().unwrap(), 999.0);

        let segs = segment_signal(&x, 1).unwrap();
        assert_eq!(segs, vec![&x[..]]);

        assert!(segment_signal(&x[..5], 10).is_err());
        assert!(segment_signal(&x, 0).is_err());
    }

    #[test]
    fn zero_segment_has_zero_bispectrum() {
        let b = bispectrum_segment(&[0.0; 32], 8).unwrap();
        assert!(b.iter().all(|c| c.norm() == 0.0));
        assert!(matches!(
            bispectrum_segment(&[0.0; 15], 8),
            Err(BispectralError::Config(_))
        ));
    }

    #[test]
    fn identical_segments_average_to_themselves() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let seg: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let single = bicoherence_average(&[seg.clone()], 16).unwrap();
        let many = bicoherence_average(&vec![seg.clone(); 7], 16).unwrap();
        assert_eq!(single.k_segments, 1);
        for (a, b) in single.magnitude.iter().zip(&many.magnitude) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        for (a, b) in single.phase.iter().zip(&many.phase) {
            assert!((a - b).abs() <= 1e-12);
        }
        // K = 1 magnitude is the modulus of the single-segment bispectrum
        let b = bispectrum_segment(&seg, 16).unwrap();
        for (m, c) in single.magnitude.iter().zip(&b) {
            assert!((m - c.norm()).abs() <= 1e-9 * c.norm().max(1.0));
        }
    }

    #[test]
    fn mismatched_segments_rejected() {
        let a = vec![0.0; 32];
        let b = vec![0.0; 31];
        assert!(bicoherence_average(&[a.as_slice(), b.as_slice()], 8).is_err());
    }

    #[test]
    fn coupled_triad_phase_averages_to_zero() {
        // bins 5 and 9 of a 64-sample segment, coupled at bin 14
        let n = 64;
        let k = 100;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (p1, p2): (f64, f64) = (rng.random_range(-PI..PI), rng.random_range(-PI..PI));
        let w = |b: f64| 2.0 * PI * b / n as f64;
        let signal: Vec<f64> = (0..n * k)
            .map(|t| {
                let t = t as f64;
                (w(5.0) * t + p1).cos()
                    + (w(9.0) * t + p2).cos()
                    + (w(14.0) * t + p1 + p2).cos()
                    + 0.05 * rng.random_range(-1.0..1.0)
            })
            .collect();
        let segs = segment_signal(&signal, k).unwrap();
        let grid = bicoherence_average(&segs, 16).unwrap();
        assert!(grid.phase_at(5, 9).abs() < 0.05);
        assert!(grid.phase_at(9, 5).abs() < 0.05);
    }

    #[test]
    fn wrap_phase_range() {
        assert_eq!(wrap_phase(PI), PI);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_phase(0.25), 0.25);
    }

    #[test]
    fn minmax_cases() {
        assert_eq!(minmax_normalize(&[2.0, 4.0, 6.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax_normalize(&[3.0; 5]), vec![0.0; 5]);
        let unit = [0.0, 0.25, 1.0, 0.5];
        assert_eq!(minmax_normalize(&unit), unit.to_vec());
    }

    #[test]
    fn silence_normalizes_to_zero() {
        let grid = bicoherence(&vec![0.0; 12_800], &BispectralConfig::default()).unwrap();
        assert!(grid.magnitude.iter().all(|&v| v == 0.0));
        assert!(grid.phase.iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn bispectrum_is_symmetric(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let seg: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = 12;
            let b = bispectrum_segment(&seg, g).unwrap();
            for k1 in 0..g {
                for k2 in 0..g {
                    let d = b[k1 * g + k2] - b[k2 * g + k1];
                    prop_assert!(d.norm() <= 1e-9 * b[k1 * g + k2].norm().max(1.0));
                }
            }
        }

        #[test]
        fn normalized_grids_in_unit_range(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..2000).map(|_| rng.random_range(-1.0..1.0)).collect();
            let grid = bicoherence(&x, &BispectralConfig { k_segments: 10, grid: 16 }).unwrap();
            prop_assert!(grid.normalized);
            prop_assert!(grid.magnitude.iter().chain(&grid.phase).all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
