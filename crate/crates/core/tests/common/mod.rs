//! Independent reference implementations used by the integration tests.
//! Everything here is deliberately naive.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::io::Write;

use rustfft::num_complex::Complex64;
use speechprint::crnn::{Mode, Network, Tensor};

/// Compensated (Neumaier) summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// O(n²) DFT with exact integer reduction of the twiddle angle.
pub fn naive_dft(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, &xj) in x.iter().enumerate() {
                let angle = -2.0 * PI * ((j * k) % n) as f64 / n as f64;
                acc += Complex64::from_polar(xj, angle);
            }
            acc
        })
        .collect()
}

/// O(n²) orthonormal DCT-II.
pub fn naive_dct_ii(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            scale
                * neumaier_sum(
                    x.iter()
                        .enumerate()
                        .map(|(i, &v)| v * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos()),
                )
        })
        .collect()
}

/// Two-pass population moments with compensated sums:
/// `(mean, variance, skewness, kurtosis)`.
pub fn moments_oracle(x: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mean = neumaier_sum(x.iter().copied()) / n;
    let central = |p: i32| neumaier_sum(x.iter().map(|v| (v - mean).powi(p))) / n;
    let var = central(2);
    if var == 0.0 {
        return (mean, 0.0, 0.0, 0.0);
    }
    (mean, var, central(3) / var.powf(1.5), central(4) / (var * var))
}

/// `|Σ B| / Σ |B|` over per-segment bispectrum values of one cell: the
/// magnitude of the averaged unit phasor, weighted by segment magnitude.
pub fn normalized_bicoherence(cell_values: &[Complex64]) -> f64 {
    let num: Complex64 = cell_values.iter().sum();
    let den = neumaier_sum(cell_values.iter().map(|c| c.norm()));
    if den == 0.0 {
        0.0
    } else {
        num.norm() / den
    }
}

pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub const FD_FLOOR: f64 = 1e-8;

/// Largest relative error between backprop and central differences with
/// step `eps` over the listed flat parameter indices.
pub fn max_param_error(net: &mut Network, batch: &Tensor, labels: &[usize], mode: Mode, idx: &[usize], eps: f64) -> f64 {
    let pass = net.forward(batch, mode).unwrap();
    let grads = net.backward(&pass, labels).unwrap();
    let analytic: Vec<f64> = grads.params.iter().flatten().flatten().copied().collect();
    let mut worst: f64 = 0.0;
    for &n in idx {
        let orig = *net.param_mut(n);
        *net.param_mut(n) = orig + eps;
        let up = Network::loss(&net.forward(batch, mode).unwrap(), labels);
        *net.param_mut(n) = orig - eps;
        let down = Network::loss(&net.forward(batch, mode).unwrap(), labels);
        *net.param_mut(n) = orig;
        worst = worst.max(rel_err(analytic[n], (up - down) / (2.0 * eps), FD_FLOOR));
    }
    worst
}

/// Prints one result line straight to stderr so it shows even when test
/// output is captured.
pub fn report(id: u32, title: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{status}] criterion {id:>2} {title}: {detail}");
}
