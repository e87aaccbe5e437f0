//! Per-sample kernels. Images are `[height, width, channels]` row-major with
//! channels innermost; sequences are `[steps, features]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::spectral::resize_bilinear;

pub(crate) fn resize(input: &[f64], h: usize, w: usize, c: usize, oh: usize, ow: usize) -> Vec<f64> {
    if (h, w) == (oh, ow) {
        return input.to_vec();
    }
    let mut out = vec![0.0; oh * ow * c];
    for ch in 0..c {
        let plane: Vec<f64> = input.iter().skip(ch).step_by(c).copied().collect();
        let resized = resize_bilinear(&plane, h, w, oh, ow);
        for (i, v) in resized.into_iter().enumerate() {
            out[i * c + ch] = v;
        }
    }
    out
}

pub(crate) struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub k: usize,
    pub f: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        self.h - self.k + 1
    }

    pub fn out_w(&self) -> usize {
        self.w - self.k + 1
    }
}

/// Valid 3-D convolution, stride 1. Weights are laid out
/// `[ky][kx][in_channel][filter]`. Returns the pre-activation output.
pub(crate) fn conv_forward(g: &ConvGeom, input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut out = vec![0.0; oh * ow * g.f];
    for oy in 0..oh {
        for ox in 0..ow {
            let acc = &mut out[(oy * ow + ox) * g.f..(oy * ow + ox + 1) * g.f];
            acc.copy_from_slice(bias);
            for ky in 0..g.k {
                for kx in 0..g.k {
                    let in_off = ((oy + ky) * g.w + ox + kx) * g.c;
                    let w_off = (ky * g.k + kx) * g.c * g.f;
                    for ci in 0..g.c {
                        let xv = input[in_off + ci];
                        if xv == 0.0 {
                            continue;
                        }
                        let wrow = &weight[w_off + ci * g.f..w_off + (ci + 1) * g.f];
                        for (a, wv) in acc.iter_mut().zip(wrow) {
                            *a += xv * wv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients; returns the input gradient when
/// `want_input` is set.
pub(crate) fn conv_backward(
    g: &ConvGeom,
    input: &[f64],
    weight: &[f64],
    dz: &[f64],
    d_weight: &mut [f64],
    d_bias: &mut [f64],
    want_input: bool,
) -> Option<Vec<f64>> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut dx = want_input.then(|| vec![0.0; input.len()]);
    for oy in 0..oh {
        for ox in 0..ow {
            let grad = &dz[(oy * ow + ox) * g.f..(oy * ow + ox + 1) * g.f];
            if grad.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (db, gv) in d_bias.iter_mut().zip(grad) {
                *db += gv;
            }
            for ky in 0..g.k {
                for kx in 0..g.k {
                    let in_off = ((oy + ky) * g.w + ox + kx) * g.c;
                    let w_off = (ky * g.k + kx) * g.c * g.f;
                    for ci in 0..g.c {
                        let range = w_off + ci * g.f..w_off + (ci + 1) * g.f;
                        let xv = input[in_off + ci];
                        if xv != 0.0 {
                            for (dw, gv) in d_weight[range.clone()].iter_mut().zip(grad) {
                                *dw += xv * gv;
                            }
                        }
                        if let Some(dx) = dx.as_mut() {
                            dx[in_off + ci] += weight[range].iter().zip(grad).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Non-overlapping max pooling; trailing rows/columns that do not fill a
/// window are dropped. Returns the output and the flat input index that
/// won each window (first maximum on ties).
pub(crate) fn maxpool_forward(input: &[f64], h: usize, w: usize, c: usize, s: usize) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / s, w / s);
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut arg = Vec::with_capacity(oh * ow * c);
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = usize::MAX;
                let mut best_v = f64::NEG_INFINITY;
                for dy in 0..s {
                    for dx in 0..s {
                        let i = ((oy * s + dy) * w + ox * s + dx) * c + ch;
                        if best == usize::MAX || input[i] > best_v {
                            best = i;
                            best_v = input[i];
                        }
                    }
                }
                out.push(best_v);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool_backward(arg: &[usize], d_out: &[f64], input_len: usize) -> Vec<f64> {
    let mut dx = vec![0.0; input_len];
    for (&i, &g) in arg.iter().zip(d_out) {
        dx[i] += g;
    }
    dx
}

/// Inverted-dropout mask: kept units are scaled by `1 / (1 − rate)`.
pub(crate) fn dropout_mask(len: usize, rate: f64, seed: u64, layer: usize, sample: usize) -> Vec<f64> {
    if rate <= 0.0 {
        return vec![1.0; len];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((layer as u64) << 32) | sample as u64);
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

/// `out = W x + b` with `W` laid out `[input][unit]`.
pub(crate) fn dense_forward(input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let units = bias.len();
    let mut out = bias.to_vec();
    for (i, &xv) in input.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        for (o, wv) in out.iter_mut().zip(&weight[i * units..(i + 1) * units]) {
            *o += xv * wv;
        }
    }
    out
}

pub(crate) fn dense_backward(
    input: &[f64],
    weight: &[f64],
    dz: &[f64],
    d_weight: &mut [f64],
    d_bias: &mut [f64],
) -> Vec<f64> {
    let units = dz.len();
    for (db, g) in d_bias.iter_mut().zip(dz) {
        *db += g;
    }
    let mut dx = vec![0.0; input.len()];
    for (i, &xv) in input.iter().enumerate() {
        let row = i * units..(i + 1) * units;
        for (dw, g) in d_weight[row.clone()].iter_mut().zip(dz) {
            *dw += xv * g;
        }
        dx[i] = weight[row].iter().zip(dz).map(|(a, b)| a * b).sum();
    }
    dx
}

pub(crate) fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Zeroes gradient entries whose pre-activation was not positive.
pub(crate) fn relu_mask(grad: &mut [f64], pre: &[f64]) {
    for (g, &z) in grad.iter_mut().zip(pre) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
