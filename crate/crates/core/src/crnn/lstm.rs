//! Bidirectional LSTM with full backpropagation through time.
//!
//! Gate order inside every `4h` block is input, forget, cell, output.
//! Per direction the parameters are `W: [input][4h]`, `U: [h][4h]` and
//! `b: [4h]`.

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations of one direction, indexed by processing step.
#[derive(Debug, Clone)]
pub struct DirectionCache {
    /// Post-activation gates, `steps × 4h`.
    pub gates: Vec<f64>,
    pub cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    pub input: Vec<f64>,
    pub forward: DirectionCache,
    pub backward: DirectionCache,
}

pub(crate) struct LstmDims {
    pub steps: usize,
    pub input: usize,
    pub hidden: usize,
}

fn time_index(dims: &LstmDims, step: usize, reverse: bool) -> usize {
    if reverse {
        dims.steps - 1 - step
    } else {
        step
    }
}

fn run_direction(dims: &LstmDims, x: &[f64], w: &[f64], u: &[f64], b: &[f64], reverse: bool) -> DirectionCache {
    let (d, h) = (dims.input, dims.hidden);
    let g4 = 4 * h;
    let mut gates = vec![0.0; dims.steps * g4];
    let mut cell = vec![0.0; dims.steps * h];
    let mut hidden = vec![0.0; dims.steps * h];
    let mut z = vec![0.0; g4];
    for s in 0..dims.steps {
        let t = time_index(dims, s, reverse);
        z.copy_from_slice(b);
        for (i, &xv) in x[t * d..(t + 1) * d].iter().enumerate() {
            for (zj, wv) in z.iter_mut().zip(&w[i * g4..(i + 1) * g4]) {
                *zj += xv * wv;
            }
        }
        if s > 0 {
            for i in 0..h {
                let hv = hidden[(s - 1) * h + i];
                for (zj, uv) in z.iter_mut().zip(&u[i * g4..(i + 1) * g4]) {
                    *zj += hv * uv;
                }
            }
        }
        let gs = &mut gates[s * g4..(s + 1) * g4];
        for j in 0..h {
            gs[j] = sigmoid(z[j]);
            gs[h + j] = sigmoid(z[h + j]);
            gs[2 * h + j] = z[2 * h + j].tanh();
            gs[3 * h + j] = sigmoid(z[3 * h + j]);
            let c_prev = if s > 0 { cell[(s - 1) * h + j] } else { 0.0 };
            let c = gs[h + j] * c_prev + gs[j] * gs[2 * h + j];
            cell[s * h + j] = c;
            hidden[s * h + j] = gs[3 * h + j] * c.tanh();
        }
    }
    DirectionCache { gates, cell, hidden }
}

/// Output is `steps × 2h`: forward state then backward state at each time.
pub(crate) fn bilstm_forward(dims: &LstmDims, x: &[f64], params: &[Vec<f64>]) -> (Vec<f64>, BiLstmCache) {
    let h = dims.hidden;
    let fwd = run_direction(dims, x, &params[0], &params[1], &params[2], false);
    let bwd = run_direction(dims, x, &params[3], &params[4], &params[5], true);
    let mut out = vec![0.0; dims.steps * 2 * h];
    for t in 0..dims.steps {
        out[t * 2 * h..t * 2 * h + h].copy_from_slice(&fwd.hidden[t * h..(t + 1) * h]);
        let s = dims.steps - 1 - t;
        out[t * 2 * h + h..(t + 1) * 2 * h].copy_from_slice(&bwd.hidden[s * h..(s + 1) * h]);
    }
    (
        out,
        BiLstmCache {
            input: x.to_vec(),
            forward: fwd,
            backward: bwd,
        },
    )
}

#[allow(clippy::too_many_arguments)]
fn backprop_direction(
    dims: &LstmDims,
    x: &[f64],
    cache: &DirectionCache,
    w: &[f64],
    u: &[f64],
    d_out: &[f64],
    offset: usize,
    reverse: bool,
    grads: &mut [Vec<f64>],
    dx: &mut [f64],
) {
    let (d, h) = (dims.input, dims.hidden);
    let g4 = 4 * h;
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; g4];
    let (gw, rest) = grads.split_at_mut(1);
    let (gu, gb) = rest.split_at_mut(1);
    let (gw, gu, gb) = (&mut gw[0], &mut gu[0], &mut gb[0]);
    for s in (0..dims.steps).rev() {
        let t = time_index(dims, s, reverse);
        let gs = &cache.gates[s * g4..(s + 1) * g4];
        for j in 0..h {
            let dh = d_out[t * 2 * h + offset + j] + dh_next[j];
            let c = cache.cell[s * h + j];
            let tc = c.tanh();
            let (i, f, g, o) = (gs[j], gs[h + j], gs[2 * h + j], gs[3 * h + j]);
            let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
            let c_prev = if s > 0 { cache.cell[(s - 1) * h + j] } else { 0.0 };
            dz[j] = dc * g * i * (1.0 - i);
            dz[h + j] = dc * c_prev * f * (1.0 - f);
            dz[2 * h + j] = dc * i * (1.0 - g * g);
            dz[3 * h + j] = dh * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        for (a, b) in gb.iter_mut().zip(&dz) {
            *a += b;
        }
        let xt = &x[t * d..(t + 1) * d];
        for (i, &xv) in xt.iter().enumerate() {
            let row = i * g4..(i + 1) * g4;
            for (a, b) in gw[row.clone()].iter_mut().zip(&dz) {
                *a += xv * b;
            }
            dx[t * d + i] += w[row].iter().zip(&dz).map(|(a, b)| a * b).sum::<f64>();
        }
        if s > 0 {
            for i in 0..h {
                let hv = cache.hidden[(s - 1) * h + i];
                let row = i * g4..(i + 1) * g4;
                for (a, b) in gu[row.clone()].iter_mut().zip(&dz) {
                    *a += hv * b;
                }
                dh_next[i] = u[row].iter().zip(&dz).map(|(a, b)| a * b).sum();
            }
        } else {
            dh_next.fill(0.0);
        }
    }
}

/// Accumulates into `grads` (six blocks, same order as the parameters) and
/// returns the input gradient.
pub(crate) fn bilstm_backward(
    dims: &LstmDims,
    cache: &BiLstmCache,
    params: &[Vec<f64>],
    d_out: &[f64],
    grads: &mut [Vec<f64>],
) -> Vec<f64> {
    let mut dx = vec![0.0; cache.input.len()];
    let (gf, gb) = grads.split_at_mut(3);
    backprop_direction(dims, &cache.input, &cache.forward, &params[0], &params[1], d_out, 0, false, gf, &mut dx);
    backprop_direction(
        dims,
        &cache.input,
        &cache.backward,
        &params[3],
        &params[4],
        d_out,
        dims.hidden,
        true,
        gb,
        &mut dx,
    );
    dx
}
