//! Standard LSTM (gate order i, f, g, o; no peepholes) and its
//! bidirectional wrapper, with hand-written backpropagation through time.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

use super::tensor::{axpy, gemm_a_w_tail, gemm_at_x, gemm_rows, matvec_t_acc, outer_acc, transpose, Tensor};
use super::{sigmoid, tanh};

/// One direction: `a = wx·x + wh·h_prev + b`, split into four gates.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    /// `4H × D`
    pub wx: Tensor,
    /// `4H × H`
    pub wh: Tensor,
    /// `4H`
    pub b: Tensor,
}

impl LstmCell {
    /// Weights uniform in ±1/√H, forget-gate bias 1.
    pub fn random(input_dim: usize, hidden: usize, rng: &mut SplitMix64) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut cell = Self {
            wx: Tensor::uniform(&[4 * hidden, input_dim], bound, rng),
            wh: Tensor::uniform(&[4 * hidden, hidden], bound, rng),
            b: Tensor::uniform(&[4 * hidden], bound, rng),
        };
        cell.b.data_mut()[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
        cell
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            wx: Tensor::zeros(&[4 * hidden, input_dim]),
            wh: Tensor::zeros(&[4 * hidden, hidden]),
            b: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.wh.shape()[1]
    }

    pub fn input_dim(&self) -> usize {
        self.wx.shape()[1]
    }

    pub fn from_parts(wx: Tensor, wh: Tensor, b: Tensor) -> Result<Self> {
        let ok = wh.shape().len() == 2
            && wx.shape().len() == 2
            && b.shape().len() == 1
            && wh.shape()[0] == 4 * wh.shape()[1]
            && wx.shape()[0] == wh.shape()[0]
            && b.shape()[0] == wh.shape()[0];
        if !ok {
            return Err(Error::shape(format!(
                "inconsistent LSTM blocks {:?} {:?} {:?}",
                wx.shape(),
                wh.shape(),
                b.shape()
            )));
        }
        Ok(Self { wx, wh, b })
    }
}

/// Activations kept for the backward pass, indexed by sequence position.
#[derive(Debug, Clone)]
pub struct CellCache {
    reverse: bool,
    /// Activated gates `[i, f, g, o]`, `n × 4H`.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    /// Hidden states, `n × H`.
    pub h: Vec<f64>,
}

fn order(n: usize, reverse: bool) -> Box<dyn Iterator<Item = usize>> {
    if reverse {
        Box::new((0..n).rev())
    } else {
        Box::new(0..n)
    }
}

/// Runs one direction over `xs` (`n × D`).
pub fn cell_forward(cell: &LstmCell, xs: &Tensor, reverse: bool) -> CellCache {
    let n = xs.rows();
    let h = cell.hidden();
    let d = cell.input_dim();
    let mut gates = vec![0.0; n * 4 * h];
    for row in gates.chunks_exact_mut(4 * h) {
        row.copy_from_slice(cell.b.data());
    }
    // input projections for every step at once; only the recurrence is serial
    gemm_rows(xs.data(), d, cell.wx.data(), 4 * h, &mut gates);
    let wh_t = transpose(cell.wh.data(), 4 * h, h);
    let mut cs = vec![0.0; n * h];
    let mut tcs = vec![0.0; n * h];
    let mut hs = vec![0.0; n * h];
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    for t in order(n, reverse) {
        let a = &mut gates[t * 4 * h..(t + 1) * 4 * h];
        for (k, &hk) in h_prev.iter().enumerate() {
            axpy(hk, &wh_t[k * 4 * h..(k + 1) * 4 * h], a);
        }
        for k in 0..h {
            let i = sigmoid(a[k]);
            let f = sigmoid(a[h + k]);
            let g = tanh(a[2 * h + k]);
            let o = sigmoid(a[3 * h + k]);
            a[k] = i;
            a[h + k] = f;
            a[2 * h + k] = g;
            a[3 * h + k] = o;
            let c = f * c_prev[k] + i * g;
            let tc = c.tanh();
            cs[t * h + k] = c;
            tcs[t * h + k] = tc;
            hs[t * h + k] = o * tc;
        }
        h_prev.copy_from_slice(&hs[t * h..(t + 1) * h]);
        c_prev.copy_from_slice(&cs[t * h..(t + 1) * h]);
    }
    CellCache {
        reverse,
        gates,
        c: cs,
        tanh_c: tcs,
        h: hs,
    }
}

/// Backpropagates `dh` (`n × H`, gradient w.r.t. each hidden state) through
/// the recurrence. Parameter gradients accumulate into `grad`. When `dx` is
/// given, input gradients accumulate into it; a `dx` narrower than the input
/// receives only the trailing `dx.row_len()` columns.
pub fn cell_backward(
    cell: &LstmCell,
    cache: &CellCache,
    xs: &Tensor,
    dh: &[f64],
    grad: &mut LstmCell,
    dx: Option<&mut Tensor>,
) {
    let n = xs.rows();
    let h = cell.hidden();
    let d = cell.input_dim();
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut das = vec![0.0; n * 4 * h];
    let zeros = vec![0.0; h];
    let steps: Vec<usize> = order(n, cache.reverse).collect();
    for (step, &t) in steps.iter().enumerate().rev() {
        let prev = if step > 0 { Some(steps[step - 1]) } else { None };
        let (h_prev, c_prev) = match prev {
            Some(p) => (&cache.h[p * h..(p + 1) * h], &cache.c[p * h..(p + 1) * h]),
            None => (&zeros[..], &zeros[..]),
        };
        let gates = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
        let da = &mut das[t * 4 * h..(t + 1) * 4 * h];
        for k in 0..h {
            let (i, f, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
            let tc = cache.tanh_c[t * h + k];
            let dht = dh[t * h + k] + dh_next[k];
            let dc = dht * o * (1.0 - tc * tc) + dc_next[k];
            da[k] = dc * g * i * (1.0 - i);
            da[h + k] = dc * c_prev[k] * f * (1.0 - f);
            da[2 * h + k] = dc * i * (1.0 - g * g);
            da[3 * h + k] = dht * tc * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        if prev.is_some() {
            outer_acc(grad.wh.data_mut(), da, h_prev);
        }
        dh_next.iter_mut().for_each(|x| *x = 0.0);
        matvec_t_acc(cell.wh.data(), da, &mut dh_next);
    }
    for da in das.chunks_exact(4 * h) {
        axpy(1.0, da, grad.b.data_mut());
    }
    gemm_at_x(&das, 4 * h, xs.data(), d, grad.wx.data_mut());
    if let Some(dx) = dx {
        let width = dx.row_len();
        gemm_a_w_tail(&das, 4 * h, cell.wx.data(), d, dx.data_mut(), width);
    }
}

/// Forward and backward cells sharing input and hidden sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub fwd: LstmCell,
    pub bwd: LstmCell,
}

impl LstmParams {
    pub fn random(input_dim: usize, hidden: usize, rng: &mut SplitMix64) -> Self {
        Self {
            fwd: LstmCell::random(input_dim, hidden, rng),
            bwd: LstmCell::random(input_dim, hidden, rng),
        }
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            fwd: LstmCell::zeros(input_dim, hidden),
            bwd: LstmCell::zeros(input_dim, hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.fwd.input_dim()
    }
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    pub fwd: CellCache,
    pub bwd: CellCache,
}

impl BiLstmCache {
    /// Output row `i` is `[forward h_i; backward h_i]`.
    pub fn output(&self, hidden: usize) -> Tensor {
        let n = self.fwd.h.len() / hidden.max(1);
        let mut out = Tensor::zeros(&[n, 2 * hidden]);
        for i in 0..n {
            let row = out.row_mut(i);
            row[..hidden].copy_from_slice(&self.fwd.h[i * hidden..(i + 1) * hidden]);
            row[hidden..].copy_from_slice(&self.bwd.h[i * hidden..(i + 1) * hidden]);
        }
        out
    }
}

fn check_input(params: &LstmParams, xs: &Tensor) -> Result<()> {
    if xs.rows() == 0 {
        return Err(Error::invalid("empty input sequence"));
    }
    if xs.row_len() != params.input_dim() {
        return Err(Error::shape(format!(
            "input width {} but LSTM expects {}",
            xs.row_len(),
            params.input_dim()
        )));
    }
    Ok(())
}

pub fn bilstm_forward_cached(params: &LstmParams, xs: &Tensor) -> Result<BiLstmCache> {
    check_input(params, xs)?;
    Ok(BiLstmCache {
        fwd: cell_forward(&params.fwd, xs, false),
        bwd: cell_forward(&params.bwd, xs, true),
    })
}

/// `n × 2H` outputs for an `n × D` input.
pub fn bilstm_forward(params: &LstmParams, xs: &Tensor) -> Result<Tensor> {
    Ok(bilstm_forward_cached(params, xs)?.output(params.hidden()))
}

/// `dout` is `n × 2H`, matching the forward output layout. `dx` may cover
/// only the trailing input columns, as in [`cell_backward`].
pub fn bilstm_backward(
    params: &LstmParams,
    cache: &BiLstmCache,
    xs: &Tensor,
    dout: &Tensor,
    grad: &mut LstmParams,
    mut dx: Option<&mut Tensor>,
) {
    let h = params.hidden();
    let n = xs.rows();
    let mut df = vec![0.0; n * h];
    let mut db = vec![0.0; n * h];
    for i in 0..n {
        let row = dout.row(i);
        df[i * h..(i + 1) * h].copy_from_slice(&row[..h]);
        db[i * h..(i + 1) * h].copy_from_slice(&row[h..]);
    }
    cell_backward(&params.fwd, &cache.fwd, xs, &df, &mut grad.fwd, dx.as_deref_mut());
    cell_backward(&params.bwd, &cache.bwd, xs, &db, &mut grad.bwd, dx);
}
