//! Multi-speaker BiLSTM: a background stream mixed per position with the
//! stream of that position's speaker, `h' = g·h_s + (1 - g)·h_bg`,
//! `g = sigmoid(w_g[s])`.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

use super::lstm::{bilstm_backward, bilstm_forward_cached, BiLstmCache, LstmParams};
use super::sigmoid;
use super::tensor::{dot, Tensor};

pub const SPEAKERS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct MsBiLstmLayer {
    pub background: LstmParams,
    /// One per speaker role, or empty for a plain BiLSTM.
    pub speakers: Vec<LstmParams>,
    /// Gate logits `w_g`, one per speaker role (empty when plain).
    pub gate: Tensor,
}

impl MsBiLstmLayer {
    /// Random LSTM weights; gate logits start at 0 (g = 0.5).
    pub fn random(input_dim: usize, hidden: usize, plain: bool, rng: &mut SplitMix64) -> Self {
        let background = LstmParams::random(input_dim, hidden, rng);
        let speakers = if plain {
            Vec::new()
        } else {
            (0..SPEAKERS).map(|_| LstmParams::random(input_dim, hidden, rng)).collect()
        };
        Self {
            background,
            gate: Tensor::zeros(&[speakers.len()]),
            speakers,
        }
    }

    pub fn zeros(input_dim: usize, hidden: usize, plain: bool) -> Self {
        let n = if plain { 0 } else { SPEAKERS };
        Self {
            background: LstmParams::zeros(input_dim, hidden),
            speakers: (0..n).map(|_| LstmParams::zeros(input_dim, hidden)).collect(),
            gate: Tensor::zeros(&[n]),
        }
    }

    pub fn is_plain(&self) -> bool {
        self.speakers.is_empty()
    }

    pub fn hidden(&self) -> usize {
        self.background.hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.background.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden()
    }

    /// Mixing coefficient for speaker `s`.
    pub fn gate_value(&self, s: usize) -> f64 {
        sigmoid(self.gate.data()[s])
    }
}

#[derive(Debug, Clone)]
pub struct MsCache {
    bg: BiLstmCache,
    bg_out: Tensor,
    /// Speaker streams that were run (speakers present in the sequence).
    streams: Vec<Option<(BiLstmCache, Tensor)>>,
    pub out: Tensor,
}

impl MsCache {
    pub fn background_output(&self) -> &Tensor {
        &self.bg_out
    }

    pub fn speaker_output(&self, s: usize) -> Option<&Tensor> {
        self.streams.get(s).and_then(|x| x.as_ref()).map(|x| &x.1)
    }
}

pub fn ms_bilstm_forward_cached(layer: &MsBiLstmLayer, xs: &Tensor, speakers: &[usize]) -> Result<MsCache> {
    if speakers.len() != xs.rows() {
        return Err(Error::shape(format!(
            "{} speakers for {} inputs",
            speakers.len(),
            xs.rows()
        )));
    }
    if let Some(s) = speakers.iter().find(|s| **s >= SPEAKERS) {
        return Err(Error::invalid(format!("unknown speaker role index {s}")));
    }
    let h = layer.hidden();
    let bg = bilstm_forward_cached(&layer.background, xs)?;
    let bg_out = bg.output(h);
    let mut streams = Vec::with_capacity(layer.speakers.len());
    for (s, params) in layer.speakers.iter().enumerate() {
        // a stream only reaches the output through its own speaker's positions
        if speakers.contains(&s) {
            let cache = bilstm_forward_cached(params, xs)?;
            let out = cache.output(h);
            streams.push(Some((cache, out)));
        } else {
            streams.push(None);
        }
    }
    let mut out = bg_out.clone();
    if !layer.is_plain() {
        for (i, &s) in speakers.iter().enumerate() {
            let g = layer.gate_value(s);
            let hs = streams[s].as_ref().map(|x| x.1.row(i)).expect("stream run");
            for (o, (a, b)) in out.row_mut(i).iter_mut().zip(hs.iter().zip(bg_out.row(i))) {
                *o = g * a + (1.0 - g) * b;
            }
        }
    }
    Ok(MsCache {
        bg,
        bg_out,
        streams,
        out,
    })
}

/// `n × 2H` mixed outputs.
pub fn ms_bilstm_forward(layer: &MsBiLstmLayer, xs: &Tensor, speakers: &[usize]) -> Result<Tensor> {
    Ok(ms_bilstm_forward_cached(layer, xs, speakers)?.out)
}

/// Gradients reach speaker `j`'s parameters only through positions spoken
/// by `j`.
pub fn ms_bilstm_backward(
    layer: &MsBiLstmLayer,
    cache: &MsCache,
    xs: &Tensor,
    speakers: &[usize],
    dout: &Tensor,
    grad: &mut MsBiLstmLayer,
    mut dx: Option<&mut Tensor>,
) {
    if layer.is_plain() {
        bilstm_backward(&layer.background, &cache.bg, xs, dout, &mut grad.background, dx);
        return;
    }
    let mut d_bg = dout.clone();
    let mut d_streams: Vec<Option<Tensor>> = cache
        .streams
        .iter()
        .map(|s| s.as_ref().map(|(_, out)| out.zeros_like()))
        .collect();
    for (i, &s) in speakers.iter().enumerate() {
        let g = layer.gate_value(s);
        let hs = cache.streams[s].as_ref().map(|x| x.1.row(i)).expect("stream run");
        let hb = cache.bg_out.row(i);
        let d = dout.row(i);
        let diff: Vec<f64> = hs.iter().zip(hb).map(|(a, b)| a - b).collect();
        grad.gate.data_mut()[s] += dot(d, &diff) * g * (1.0 - g);
        let ds = d_streams[s].as_mut().expect("stream run").row_mut(i);
        for (x, di) in ds.iter_mut().zip(d) {
            *x = g * di;
        }
        d_bg.row_mut(i).iter_mut().for_each(|x| *x *= 1.0 - g);
    }
    bilstm_backward(&layer.background, &cache.bg, xs, &d_bg, &mut grad.background, dx.as_deref_mut());
    for (s, stream) in cache.streams.iter().enumerate() {
        if let (Some((c, _)), Some(ds)) = (stream, &d_streams[s]) {
            bilstm_backward(&layer.speakers[s], c, xs, ds, &mut grad.speakers[s], dx.as_deref_mut());
        }
    }
}
