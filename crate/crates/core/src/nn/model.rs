//! The hierarchical classifier: a coarse MS-BiLSTM with a two-way softmax
//! head feeding a fine MS-BiLSTM with three sigmoid outputs.

use rayon::prelude::*;

use crate::corpus::{FineLabelSet, Task};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureTables, UtteranceInputs};
use crate::rng::SplitMix64;

use super::lstm::LstmParams;
use super::loss::{loss_sums, LossSums, Predictions};
use super::ms::{ms_bilstm_backward, ms_bilstm_forward_cached, MsBiLstmLayer, MsCache};
use super::tensor::{axpy, matvec_acc, matvec_t_acc, outer_acc, Tensor};
use super::{sigmoid, softmax2};

/// Configuration switches removing parts of the model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ablations {
    /// Drop the coarse branch; the fine layer sees the features alone.
    pub no_hierarchy: bool,
    /// Background stream only.
    pub plain_bilstm: bool,
    /// Speaker, position and semantic segments zero and frozen.
    pub no_context: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub features: FeatureConfig,
    pub hidden: usize,
    pub beta: f64,
    /// Utterances per recurrent window at inference time.
    pub window_len: usize,
    pub ablations: Ablations,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            hidden: 32,
            beta: 1.0,
            window_len: 128,
            ablations: Ablations::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        if self.hidden == 0 || self.window_len == 0 {
            return Err(Error::Config("hidden size and window length must be >= 1".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be a non-negative number, got {}", self.beta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseBranch {
    pub layer: MsBiLstmLayer,
    /// `2 × 2H`
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalModel {
    pub config: ModelConfig,
    pub tables: FeatureTables,
    pub coarse: Option<CoarseBranch>,
    pub fine: MsBiLstmLayer,
    /// `3 × 2H`
    pub w_f: Tensor,
    pub b_f: Tensor,
}

/// A training or evaluation unit: one window of one conversation.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub inputs: UtteranceInputs,
    pub gold: Vec<FineLabelSet>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }
}

const SPEAKER_NAMES: [&str; 3] = ["dr", "pt", "ot"];

fn lstm_blocks<'a>(prefix: &str, p: &'a LstmParams, out: &mut Vec<(String, &'a Tensor)>) {
    for (dir, c) in [("fwd", &p.fwd), ("bwd", &p.bwd)] {
        out.push((format!("{prefix}.{dir}.wx"), &c.wx));
        out.push((format!("{prefix}.{dir}.wh"), &c.wh));
        out.push((format!("{prefix}.{dir}.b"), &c.b));
    }
}

fn lstm_blocks_mut<'a>(prefix: &str, p: &'a mut LstmParams, out: &mut Vec<(String, &'a mut Tensor)>) {
    let LstmParams { fwd, bwd } = p;
    for (dir, c) in [("fwd", fwd), ("bwd", bwd)] {
        out.push((format!("{prefix}.{dir}.wx"), &mut c.wx));
        out.push((format!("{prefix}.{dir}.wh"), &mut c.wh));
        out.push((format!("{prefix}.{dir}.b"), &mut c.b));
    }
}

fn layer_blocks<'a>(prefix: &str, l: &'a MsBiLstmLayer, out: &mut Vec<(String, &'a Tensor)>) {
    lstm_blocks(&format!("{prefix}.bg"), &l.background, out);
    for (name, p) in SPEAKER_NAMES.iter().zip(&l.speakers) {
        lstm_blocks(&format!("{prefix}.{name}"), p, out);
    }
    if !l.is_plain() {
        out.push((format!("{prefix}.gate"), &l.gate));
    }
}

fn layer_blocks_mut<'a>(prefix: &str, l: &'a mut MsBiLstmLayer, out: &mut Vec<(String, &'a mut Tensor)>) {
    let MsBiLstmLayer {
        background,
        speakers,
        gate,
    } = l;
    lstm_blocks_mut(&format!("{prefix}.bg"), background, out);
    let plain = speakers.is_empty();
    for (name, p) in SPEAKER_NAMES.iter().zip(speakers.iter_mut()) {
        lstm_blocks_mut(&format!("{prefix}.{name}"), p, out);
    }
    if !plain {
        out.push((format!("{prefix}.gate"), gate));
    }
}

struct ForwardCache {
    xs: Tensor,
    coarse: Option<(MsCache, Vec<[f64; 2]>)>,
    fine_in: Tensor,
    fine: MsCache,
    fine_probs: Vec<[f64; 3]>,
}

impl HierarchicalModel {
    pub fn random(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SplitMix64::derive(seed, 0x6d6f_64656c);
        let fc = &config.features;
        let tables = if config.ablations.no_context {
            FeatureTables::zeros(fc)
        } else {
            FeatureTables::random(fc, &mut rng)
        };
        let d = fc.feature_dim();
        let h = config.hidden;
        let plain = config.ablations.plain_bilstm;
        let bound = 1.0 / (h as f64).sqrt();
        let coarse = if config.ablations.no_hierarchy {
            None
        } else {
            Some(CoarseBranch {
                layer: MsBiLstmLayer::random(d, h, plain, &mut rng),
                w: Tensor::uniform(&[2, 2 * h], bound, &mut rng),
                b: Tensor::zeros(&[2]),
            })
        };
        let fine_in = if coarse.is_some() { d + 2 * h } else { d };
        let fine = MsBiLstmLayer::random(fine_in, h, plain, &mut rng);
        let w_f = Tensor::uniform(&[3, 2 * h], bound, &mut rng);
        Ok(Self {
            tables,
            coarse,
            fine,
            w_f,
            b_f: Tensor::zeros(&[3]),
            config,
        })
    }

    /// Same structure with every parameter zero.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let mut m = Self::random(config, 0)?;
        m.blocks_mut().into_iter().for_each(|(_, t)| t.fill(0.0));
        Ok(m)
    }

    /// A zero-filled copy, used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut m = self.clone();
        m.blocks_mut().into_iter().for_each(|(_, t)| t.fill(0.0));
        m
    }

    /// Named trainable blocks in a fixed order.
    pub fn blocks(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("emb.speaker".to_string(), &self.tables.speaker.weights),
            ("emb.position".to_string(), &self.tables.position.weights),
            ("emb.semantic".to_string(), &self.tables.semantic.weights),
        ];
        if let Some(c) = &self.coarse {
            layer_blocks("coarse", &c.layer, &mut out);
            out.push(("coarse.head.w".into(), &c.w));
            out.push(("coarse.head.b".into(), &c.b));
        }
        layer_blocks("fine", &self.fine, &mut out);
        out.push(("fine.head.w".into(), &self.w_f));
        out.push(("fine.head.b".into(), &self.b_f));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let Self {
            tables,
            coarse,
            fine,
            w_f,
            b_f,
            ..
        } = self;
        let FeatureTables {
            speaker,
            position,
            semantic,
        } = tables;
        let mut out = vec![
            ("emb.speaker".to_string(), &mut speaker.weights),
            ("emb.position".to_string(), &mut position.weights),
            ("emb.semantic".to_string(), &mut semantic.weights),
        ];
        if let Some(c) = coarse {
            layer_blocks_mut("coarse", &mut c.layer, &mut out);
            out.push(("coarse.head.w".into(), &mut c.w));
            out.push(("coarse.head.b".into(), &mut c.b));
        }
        layer_blocks_mut("fine", fine, &mut out);
        out.push(("fine.head.w".into(), w_f));
        out.push(("fine.head.b".into(), b_f));
        out
    }

    /// Blocks the optimizer may change.
    pub fn is_trainable(&self, name: &str) -> bool {
        !(self.config.ablations.no_context && name.starts_with("emb."))
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &HierarchicalModel) {
        for ((_, a), (_, b)) in self.blocks_mut().into_iter().zip(other.blocks()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.blocks_mut().into_iter().for_each(|(_, t)| t.scale(s));
    }

    fn feature_matrix(&self, inputs: &UtteranceInputs) -> Result<Tensor> {
        let bundles = inputs.features(&self.tables, self.config.ablations.no_context)?;
        let d = self.config.features.feature_dim();
        let mut xs = Tensor::zeros(&[bundles.len(), d]);
        for (i, b) in bundles.iter().enumerate() {
            if b.vector.len() != d {
                return Err(Error::shape(format!("feature length {} but model expects {d}", b.vector.len())));
            }
            xs.row_mut(i).copy_from_slice(&b.vector);
        }
        Ok(xs)
    }

    fn forward_cached(&self, inputs: &UtteranceInputs) -> Result<ForwardCache> {
        let xs = self.feature_matrix(inputs)?;
        let spk = &inputs.speakers;
        let n = xs.rows();
        let (coarse, fine_in) = match &self.coarse {
            Some(c) => {
                let cache = ms_bilstm_forward_cached(&c.layer, &xs, spk)?;
                let mut probs = Vec::with_capacity(n);
                let d = xs.row_len();
                let h2 = c.layer.output_dim();
                let mut fine_in = Tensor::zeros(&[n, d + h2]);
                for i in 0..n {
                    let hc = cache.out.row(i);
                    let mut z = [0.0; 2];
                    z.copy_from_slice(c.b.data());
                    matvec_acc(c.w.data(), hc, &mut z);
                    probs.push(softmax2(z));
                    let row = fine_in.row_mut(i);
                    row[..d].copy_from_slice(xs.row(i));
                    row[d..].copy_from_slice(hc);
                }
                (Some((cache, probs)), fine_in)
            }
            None => (None, xs.clone()),
        };
        let fine = ms_bilstm_forward_cached(&self.fine, &fine_in, spk)?;
        let fine_probs = (0..n)
            .map(|i| {
                let mut z = [0.0; 3];
                z.copy_from_slice(self.b_f.data());
                matvec_acc(self.w_f.data(), fine.out.row(i), &mut z);
                z.map(sigmoid)
            })
            .collect();
        Ok(ForwardCache {
            xs,
            coarse,
            fine_in,
            fine,
            fine_probs,
        })
    }

    /// Probabilities for one sequence, run as a single recurrent window.
    pub fn forward(&self, inputs: &UtteranceInputs) -> Result<Predictions> {
        let c = self.forward_cached(inputs)?;
        Ok(Predictions {
            fine: c.fine_probs,
            coarse: c.coarse.map(|x| x.1),
        })
    }

    /// Probabilities for a whole conversation, split into consecutive
    /// windows of `window_len` utterances.
    pub fn predict(&self, inputs: &UtteranceInputs) -> Result<Predictions> {
        let n = inputs.len();
        let w = self.config.window_len;
        let mut out = Predictions {
            fine: Vec::with_capacity(n),
            coarse: self.coarse.as_ref().map(|_| Vec::with_capacity(n)),
        };
        for start in (0..n).step_by(w) {
            let p = self.forward(&inputs.slice(start, (start + w).min(n)))?;
            out.fine.extend(p.fine);
            if let (Some(all), Some(part)) = (out.coarse.as_mut(), p.coarse) {
                all.extend(part);
            }
        }
        Ok(out)
    }

    /// Summed losses of one window and the gradient of
    /// `scale · (Σ fine + beta·Σ coarse)`.
    pub fn loss_and_grad(&self, window: &Window, scale: f64) -> Result<(LossSums, HierarchicalModel)> {
        let cache = self.forward_cached(&window.inputs)?;
        let pred = Predictions {
            fine: cache.fine_probs.clone(),
            coarse: cache.coarse.as_ref().map(|x| x.1.clone()),
        };
        let sums = loss_sums(&pred, &window.gold)?;
        let mut grad = self.zeros_like();
        self.backward(&cache, window, scale, &mut grad);
        Ok((sums, grad))
    }

    fn backward(&self, cache: &ForwardCache, window: &Window, scale: f64, grad: &mut HierarchicalModel) {
        let inputs = &window.inputs;
        let spk = &inputs.speakers;
        let n = cache.xs.rows();
        let d = cache.xs.row_len();
        let no_context = self.config.ablations.no_context;

        let mut d_hf = cache.fine.out.zeros_like();
        for i in 0..n {
            let y = window.gold[i].as_array();
            let dz: Vec<f64> = (0..3)
                .map(|c| (cache.fine_probs[i][c] - if y[c] { 1.0 } else { 0.0 }) * scale / 3.0)
                .collect();
            axpy(1.0, &dz, grad.b_f.data_mut());
            outer_acc(grad.w_f.data_mut(), &dz, cache.fine.out.row(i));
            matvec_t_acc(self.w_f.data(), &dz, d_hf.row_mut(i));
        }

        // Text features are fixed, so input gradients are only needed for the
        // trailing context columns (and the coarse states in the fine input).
        let layout = self.config.features.layout();
        let ctx = if no_context { 0 } else { d - layout.speaker };
        let h2 = cache.fine_in.row_len() - d;
        let coarse_w = if self.coarse.is_some() { h2 } else { 0 };
        let mut d_fine_in = Tensor::zeros(&[n, ctx + coarse_w]);
        ms_bilstm_backward(
            &self.fine,
            &cache.fine,
            &cache.fine_in,
            spk,
            &d_hf,
            &mut grad.fine,
            (ctx + coarse_w > 0).then_some(&mut d_fine_in),
        );

        let mut dx = Tensor::zeros(&[n, ctx]);
        for i in 0..n {
            dx.row_mut(i).copy_from_slice(&d_fine_in.row(i)[..ctx]);
        }
        if let (Some(c), Some((c_cache, probs)), Some(gc)) = (&self.coarse, &cache.coarse, grad.coarse.as_mut()) {
            let mut d_hc = c_cache.out.zeros_like();
            let beta = self.config.beta;
            for i in 0..n {
                let rel = window.gold[i].relevant() as usize;
                let mut dz = [probs[i][0], probs[i][1]];
                dz[rel] -= 1.0;
                let dz = dz.map(|v| v * beta * scale);
                axpy(1.0, &dz, gc.b.data_mut());
                outer_acc(gc.w.data_mut(), &dz, c_cache.out.row(i));
                let row = d_hc.row_mut(i);
                row.copy_from_slice(&d_fine_in.row(i)[ctx..]);
                matvec_t_acc(c.w.data(), &dz, row);
            }
            ms_bilstm_backward(
                &c.layer,
                c_cache,
                &cache.xs,
                spk,
                &d_hc,
                &mut gc.layer,
                (!no_context).then_some(&mut dx),
            );
        }

        if no_context {
            return;
        }
        let base = layout.speaker;
        for i in 0..n {
            let row = dx.row(i);
            axpy(
                1.0,
                &row[..layout.position - base],
                grad.tables.speaker.weights.row_mut(inputs.speakers[i]),
            );
            axpy(
                1.0,
                &row[layout.position - base..layout.semantic - base],
                grad.tables.position.weights.row_mut(inputs.bins[i]),
            );
            let m = &inputs.mentions[i];
            if !m.is_empty() {
                let w = 1.0 / m.len() as f64;
                for &t in m {
                    axpy(w, &row[layout.semantic - base..], grad.tables.semantic.weights.row_mut(t));
                }
            }
        }
    }

    /// Sets the output biases so that, before any training, each head
    /// predicts the label frequencies of `gold` (smoothed by half a count).
    pub fn set_prior_bias(&mut self, gold: &[FineLabelSet]) {
        let n = gold.len() as f64;
        let logit = |count: usize| {
            let p = (count as f64 + 0.5) / (n + 1.0);
            (p / (1.0 - p)).ln()
        };
        for t in Task::ALL {
            self.b_f.data_mut()[t.index()] = logit(gold.iter().filter(|g| g.get(t)).count());
        }
        if let Some(c) = self.coarse.as_mut() {
            let b = c.b.data_mut();
            b[0] = 0.0;
            b[1] = logit(gold.iter().filter(|g| g.relevant()).count());
        }
    }

    /// Mean loss over all utterances of `windows` and its gradient. Windows
    /// run in parallel; gradients are summed in window order.
    pub fn batch_loss_and_grad(&self, windows: &[&Window]) -> Result<(LossSums, HierarchicalModel)> {
        let total: usize = windows.iter().map(|w| w.len()).sum();
        if total == 0 {
            return Err(Error::invalid("empty batch"));
        }
        let scale = 1.0 / total as f64;
        let parts: Vec<(LossSums, HierarchicalModel)> = windows
            .par_iter()
            .map(|w| self.loss_and_grad(w, scale))
            .collect::<Result<_>>()?;
        let mut iter = parts.into_iter();
        let (mut sums, mut grad) = iter.next().expect("non-empty batch");
        for (s, g) in iter {
            sums.add(&s);
            grad.add_assign(&g);
        }
        Ok((sums, grad))
    }

    /// Mean joint loss over `windows` without gradients.
    pub fn mean_loss(&self, windows: &[&Window]) -> Result<f64> {
        let parts: Vec<LossSums> = windows
            .par_iter()
            .map(|w| loss_sums(&self.forward(&w.inputs)?, &w.gold))
            .collect::<Result<_>>()?;
        let mut sums = LossSums::default();
        parts.iter().for_each(|s| sums.add(s));
        Ok(sums.total(self.config.beta))
    }
}
