//! BiLSTM with attention over utterances, predicting a conversation's
//! labels for one extraction task.
//!
//! With `H` the `n × 2H` BiLSTM outputs (rows `[fwd_i; bwd_i]`):
//! `h_final = [bwd_0; fwd_{n-1}]`, `S = H·h_final`, `A = softmax(S)`,
//! `h' = Hᵀ·A`, `p = sigmoid(W·h' + b)`.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use log::info;
use rayon::prelude::*;

use crate::corpus::{Conversation, Task};
use crate::error::{Error, Result};
use crate::eval::extraction_f1;
use crate::features::encode_text_hashed;
use crate::nn::{
    axpy, bce, bilstm_backward, bilstm_forward_cached, dot, matvec_acc, matvec_t_acc, outer_acc, sigmoid, softmax,
    LstmParams, Parameters, Tensor, CLIP,
};
use crate::rng::SplitMix64;
use crate::train::{adam_step, clip_global_norm, AdamState};

use super::ExtractionLabelMap;

#[derive(Debug, Clone, PartialEq)]
pub struct AttnExtractor {
    pub task: Task,
    pub labels: Vec<String>,
    pub lstm: LstmParams,
    /// `L × 2H`
    pub w: Tensor,
    pub b: Tensor,
}

/// One conversation: utterance vectors and its multi-hot gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnExample {
    pub xs: Tensor,
    pub target: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttnOutput {
    pub attention: Vec<f64>,
    pub context: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Parameters for AttnExtractor {
    fn param_blocks(&self) -> Vec<(String, &Tensor)> {
        let l = &self.lstm;
        vec![
            ("lstm.fwd.wx".into(), &l.fwd.wx),
            ("lstm.fwd.wh".into(), &l.fwd.wh),
            ("lstm.fwd.b".into(), &l.fwd.b),
            ("lstm.bwd.wx".into(), &l.bwd.wx),
            ("lstm.bwd.wh".into(), &l.bwd.wh),
            ("lstm.bwd.b".into(), &l.bwd.b),
            ("head.w".into(), &self.w),
            ("head.b".into(), &self.b),
        ]
    }

    fn param_blocks_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let LstmParams { fwd, bwd } = &mut self.lstm;
        vec![
            ("lstm.fwd.wx".into(), &mut fwd.wx),
            ("lstm.fwd.wh".into(), &mut fwd.wh),
            ("lstm.fwd.b".into(), &mut fwd.b),
            ("lstm.bwd.wx".into(), &mut bwd.wx),
            ("lstm.bwd.wh".into(), &mut bwd.wh),
            ("lstm.bwd.b".into(), &mut bwd.b),
            ("head.w".into(), &mut self.w),
            ("head.b".into(), &mut self.b),
        ]
    }
}

impl AttnExtractor {
    pub fn random(task: Task, labels: Vec<String>, input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::derive(seed, 0x6174_746e);
        let lstm = LstmParams::random(input_dim, hidden, &mut rng);
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            task,
            w: Tensor::uniform(&[labels.len(), 2 * hidden], bound, &mut rng),
            b: Tensor::zeros(&[labels.len()]),
            labels,
            lstm,
        }
    }

    pub fn hidden(&self) -> usize {
        self.lstm.hidden()
    }

    fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.param_blocks_mut().into_iter().for_each(|(_, t)| t.fill(0.0));
        g
    }

    pub fn forward(&self, xs: &Tensor) -> Result<AttnOutput> {
        Ok(self.forward_cached(xs)?.0)
    }

    fn forward_cached(&self, xs: &Tensor) -> Result<(AttnOutput, crate::nn::BiLstmCache, Tensor, Vec<f64>, Vec<f64>)> {
        let h = self.hidden();
        let cache = bilstm_forward_cached(&self.lstm, xs)?;
        let hs = cache.output(h);
        let att = attend(&hs, h);
        let mut z = self.b.data().to_vec();
        matvec_acc(self.w.data(), &att.context, &mut z);
        let probs = z.into_iter().map(sigmoid).collect();
        Ok((
            AttnOutput {
                attention: att.weights,
                context: att.context,
                probs,
            },
            cache,
            hs,
            att.h_final,
            att.scores,
        ))
    }

    /// Mean BCE over labels, and its gradient scaled by `scale`.
    pub fn loss_and_grad(&self, ex: &AttnExample, scale: f64) -> Result<(f64, AttnExtractor)> {
        let l = self.labels.len();
        if ex.target.len() != l {
            return Err(Error::shape(format!("{} targets for {l} labels", ex.target.len())));
        }
        let h = self.hidden();
        let (out, cache, hs, h_final, scores) = self.forward_cached(&ex.xs)?;
        let n = hs.rows();
        let loss = out.probs.iter().zip(&ex.target).map(|(p, y)| bce(*p, *y)).sum::<f64>() / l as f64;
        let mut g = self.zeros_like();

        let dz: Vec<f64> = out
            .probs
            .iter()
            .zip(&ex.target)
            .map(|(p, y)| (p - if *y { 1.0 } else { 0.0 }) * scale / l as f64)
            .collect();
        axpy(1.0, &dz, g.b.data_mut());
        outer_acc(g.w.data_mut(), &dz, &out.context);
        let mut d_ctx = vec![0.0; 2 * h];
        matvec_t_acc(self.w.data(), &dz, &mut d_ctx);

        let mut d_hs = hs.zeros_like();
        let d_att: Vec<f64> = (0..n).map(|i| dot(hs.row(i), &d_ctx)).collect();
        let mean: f64 = out.attention.iter().zip(&d_att).map(|(a, d)| a * d).sum();
        let mut d_final = vec![0.0; 2 * h];
        for i in 0..n {
            let a = out.attention[i];
            axpy(a, &d_ctx, d_hs.row_mut(i));
            // clipped scores have zero slope
            let ds = if scores[i].abs() > CLIP { 0.0 } else { a * (d_att[i] - mean) };
            axpy(ds, &h_final, d_hs.row_mut(i));
            axpy(ds, hs.row(i), &mut d_final);
        }
        axpy(1.0, &d_final[..h], &mut d_hs.row_mut(0)[h..]);
        axpy(1.0, &d_final[h..], &mut d_hs.row_mut(n - 1)[..h]);
        bilstm_backward(&self.lstm, &cache, &ex.xs, &d_hs, &mut g.lstm, None);
        Ok((loss, g))
    }

    pub fn mean_loss(&self, examples: &[AttnExample]) -> Result<f64> {
        let mut total = 0.0;
        for ex in examples {
            let p = self.forward(&ex.xs)?.probs;
            total += p.iter().zip(&ex.target).map(|(p, y)| bce(*p, *y)).sum::<f64>() / self.labels.len() as f64;
        }
        Ok(total / examples.len().max(1) as f64)
    }

    /// Labels with probability >= `threshold`.
    pub fn predict_labels(&self, xs: &Tensor, threshold: f64) -> Result<BTreeSet<String>> {
        let p = self.forward(xs)?.probs;
        Ok(self
            .labels
            .iter()
            .zip(p)
            .filter(|(_, p)| *p >= threshold)
            .map(|(l, _)| l.clone())
            .collect())
    }

    pub fn gradient_check(&self, examples: &[AttnExample], step: f64, tolerance: f64) -> Result<crate::nn::GradCheckReport> {
        let scale = 1.0 / examples.len() as f64;
        let mut analytic = self.zeros_like();
        for ex in examples {
            let (_, g) = self.loss_and_grad(ex, scale)?;
            for ((_, a), (_, b)) in analytic.param_blocks_mut().into_iter().zip(g.param_blocks()) {
                a.add_assign(b);
            }
        }
        crate::nn::check_blocks(self, &analytic, |m| m.mean_loss(examples), step, tolerance)
    }
}

/// Attention over BiLSTM outputs `hs` (`n × 2H`, rows `[fwd; bwd]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub h_final: Vec<f64>,
    pub scores: Vec<f64>,
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
}

pub fn attend(hs: &Tensor, hidden: usize) -> Attention {
    let n = hs.rows();
    let mut h_final = vec![0.0; 2 * hidden];
    h_final[..hidden].copy_from_slice(&hs.row(0)[hidden..]);
    h_final[hidden..].copy_from_slice(&hs.row(n - 1)[..hidden]);
    let scores: Vec<f64> = (0..n).map(|i| dot(hs.row(i), &h_final)).collect();
    let weights = softmax(&scores);
    let mut context = vec![0.0; 2 * hidden];
    for (i, a) in weights.iter().enumerate() {
        axpy(*a, hs.row(i), &mut context);
    }
    Attention {
        h_final,
        scores,
        weights,
        context,
    }
}

/// Hashed vectors of the utterances in `subset`. An empty subset becomes a
/// single zero vector so the recurrence has something to read.
pub fn utterance_matrix(conv: &Conversation, subset: &[usize], text_dim: usize) -> Tensor {
    if subset.is_empty() {
        return Tensor::zeros(&[1, text_dim]);
    }
    let mut xs = Tensor::zeros(&[subset.len(), text_dim]);
    for (r, &i) in subset.iter().enumerate() {
        xs.row_mut(r).copy_from_slice(&encode_text_hashed(&conv.utterances[i].text, text_dim));
    }
    xs
}

/// Builds one example per conversation from the chosen utterances.
pub fn attn_examples(
    convs: &[Conversation],
    subsets: &[Vec<usize>],
    text_dim: usize,
    task: Task,
    label_map: &ExtractionLabelMap,
) -> Vec<AttnExample> {
    convs
        .iter()
        .zip(subsets)
        .map(|(c, s)| {
            let gold = c.gold_extraction.get(task);
            AttnExample {
                xs: utterance_matrix(c, s, text_dim),
                target: label_map.labels(task).iter().map(|l| gold.contains(l)).collect(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttnTrainConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub threshold: f64,
    pub clip_norm: f64,
    pub seed: u64,
    /// Stop after the epoch that crosses this budget.
    pub time_budget: Option<Duration>,
}

impl Default for AttnTrainConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            learning_rate: 0.005,
            batch_size: 16,
            max_epochs: 60,
            patience: 8,
            threshold: 0.5,
            clip_norm: 5.0,
            seed: 1,
            time_budget: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttnTrainReport {
    /// `(train loss, validation micro F1)` per epoch.
    pub epochs: Vec<(f64, f64)>,
    pub best_epoch: usize,
    pub wall_time: Duration,
}

/// Micro F1 of thresholded predictions against example targets.
pub fn attn_micro_f1(model: &AttnExtractor, examples: &[AttnExample], threshold: f64) -> Result<f64> {
    let mut pred = Vec::with_capacity(examples.len());
    let mut gold = Vec::with_capacity(examples.len());
    for ex in examples {
        pred.push(model.predict_labels(&ex.xs, threshold)?);
        gold.push(
            model
                .labels
                .iter()
                .zip(&ex.target)
                .filter(|(_, y)| **y)
                .map(|(l, _)| l.clone())
                .collect(),
        );
    }
    Ok(extraction_f1(&pred, &gold, &model.labels)?.micro_f1)
}

/// Adam on mean BCE with early stopping on validation micro F1.
pub fn train_attn(
    model: AttnExtractor,
    train: &[AttnExample],
    val: &[AttnExample],
    cfg: &AttnTrainConfig,
) -> Result<(AttnExtractor, AttnTrainReport)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    let started = Instant::now();
    let mut model = model;
    let sizes: Vec<usize> = model.param_blocks().iter().map(|(_, t)| t.len()).collect();
    let mut adam = AdamState::new(&sizes);
    let mut rng = SplitMix64::derive(cfg.seed, 0x6174_7472);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, usize, AttnExtractor)> = None;
    let mut epochs = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let scale = 1.0 / chunk.len() as f64;
            let parts: Vec<(f64, AttnExtractor)> = chunk
                .par_iter()
                .map(|&i| model.loss_and_grad(&train[i], scale))
                .collect::<Result<_>>()?;
            let mut iter = parts.into_iter();
            let (mut loss, mut grad) = iter.next().expect("non-empty chunk");
            for (l, g) in iter {
                loss += l;
                for ((_, a), (_, b)) in grad.param_blocks_mut().into_iter().zip(g.param_blocks()) {
                    a.add_assign(b);
                }
            }
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("attention loss in epoch {epoch}, batch {}", b + 1)));
            }
            loss_sum += loss;
            let mut gb: Vec<&mut Tensor> = grad.param_blocks_mut().into_iter().map(|(_, t)| t).collect();
            clip_global_norm(&mut gb, cfg.clip_norm);
            let grads: Vec<&Tensor> = grad.param_blocks().into_iter().map(|(_, t)| t).collect();
            let mut params: Vec<Option<&mut Tensor>> = model.param_blocks_mut().into_iter().map(|(_, t)| Some(t)).collect();
            adam_step(&mut params, &grads, &mut adam, cfg.learning_rate)?;
        }
        let val_f1 = attn_micro_f1(&model, val, cfg.threshold)?;
        let train_loss = loss_sum / train.len() as f64;
        info!("attn epoch {epoch}: train loss {train_loss:.6}, val micro F1 {val_f1:.4}");
        epochs.push((train_loss, val_f1));
        match &best {
            Some((f, _, _)) if val_f1 <= *f => {}
            _ => best = Some((val_f1, epoch, model.clone())),
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        let out_of_time = cfg.time_budget.is_some_and(|t| started.elapsed() >= t);
        if epoch - best_epoch >= cfg.patience || out_of_time {
            break;
        }
    }
    let (_, best_epoch, best_model) = best.expect("at least one epoch");
    Ok((
        best_model,
        AttnTrainReport {
            epochs,
            best_epoch,
            wall_time: started.elapsed(),
        },
    ))
}
