//! Optimization: windowing, Adam, early stopping on validation mean PR-AUC.

use std::time::{Duration, Instant};

use log::{info, warn};
use rayon::prelude::*;

use crate::corpus::{Conversation, FineLabelSet};
use crate::error::{Error, Result};
use crate::eval::{fmt_sig, mean_pr_auc};
use crate::extract::ConceptDictionary;
use crate::features::{FeatureConfig, TextSource, UtteranceInputs};
use crate::nn::{Ablations, HierarchicalModel, ModelConfig, Predictions, Tensor, Window};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Windows per batch.
    pub batch_size: usize,
    pub window_len: usize,
    pub beta: f64,
    pub hidden_dim: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
    /// Start the output biases at the training-set label log-odds.
    pub prior_bias: bool,
    pub ablations: Ablations,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.0005,
            batch_size: 16,
            window_len: 128,
            beta: 1.0,
            hidden_dim: 32,
            max_epochs: 50,
            patience: 5,
            seed: 1,
            clip_norm: 5.0,
            prior_bias: true,
            ablations: Ablations::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be a non-negative number");
        }
        if self.batch_size == 0 || self.window_len == 0 || self.hidden_dim == 0 || self.max_epochs == 0 {
            return bad("batch_size, window_len, hidden_dim and max_epochs must be >= 1");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be a non-negative number");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }

    pub fn model_config(&self, features: FeatureConfig) -> ModelConfig {
        ModelConfig {
            features,
            hidden: self.hidden_dim,
            beta: self.beta,
            window_len: self.window_len,
            ablations: self.ablations,
        }
    }
}

/// A conversation with its weight-independent inputs precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedConversation {
    pub id: String,
    pub inputs: UtteranceInputs,
    pub gold: Vec<FineLabelSet>,
}

pub fn prepare_conversations(
    convs: &[Conversation],
    features: &FeatureConfig,
    text: TextSource<'_>,
    dict: &ConceptDictionary,
) -> Result<Vec<PreparedConversation>> {
    convs
        .par_iter()
        .map(|c| {
            Ok(PreparedConversation {
                id: c.id.clone(),
                inputs: UtteranceInputs::prepare(c, features, text, dict)?,
                gold: c.labels(),
            })
        })
        .collect()
}

/// `[start, end)` ranges of consecutive windows over `n` items.
pub fn window_ranges(n: usize, window_len: usize) -> Vec<(usize, usize)> {
    assert!(window_len >= 1, "window length must be positive");
    (0..n).step_by(window_len).map(|s| (s, (s + window_len).min(n))).collect()
}

/// Splits every conversation into non-overlapping windows, in order.
pub fn window_conversations(convs: &[PreparedConversation], window_len: usize) -> Vec<Window> {
    convs
        .iter()
        .flat_map(|c| {
            window_ranges(c.gold.len(), window_len).into_iter().map(move |(s, e)| Window {
                inputs: c.inputs.slice(s, e),
                gold: c.gold[s..e].to_vec(),
            })
        })
        .collect()
}

/// First and second moment estimates, one pair per parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: sizes.iter().map(|n| vec![0.0; *n]).collect(),
            v: sizes.iter().map(|n| vec![0.0; *n]).collect(),
        }
    }
}

/// One bias-corrected Adam update. `params[k] = None` marks a frozen block.
pub fn adam_step(params: &mut [Option<&mut Tensor>], grads: &[&Tensor], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(format!(
            "{} parameter blocks, {} gradients, {} optimizer slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (k, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.as_ref().is_some_and(|p| p.len() != g.len()) || g.len() != state.m[k].len() {
            return Err(Error::shape(format!("block {k}: gradient of {} for {} slots", g.len(), state.m[k].len())));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let Some(p) = p else { continue };
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for (((x, gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let mhat = *mi / c1;
            let vhat = *vi / c2;
            *x -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Scales `grads` so their joint L2 norm is at most `max_norm`. Returns the
/// norm before scaling.
pub fn clip_global_norm(grads: &mut [&mut Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.sum_squares()).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale(s));
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch with the highest validation AUC (first on ties).
    pub best_epoch: usize,
    pub wall_time: Duration,
}

impl TrainReport {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }

    /// Header `epoch,train_loss,val_auc`. Wall time is left out so the file
    /// is reproducible.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_auc\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{}\n", e.epoch, fmt_sig(e.train_loss), fmt_sig(e.val_auc)));
        }
        out
    }
}

/// Predictions for whole conversations, windowed as the model was trained.
pub fn predict_all(model: &HierarchicalModel, convs: &[PreparedConversation]) -> Result<Vec<Predictions>> {
    convs.par_iter().map(|c| model.predict(&c.inputs)).collect()
}

/// Mean PR-AUC over every utterance of `convs`.
pub fn evaluate_auc(model: &HierarchicalModel, convs: &[PreparedConversation]) -> Result<f64> {
    let preds = predict_all(model, convs)?;
    let probs: Vec<[f64; 3]> = preds.iter().flat_map(|p| p.fine.iter().copied()).collect();
    let gold: Vec<FineLabelSet> = convs.iter().flat_map(|c| c.gold.iter().copied()).collect();
    Ok(mean_pr_auc(&probs, &gold)?.mean)
}

/// Trains `model` and returns the parameters of the best validation epoch.
pub fn train(
    model: HierarchicalModel,
    train_set: &[PreparedConversation],
    val_set: &[PreparedConversation],
    cfg: &TrainConfig,
) -> Result<(HierarchicalModel, TrainReport)> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    let started = Instant::now();
    let windows = window_conversations(train_set, cfg.window_len);
    let mut model = model;
    if cfg.prior_bias {
        let gold: Vec<FineLabelSet> = train_set.iter().flat_map(|c| c.gold.iter().copied()).collect();
        model.set_prior_bias(&gold);
    }
    let trainable: Vec<bool> = model.blocks().iter().map(|(n, _)| model.is_trainable(n)).collect();
    let sizes: Vec<usize> = model.blocks().iter().map(|(_, t)| t.len()).collect();
    let mut adam = AdamState::new(&sizes);
    let mut rng = SplitMix64::derive(cfg.seed, 0x7472_6169_6e);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut best: Option<(f64, usize, HierarchicalModel)> = None;
    let mut epochs = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        rng.shuffle(&mut order);
        let mut loss_fine = 0.0;
        let mut loss_coarse = 0.0;
        let mut utterances = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Window> = chunk.iter().map(|&i| &windows[i]).collect();
            let (sums, mut grad) = model.batch_loss_and_grad(&batch)?;
            let batch_loss = sums.total(cfg.beta);
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss in epoch {epoch}, batch {}", b + 1)));
            }
            let mut gblocks: Vec<&mut Tensor> = grad
                .blocks_mut()
                .into_iter()
                .zip(&trainable)
                .filter(|(_, t)| **t)
                .map(|(g, _)| g.1)
                .collect();
            let norm = clip_global_norm(&mut gblocks, cfg.clip_norm);
            if !norm.is_finite() {
                return Err(Error::NonFinite(format!("gradient norm in epoch {epoch}, batch {}", b + 1)));
            }
            let grads: Vec<&Tensor> = grad.blocks().into_iter().map(|(_, t)| t).collect();
            let mut params: Vec<Option<&mut Tensor>> = model
                .blocks_mut()
                .into_iter()
                .zip(&trainable)
                .map(|((_, t), tr)| tr.then_some(t))
                .collect();
            adam_step(&mut params, &grads, &mut adam, cfg.learning_rate)?;
            loss_fine += sums.fine;
            loss_coarse += sums.coarse;
            utterances += sums.utterances;
        }
        let n = utterances as f64;
        let train_loss = loss_fine / n + cfg.beta * (loss_coarse / n);
        let val_auc = evaluate_auc(&model, val_set)?;
        info!("epoch {epoch}: train loss {train_loss:.6}, val mean PR-AUC {val_auc:.6}");
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_auc,
        });
        match &best {
            Some((auc, _, _)) if val_auc <= *auc => {}
            _ => best = Some((val_auc, epoch, model.clone())),
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        if epoch - best_epoch >= cfg.patience {
            info!("early stop after epoch {epoch}; best epoch {best_epoch}");
            break;
        }
    }
    let (_, best_epoch, best_model) = best.expect("at least one epoch");
    if best_epoch == epochs.len() && epochs.len() == cfg.max_epochs {
        warn!("validation AUC still improving at max_epochs = {}", cfg.max_epochs);
    }
    Ok((
        best_model,
        TrainReport {
            epochs,
            best_epoch,
            wall_time: started.elapsed(),
        },
    ))
}
