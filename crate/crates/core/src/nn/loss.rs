use crate::corpus::FineLabelSet;
use crate::error::{Error, Result};

use super::clamp_prob;

/// Per-utterance probabilities from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    /// Independent sigmoid outputs in task order (SYM, COM, MED).
    pub fine: Vec<[f64; 3]>,
    /// `[irrelevant, relevant]`; absent without the coarse branch.
    pub coarse: Option<Vec<[f64; 2]>>,
}

impl Predictions {
    pub fn len(&self) -> usize {
        self.fine.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fine.is_empty()
    }

    /// Probability of medical relevance from the coarse head.
    pub fn relevant(&self) -> Option<Vec<f64>> {
        self.coarse.as_ref().map(|c| c.iter().map(|p| p[1]).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub fine: f64,
    pub coarse: f64,
    pub fine_probs: Vec<[f64; 3]>,
    pub coarse_probs: Option<Vec<[f64; 2]>>,
}

/// Summed (not averaged) losses, so batches can pool utterance counts.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossSums {
    /// Sum over utterances of the mean BCE across the three classes.
    pub fine: f64,
    /// Sum over utterances of the two-class cross-entropy.
    pub coarse: f64,
    pub utterances: usize,
}

impl LossSums {
    pub fn add(&mut self, other: &LossSums) {
        self.fine += other.fine;
        self.coarse += other.coarse;
        self.utterances += other.utterances;
    }

    pub fn total(&self, beta: f64) -> f64 {
        let n = self.utterances.max(1) as f64;
        self.fine / n + beta * (self.coarse / n)
    }
}

pub fn bce(p: f64, y: bool) -> f64 {
    let p = clamp_prob(p);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

pub(crate) fn loss_sums(pred: &Predictions, gold: &[FineLabelSet]) -> Result<LossSums> {
    if pred.len() != gold.len() {
        return Err(Error::shape(format!("{} predictions for {} labels", pred.len(), gold.len())));
    }
    let mut sums = LossSums {
        utterances: gold.len(),
        ..Default::default()
    };
    for (i, g) in gold.iter().enumerate() {
        let y = g.as_array();
        sums.fine += (0..3).map(|c| bce(pred.fine[i][c], y[c])).sum::<f64>() / 3.0;
        if let Some(coarse) = &pred.coarse {
            sums.coarse += -clamp_prob(coarse[i][g.relevant() as usize]).ln();
        }
    }
    Ok(sums)
}

/// `L = L_fine + beta·L_coarse`, each a mean over utterances; `L_fine` also
/// averages over the three classes. The coarse target is relevance (any
/// fine label).
pub fn joint_loss(pred: &Predictions, gold: &[FineLabelSet], beta: f64) -> Result<LossReport> {
    if gold.is_empty() {
        return Err(Error::invalid("loss over an empty sequence"));
    }
    let sums = loss_sums(pred, gold)?;
    let n = gold.len() as f64;
    let fine = sums.fine / n;
    let coarse = sums.coarse / n;
    Ok(LossReport {
        total: fine + beta * coarse,
        fine,
        coarse,
        fine_probs: pred.fine.clone(),
        coarse_probs: pred.coarse.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Task;

    fn gold() -> Vec<FineLabelSet> {
        vec![FineLabelSet::default().with(Task::Med), FineLabelSet::default()]
    }

    #[test]
    fn beta_zero_is_fine_loss() {
        let pred = Predictions {
            fine: vec![[0.2, 0.3, 0.6], [0.1, 0.1, 0.1]],
            coarse: Some(vec![[0.4, 0.6], [0.7, 0.3]]),
        };
        let r = joint_loss(&pred, &gold(), 0.0).unwrap();
        assert_eq!(r.total, r.fine);
        let r = joint_loss(&pred, &gold(), 1.0).unwrap();
        assert!((r.total - (r.fine + r.coarse)).abs() < 1e-12);
        let want_coarse = (-(0.6f64).ln() - (0.7f64).ln()) / 2.0;
        assert!((r.coarse - want_coarse).abs() < 1e-15);
    }

    #[test]
    fn perfect_predictions_have_tiny_loss() {
        let pred = Predictions {
            fine: vec![[0.0, 0.0, 1.0], [0.0, 0.0, 0.0]],
            coarse: Some(vec![[0.0, 1.0], [1.0, 0.0]]),
        };
        let r = joint_loss(&pred, &gold(), 1.0).unwrap();
        assert!(r.total <= 3e-11, "{}", r.total);
    }

    #[test]
    fn length_mismatch_errors() {
        let pred = Predictions {
            fine: vec![[0.5; 3]],
            coarse: None,
        };
        assert!(joint_loss(&pred, &gold(), 1.0).is_err());
    }
}
