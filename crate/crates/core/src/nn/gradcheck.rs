use crate::error::{Error, Result};

use super::loss::LossSums;
use super::tensor::Tensor;
use super::model::{HierarchicalModel, Window};

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub entries: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.max_rel_error < self.tolerance)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.blocks
            .iter()
            .filter(|b| b.max_rel_error >= self.tolerance)
            .map(|b| b.name.as_str())
            .collect()
    }

    pub fn worst(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }
}

const RELATIVE_FLOOR: f64 = 1e-7;

/// `|a - n| / max(|a|, |n|, 1e-7)`. The floor sits above the rounding noise
/// of a central difference (about 1e-12 absolute at step 1e-4), so entries
/// that are essentially zero compare by absolute difference.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

fn mean_loss(model: &HierarchicalModel, data: &[Window]) -> Result<f64> {
    let mut sums = LossSums::default();
    for w in data {
        let p = model.forward(&w.inputs)?;
        sums.add(&super::loss::loss_sums(&p, &w.gold)?);
    }
    let l = sums.total(model.config.beta);
    if !l.is_finite() {
        return Err(Error::NonFinite("loss during gradient check".into()));
    }
    Ok(l)
}

/// Analytic gradient of the mean joint loss over `data`.
pub fn analytic_gradient(model: &HierarchicalModel, data: &[Window]) -> Result<HierarchicalModel> {
    let refs: Vec<&Window> = data.iter().collect();
    Ok(model.batch_loss_and_grad(&refs)?.1)
}

/// Models whose parameters are a fixed list of named tensors.
pub trait Parameters: Clone {
    fn param_blocks(&self) -> Vec<(String, &Tensor)>;
    fn param_blocks_mut(&mut self) -> Vec<(String, &mut Tensor)>;
}

impl Parameters for HierarchicalModel {
    fn param_blocks(&self) -> Vec<(String, &Tensor)> {
        self.blocks()
    }

    fn param_blocks_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.blocks_mut()
    }
}

/// Central differences of `loss` against `analytic`, block by block.
pub fn check_blocks<M: Parameters>(
    model: &M,
    analytic: &M,
    loss: impl Fn(&M) -> Result<f64>,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let mut probe = model.clone();
    let grads: Vec<(String, Vec<f64>)> = analytic
        .param_blocks()
        .into_iter()
        .map(|(n, t)| (n, t.data().to_vec()))
        .collect();
    let mut blocks = Vec::with_capacity(grads.len());
    for (b, (name, grad)) in grads.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for (j, &a) in grad.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::NonFinite(format!("analytic gradient in block {name}")));
            }
            let orig = model.param_blocks()[b].1.data()[j];
            probe.param_blocks_mut()[b].1.data_mut()[j] = orig + step;
            let up = loss(&probe)?;
            probe.param_blocks_mut()[b].1.data_mut()[j] = orig - step;
            let down = loss(&probe)?;
            probe.param_blocks_mut()[b].1.data_mut()[j] = orig;
            if !(up.is_finite() && down.is_finite()) {
                return Err(Error::NonFinite(format!("loss while probing block {name}")));
            }
            worst = worst.max(relative_error(a, (up - down) / (2.0 * step)));
        }
        blocks.push(BlockCheck {
            name: name.clone(),
            max_rel_error: worst,
            entries: grad.len(),
        });
    }
    Ok(GradCheckReport { blocks, tolerance })
}

/// Compares `analytic` against central differences of the mean loss.
pub fn compare_gradients(
    model: &HierarchicalModel,
    data: &[Window],
    analytic: &HierarchicalModel,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    check_blocks(model, analytic, |m| mean_loss(m, data), step, tolerance)
}

/// Finite-difference check of every parameter block. Frozen blocks are
/// included; their analytic gradient is zero and so is the numeric one.
pub fn gradient_check(
    model: &HierarchicalModel,
    data: &[Window],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let analytic = analytic_gradient(model, data)?;
    compare_gradients(model, data, &analytic, step, tolerance)
}
