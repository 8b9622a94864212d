//! Dense numerical core: tensors, LSTMs with backpropagation through time,
//! the multi-speaker layer and the hierarchical classifier.

mod checkpoint;
mod gradcheck;
mod loss;
mod lstm;
mod model;
mod ms;
mod tensor;

pub use checkpoint::{block_names, from_bytes, load_checkpoint, save_checkpoint, to_bytes, MAGIC};
pub use gradcheck::{
    analytic_gradient, check_blocks, compare_gradients, gradient_check, relative_error, BlockCheck, GradCheckReport,
    Parameters,
};
pub use loss::{bce, joint_loss, LossReport, LossSums, Predictions};
pub use lstm::{
    bilstm_backward, bilstm_forward, bilstm_forward_cached, cell_backward, cell_forward, BiLstmCache, CellCache,
    LstmCell, LstmParams,
};
pub use model::{Ablations, CoarseBranch, HierarchicalModel, ModelConfig, Window};
pub use ms::{ms_bilstm_backward, ms_bilstm_forward, ms_bilstm_forward_cached, MsBiLstmLayer, MsCache, SPEAKERS};
pub use tensor::Tensor;
pub(crate) use tensor::{axpy, dot, matvec_acc, matvec_t_acc, outer_acc};

pub const CLIP: f64 = 30.0;
pub const PROB_EPS: f64 = 1e-12;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x.clamp(-CLIP, CLIP)).exp())
}

#[inline]
pub(crate) fn tanh(x: f64) -> f64 {
    x.tanh()
}

pub fn softmax2(z: [f64; 2]) -> [f64; 2] {
    let z = z.map(|v| v.clamp(-CLIP, CLIP));
    let m = z[0].max(z[1]);
    let e = z.map(|v| (v - m).exp());
    let s = e[0] + e[1];
    [e[0] / s, e[1] / s]
}

/// Softmax over an arbitrary-length vector with inputs clipped to ±30.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().map(|v| v.clamp(-CLIP, CLIP)).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v.clamp(-CLIP, CLIP) - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}
