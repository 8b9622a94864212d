use crate::error::{Error, Result};
use crate::rng::SplitMix64;

use super::Conversation;

/// Seeded train/val/test partition. Each part keeps the input order.
pub fn split_corpus(
    convs: &[Conversation],
    n_val: usize,
    n_test: usize,
    seed: u64,
) -> Result<(Vec<Conversation>, Vec<Conversation>, Vec<Conversation>)> {
    if n_val + n_test > convs.len() {
        return Err(Error::invalid(format!(
            "n_val + n_test = {} exceeds corpus size {}",
            n_val + n_test,
            convs.len()
        )));
    }
    let mut order: Vec<usize> = (0..convs.len()).collect();
    SplitMix64::new(seed).shuffle(&mut order);

    let mut test_idx = order[..n_test].to_vec();
    let mut val_idx = order[n_test..n_test + n_val].to_vec();
    let mut train_idx = order[n_test + n_val..].to_vec();
    test_idx.sort_unstable();
    val_idx.sort_unstable();
    train_idx.sort_unstable();

    let pick = |idx: &[usize]| idx.iter().map(|&i| convs[i].clone()).collect::<Vec<_>>();
    Ok((pick(&train_idx), pick(&val_idx), pick(&test_idx)))
}
