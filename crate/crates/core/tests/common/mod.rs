#![allow(dead_code)]

use uttfilter::corpus::{FineLabelSet, Task};
use uttfilter::features::{FeatureConfig, UtteranceInputs};
use uttfilter::nn::{Ablations, HierarchicalModel, ModelConfig, Window};
use uttfilter::rng::SplitMix64;

/// Feature dim 8 (2 per segment), hidden 4.
pub fn tiny_config(ablations: Ablations) -> ModelConfig {
    ModelConfig {
        features: FeatureConfig {
            text_dim: 2,
            speaker_dim: 2,
            position_dim: 2,
            position_bins: 4,
            semantic_dim: 2,
            semantic_types: 5,
            jaccard_min: 0.7,
        },
        hidden: 4,
        beta: 1.0,
        window_len: 128,
        ablations,
    }
}

pub fn all_ablations() -> Vec<Ablations> {
    (0..8)
        .map(|b| Ablations {
            no_hierarchy: b & 1 != 0,
            plain_bilstm: b & 2 != 0,
            no_context: b & 4 != 0,
        })
        .collect()
}

/// A window of `speakers.len()` utterances with random text and mixed labels.
pub fn window(seed: u64, speakers: &[usize]) -> Window {
    let n = speakers.len();
    let mut rng = SplitMix64::new(seed);
    let inputs = UtteranceInputs {
        text: (0..n).map(|_| vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)]).collect(),
        speakers: speakers.to_vec(),
        bins: (0..n).map(|i| 4 * i / n).collect(),
        mentions: (0..n)
            .map(|_| (0..rng.below(3)).map(|_| rng.below(5)).collect())
            .collect(),
    };
    let gold = (0..n)
        .map(|_| {
            let mut l = FineLabelSet::default();
            for t in Task::ALL {
                l.set(t, rng.bernoulli(0.4));
            }
            l
        })
        .collect();
    Window { inputs, gold }
}

pub fn model(ablations: Ablations, seed: u64) -> HierarchicalModel {
    HierarchicalModel::random(tiny_config(ablations), seed).unwrap()
}
