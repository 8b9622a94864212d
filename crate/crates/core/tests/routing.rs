mod common;

use common::{model, window};
use proptest::prelude::*;
use uttfilter::nn::{Ablations, HierarchicalModel, Window};

fn speaker_blocks(grad: &HierarchicalModel, code: &str) -> Vec<(String, Vec<f64>)> {
    grad.blocks()
        .into_iter()
        .filter(|(n, _)| n.split('.').nth(1) == Some(code))
        .map(|(n, t)| (n, t.data().to_vec()))
        .collect()
}

const CODES: [&str; 3] = ["dr", "pt", "ot"];

fn check_absent(m: &HierarchicalModel, data: &[Window], absent: usize) {
    let refs: Vec<&Window> = data.iter().collect();
    let (_, grad) = m.batch_loss_and_grad(&refs).unwrap();
    let blocks = speaker_blocks(&grad, CODES[absent]);
    // coarse and fine layers, two directions, three tensors each
    let layers = if m.coarse.is_some() { 2 } else { 1 };
    assert_eq!(blocks.len(), layers * 6);
    for (name, g) in blocks {
        assert!(g.iter().all(|x| *x == 0.0), "{name} has gradient without speaker {absent}");
    }
    let gate = grad.fine.gate.data()[absent];
    assert_eq!(gate, 0.0);
}

#[test]
fn absent_speakers_receive_exactly_zero_gradient() {
    for ab in [Ablations::default(), Ablations { no_hierarchy: true, ..Default::default() }] {
        let m = model(ab, 3);
        for absent in 0..3 {
            let others: Vec<usize> = (0..3).filter(|s| *s != absent).collect();
            let seq: Vec<usize> = (0..7).map(|i| others[(i * 5 + i / 2) % 2]).collect();
            check_absent(&m, &[window(absent as u64, &seq), window(9, &[others[1]])], absent);
        }
    }
}

#[test]
fn present_speakers_do_receive_gradient() {
    let m = model(Ablations::default(), 3);
    let refs = [window(1, &[0, 1, 2, 0])];
    let refs: Vec<&Window> = refs.iter().collect();
    let (_, grad) = m.batch_loss_and_grad(&refs).unwrap();
    for code in CODES {
        assert!(speaker_blocks(&grad, code).iter().any(|(_, g)| g.iter().any(|x| *x != 0.0)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn routing_holds_for_random_speaker_sequences(
        absent in 0usize..3,
        picks in prop::collection::vec(0usize..2, 1..9),
        seed in 0u64..1000,
    ) {
        let others: Vec<usize> = (0..3).filter(|s| *s != absent).collect();
        let seq: Vec<usize> = picks.iter().map(|p| others[*p]).collect();
        check_absent(&model(Ablations::default(), seed), &[window(seed, &seq)], absent);
    }
}
