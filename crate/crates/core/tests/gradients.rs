mod common;

use common::{all_ablations, model, window};
use uttfilter::nn::{analytic_gradient, compare_gradients, gradient_check, Ablations};

const STEP: f64 = 1e-4;
const TOL: f64 = 1e-4;

#[test]
fn every_block_matches_finite_differences_under_every_ablation() {
    let data = [window(3, &[0, 1, 2, 1, 0])];
    for ab in all_ablations() {
        let m = model(ab, 11);
        let report = gradient_check(&m, &data, STEP, TOL).unwrap();
        assert!(report.passed(), "{ab:?}: {:?} worst {}", report.failing(), report.worst());
        assert_eq!(report.blocks.len(), m.blocks().len());
    }
}

#[test]
fn batched_windows_with_nondefault_beta() {
    let mut m = model(Ablations::default(), 5);
    m.config.beta = 0.3;
    let data = [window(1, &[0, 1, 2, 0]), window(2, &[1, 1, 0, 2, 2, 0])];
    let report = gradient_check(&m, &data, STEP, TOL).unwrap();
    assert!(report.passed(), "{:?}", report.failing());
}

#[test]
fn injected_faults_are_caught_in_the_right_block() {
    let m = model(Ablations::default(), 7);
    let data = [window(4, &[0, 1, 2, 1, 0])];
    let good = analytic_gradient(&m, &data).unwrap();
    let names: Vec<String> = good.blocks().into_iter().map(|(n, _)| n).collect();
    let sample = ["emb.speaker", "emb.semantic", "coarse.gate", "coarse.pt.fwd.wx", "coarse.head.w", "fine.bg.bwd.wh", "fine.ot.fwd.b", "fine.head.b"];
    for name in sample {
        let b = names.iter().position(|n| n == name).unwrap();
        let mut bad = good.clone();
        {
            let mut blocks = bad.blocks_mut();
            let t = &mut blocks[b].1;
            let j = t.len() / 2;
            let v = t.data()[j];
            t.data_mut()[j] = v + 1e-3 * v.abs().max(1e-2);
        }
        let report = compare_gradients(&m, &data, &bad, STEP, TOL).unwrap();
        assert_eq!(report.failing(), vec![name], "fault in {name}");
    }
}
