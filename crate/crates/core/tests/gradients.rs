mod common;

use common::*;
use mmkg_core::kgc::ScorerKind;

#[test]
fn adversarial_loss_gradients() {
    for seed in 0..3 {
        let r = grad_check_adv(seed);
        assert!(r.passed, "seed {seed}: {r:?}");
        assert!(r.checked > 50);
    }
}

#[test]
fn contrastive_loss_gradients() {
    for (seed, tau) in [(0, 0.5), (1, 1.0), (2, 2.0)] {
        let r = grad_check_con(seed, tau);
        assert!(r.passed, "seed {seed}, tau {tau}: {r:?}");
    }
}

#[test]
fn margin_loss_gradients_per_scorer() {
    for scorer in ScorerKind::ALL {
        for seed in 0..2 {
            let r = grad_check_margin(scorer, seed);
            assert!(r.passed, "{scorer}, seed {seed}: {r:?}");
        }
    }
}
