mod support;

use mobfuse_core::recon::{loss_and_grad, LossWeights};
use mobfuse_core::{ActivityCode, Slot, SlotGrid};
use support::loss_oracle::{
    compare, extrapolated_difference, objective, random_instance, Instance,
};

const K: usize = 96;

fn analytic(x: &Instance) -> (f64, Vec<f64>) {
    let grids: Vec<SlotGrid> = (0..x.batch)
        .map(|b| {
            let mut g = SlotGrid::empty(0);
            for k in 0..K {
                g.slots[k] = Slot::Act(ActivityCode::from_index(x.targets[b * K + k]));
            }
            g
        })
        .collect();
    let weights = LossWeights {
        w1: x.w1,
        w2: x.w2,
        w3: 0.0,
        class_weights: x.class_weights,
        w_l: x.w_l,
        w_s: x.w_s,
    };
    let mut grad = vec![0.0; x.logits.len()];
    let parts = loss_and_grad(
        x.batch, &x.logits, &grids, &x.scored, &x.real, &weights, &mut grad,
    )
    .unwrap();
    (parts.total, grad)
}

#[test]
fn analytic_gradient_matches_central_differences() {
    for seed in 0..3 {
        let x = random_instance(seed);
        let (total, grad) = analytic(&x);
        assert!((total - objective(&x, &x.logits)).abs() < 1e-12);
        let (rel, abs) = compare(&grad, &extrapolated_difference(&x, 1e-2), 1e-8);
        assert!(
            rel <= 1e-4 && abs <= 1e-10,
            "seed {seed}: rel {rel:e} abs {abs:e}"
        );
    }
}
