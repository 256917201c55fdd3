use mobfuse_core::adapter::*;
use mobfuse_core::recon::{Architecture, Model};
use mobfuse_core::{DemographicGroup, Slot, SlotGrid};
use proptest::prelude::*;

const C: usize = 15;
const K: usize = 96;

fn skewed(home: f64) -> [f64; C] {
    let mut d = [(1.0 - home) / 14.0; C];
    d[0] = home;
    d
}

fn uniform_base(n: usize) -> BasePosteriors {
    BasePosteriors::from_logits(n, &vec![0.0; n * K * C]).unwrap()
}

#[test]
fn uniform_posterior_reaches_sixty_percent_home() {
    let base = uniform_base(400);
    let target = TargetDistribution::new(DemographicGroup::all()[0], skewed(0.6)).unwrap();
    let cfg = AdapterTrainConfig {
        batch_size: 100,
        ..AdapterTrainConfig::default()
    };
    let fit = fit_adapter(&base, &target, &cfg).unwrap();
    assert!(fit.converged, "distance {}", fit.distance);
    assert!(fit.distance <= 0.01);
    assert!(fit.epochs <= 1000);
    for e in &fit.log {
        assert!(e.min_weight >= cfg.eps && e.max_weight <= cfg.max_w);
    }
}

#[test]
fn distance_never_increases_with_small_steps() {
    let base = uniform_base(20);
    let mut d = [0.02; C];
    d[0] = 0.4;
    d[1] = 0.34;
    let target = TargetDistribution::new(DemographicGroup::all()[5], d).unwrap();
    let cfg = AdapterTrainConfig {
        eta: 0.001,
        batch_size: 20,
        max_epochs: 300,
        ..AdapterTrainConfig::default()
    };
    let fit = fit_adapter(&base, &target, &cfg).unwrap();
    for w in fit.log.windows(2) {
        assert!(w[1].distance <= w[0].distance + 1e-12);
    }
}

#[test]
fn twelve_groups_and_flagged_failure() {
    let model = Model::new(
        Architecture {
            width: 8,
            blocks: 1,
            hidden: 8,
            dropout: 0.0,
        },
        3,
    )
    .unwrap();
    let inputs = vec![SlotGrid::filled(Slot::Masked, 2); 4];
    let targets: Vec<TargetDistribution> = DemographicGroup::all()
        .into_iter()
        .enumerate()
        .map(|(i, g)| TargetDistribution::new(g, skewed(0.3 + 0.03 * i as f64)).unwrap())
        .collect();
    let cfg = AdapterTrainConfig {
        max_epochs: 3,
        ..AdapterTrainConfig::default()
    };
    let fits = optimize_adapters(&model, &targets, &cfg, &inputs).unwrap();
    assert_eq!(fits.len(), 12);
    assert!(fits.iter().all(|f| !f.converged && f.epochs == 3));
    let again = optimize_adapters(&model, &targets, &cfg, &inputs).unwrap();
    assert_eq!(fits, again);
}

proptest! {
    #[test]
    fn shift_invariance(logits in prop::collection::vec(-4.0f64..4.0, K * C), a in prop::array::uniform15(-3.0f64..3.0), c in -5.0f64..5.0) {
        let shifted: [f64; C] = core::array::from_fn(|i| a[i] + c);
        let p = empirical_distribution(&apply_adapter(1, &logits, &a).unwrap());
        let q = empirical_distribution(&apply_adapter(1, &logits, &shifted).unwrap());
        let s: f64 = p.iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-9);
        for i in 0..C {
            prop_assert!((p[i] - q[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn step_stays_in_bounds(a in prop::array::uniform15(-20.0f64..20.0), p in prop::array::uniform15(0.0f64..1.0), d in prop::array::uniform15(0.0f64..1.0), loss in 0.0f64..50.0) {
        let next = adapter_step(&a, &p, &d, 0.5, loss, 0.01, 10.0);
        prop_assert!(next.iter().all(|w| (0.01..=10.0).contains(w)));
    }

    #[test]
    fn loss_grows_with_beta(home in 0.2f64..0.9, b1 in 0.1f64..3.0, extra in 0.1f64..3.0) {
        let p = [1.0 / 15.0; C];
        let d = skewed(home);
        prop_assert!(adapter_loss(&p, &d, 1.0, b1 + extra) > adapter_loss(&p, &d, 1.0, b1));
    }
}
