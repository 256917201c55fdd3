mod support;

use mobfuse_core::eval::{cosine_sim, jsd_slices, mape};
use proptest::prelude::*;
use support::metric_cases::{cosine_cases, reference_jsd, rows, MAPE_CASES};

#[test]
fn mape_cases() {
    for (i, c) in MAPE_CASES.iter().enumerate() {
        let m = mape(c.observed, c.simulated).unwrap();
        assert!(
            (m.percent - c.percent).abs() <= 1e-9,
            "case {i}: {}",
            m.percent
        );
        assert_eq!(m.skipped, c.skipped, "case {i}");
    }
    assert!(mape(&[0.0], &[1.0]).is_err());
    assert!(mape(&[1.0], &[]).is_err());
}

#[test]
fn cosine_cases_hold() {
    for (i, c) in cosine_cases().iter().enumerate() {
        let v = cosine_sim(&rows(c.a), &rows(c.b)).unwrap();
        assert!((v - c.value).abs() <= 1e-9, "case {i}: {v}");
    }
    assert!(cosine_sim(&[vec![0.0]], &[vec![1.0]]).is_err());
    assert!(cosine_sim(&[vec![1.0]], &[vec![1.0, 2.0]]).is_err());
}

#[test]
fn jsd_fixed_points() {
    assert!((jsd_slices(&[1.0, 0.0], &[0.0, 1.0]) - std::f64::consts::LN_2).abs() <= 1e-12);
    let p = [0.1, 0.2, 0.3, 0.4];
    assert_eq!(jsd_slices(&p, &p), 0.0);
}

fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, len).prop_filter_map("all zero", |v| {
        let s: f64 = v.iter().sum();
        (s > 0.0).then(|| v.iter().map(|x| x / s).collect())
    })
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..30).prop_flat_map(|n| (distribution(n), distribution(n)))
}

proptest! {
    #[test]
    fn jsd_symmetric_bounded_and_matches_definition((p, q) in pair()) {
        let a = jsd_slices(&p, &q);
        prop_assert_eq!(a, jsd_slices(&q, &p));
        prop_assert!((0.0..=std::f64::consts::LN_2 + 1e-15).contains(&a));
        prop_assert!((a - reference_jsd(&p, &q)).abs() < 1e-12);
        prop_assert_eq!(jsd_slices(&p, &p), 0.0);
    }
}
