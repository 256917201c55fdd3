//! Hand-computed metric cases and a direct JSD reference.

pub struct MapeCase {
    pub observed: &'static [f64],
    pub simulated: &'static [f64],
    pub percent: f64,
    pub skipped: usize,
}

pub const MAPE_CASES: [MapeCase; 10] = [
    MapeCase {
        observed: &[100.0, 200.0],
        simulated: &[110.0, 180.0],
        percent: 10.0,
        skipped: 0,
    },
    MapeCase {
        observed: &[50.0],
        simulated: &[25.0],
        percent: 50.0,
        skipped: 0,
    },
    MapeCase {
        observed: &[10.0, 20.0, 40.0],
        simulated: &[10.0, 20.0, 40.0],
        percent: 0.0,
        skipped: 0,
    },
    MapeCase {
        observed: &[4.0, 8.0],
        simulated: &[5.0, 6.0],
        percent: 25.0,
        skipped: 0,
    },
    // 1 + 0 + 1/2 + 3/4 over four pairs.
    MapeCase {
        observed: &[1.0, 2.0, 4.0, 8.0],
        simulated: &[2.0, 2.0, 2.0, 2.0],
        percent: 56.25,
        skipped: 0,
    },
    // Errors are relative to |observed|.
    MapeCase {
        observed: &[-10.0, 20.0],
        simulated: &[-12.0, 25.0],
        percent: 22.5,
        skipped: 0,
    },
    // A zero observation is left out of the mean.
    MapeCase {
        observed: &[0.0, 100.0],
        simulated: &[5.0, 90.0],
        percent: 10.0,
        skipped: 1,
    },
    MapeCase {
        observed: &[200.0],
        simulated: &[0.0],
        percent: 100.0,
        skipped: 0,
    },
    // (1/3 + 1/3 + 0) / 3.
    MapeCase {
        observed: &[3.0, 3.0, 3.0],
        simulated: &[4.0, 2.0, 3.0],
        percent: 200.0 / 9.0,
        skipped: 0,
    },
    MapeCase {
        observed: &[1000.0, 500.0, 250.0, 125.0],
        simulated: &[1100.0, 450.0, 275.0, 100.0],
        percent: 12.5,
        skipped: 0,
    },
];

pub struct CosineCase {
    pub a: &'static [&'static [f64]],
    pub b: &'static [&'static [f64]],
    pub value: f64,
}

const R2: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub fn cosine_cases() -> [CosineCase; 10] {
    [
        CosineCase {
            a: &[&[1.0, 0.0], &[0.0, 1.0]],
            b: &[&[1.0, 0.0], &[0.0, 1.0]],
            value: 1.0,
        },
        CosineCase {
            a: &[&[1.0, 0.0]],
            b: &[&[0.0, 1.0]],
            value: 0.0,
        },
        CosineCase {
            a: &[&[1.0, 2.0, 3.0]],
            b: &[&[2.0, 4.0, 6.0]],
            value: 1.0,
        },
        CosineCase {
            a: &[&[1.0, 1.0]],
            b: &[&[1.0, 0.0]],
            value: R2,
        },
        // dot 20, both norms sqrt(30).
        CosineCase {
            a: &[&[1.0, 2.0], &[3.0, 4.0]],
            b: &[&[4.0, 3.0], &[2.0, 1.0]],
            value: 2.0 / 3.0,
        },
        CosineCase {
            a: &[&[3.0, 4.0]],
            b: &[&[4.0, 3.0]],
            value: 0.96,
        },
        CosineCase {
            a: &[&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]],
            b: &[&[1.0, 1.0, 0.0], &[0.0, 0.0, 1.0]],
            value: 1.0 / 3f64.sqrt(),
        },
        CosineCase {
            a: &[&[2.0, 0.0], &[0.0, 2.0]],
            b: &[&[1.0, 1.0], &[1.0, 1.0]],
            value: R2,
        },
        CosineCase {
            a: &[&[1.0, -1.0]],
            b: &[&[-1.0, 1.0]],
            value: -1.0,
        },
        CosineCase {
            a: &[&[5.0, 0.0, 0.0], &[0.0, 0.0, 12.0]],
            b: &[&[0.0, 0.0, 0.0], &[0.0, 0.0, 1.0]],
            value: 12.0 / 13.0,
        },
    ]
}

pub fn rows(m: &[&[f64]]) -> Vec<Vec<f64>> {
    m.iter().map(|r| r.to_vec()).collect()
}

/// Natural-log JSD from the definition, normalizing both inputs first.
pub fn reference_jsd(p: &[f64], q: &[f64]) -> f64 {
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    let kl = |a: &[f64], m: &[f64]| -> f64 {
        a.iter()
            .zip(m)
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, y)| x * (x / y).ln())
            .sum()
    };
    let p: Vec<f64> = p.iter().map(|v| v / sp).collect();
    let q: Vec<f64> = q.iter().map(|v| v / sq).collect();
    let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
    0.5 * kl(&p, &m) + 0.5 * kl(&q, &m)
}
