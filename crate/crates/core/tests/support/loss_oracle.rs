//! Slot-by-slot restatement of the differentiable part of the composite
//! loss, used as the objective for finite-difference gradient checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const C: usize = 15;
const K: usize = 96;

pub struct Instance {
    pub batch: usize,
    pub logits: Vec<f64>,
    /// Target code index per (sample, slot).
    pub targets: Vec<usize>,
    pub scored: Vec<bool>,
    pub real: Vec<bool>,
    pub class_weights: [f64; C],
    pub w1: f64,
    pub w2: f64,
    pub w_l: f64,
    pub w_s: f64,
}

/// A random instance whose targets are runs of codes, so both the change
/// and no-change branches of the transition term are exercised.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = 2;
    let mut targets = Vec::with_capacity(batch * K);
    for _ in 0..batch {
        let mut code = rng.random_range(0..C);
        for _ in 0..K {
            if rng.random_bool(0.15) {
                code = rng.random_range(0..C);
            }
            targets.push(code);
        }
    }
    Instance {
        batch,
        logits: (0..batch * K * C)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect(),
        targets,
        scored: (0..batch * K).map(|_| rng.random_bool(0.8)).collect(),
        real: (0..batch * K).map(|_| rng.random_bool(0.5)).collect(),
        class_weights: std::array::from_fn(|_| rng.random_range(0.5..2.0)),
        w1: rng.random_range(0.2..1.0),
        w2: rng.random_range(0.05..0.5),
        w_l: rng.random_range(0.5..3.0),
        w_s: rng.random_range(0.5..3.0),
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// w1 (w_l CE_real + w_s CE_syn) + w2 TR, each term a mean over its slots
/// or slot pairs.
pub fn objective(x: &Instance, logits: &[f64]) -> f64 {
    let p: Vec<Vec<f64>> = logits.chunks(C).map(softmax).collect();
    let (mut real, mut nr, mut syn, mut ns) = (0.0, 0, 0.0, 0);
    #[allow(clippy::needless_range_loop)]
    for i in 0..x.batch * K {
        if !x.scored[i] {
            continue;
        }
        let y = x.targets[i];
        let l = -x.class_weights[y] * p[i][y].max(1e-12).ln();
        if x.real[i] {
            real += l;
            nr += 1;
        } else {
            syn += l;
            ns += 1;
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    let (mut tr, mut nt) = (0.0, 0);
    for b in 0..x.batch {
        for k in 0..K - 1 {
            let i = b * K + k;
            if !(x.scored[i] && x.scored[i + 1]) {
                continue;
            }
            let same: f64 = (0..C).map(|c| p[i][c] * p[i + 1][c]).sum();
            tr += if x.targets[i] != x.targets[i + 1] {
                -(1.0 - same).max(1e-12).ln()
            } else {
                -same.max(1e-12).ln()
            };
            nt += 1;
        }
    }
    x.w1 * (x.w_l * mean(real, nr) + x.w_s * mean(syn, ns)) + x.w2 * mean(tr, nt)
}

pub fn central_difference(x: &Instance, h: f64) -> Vec<f64> {
    let mut z = x.logits.clone();
    (0..z.len())
        .map(|i| {
            let v = z[i];
            z[i] = v + h;
            let up = objective(x, &z);
            z[i] = v - h;
            let down = objective(x, &z);
            z[i] = v;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest relative error over entries whose magnitude reaches `floor`, and
/// largest absolute error over the rest.
/// Richardson extrapolation of two central differences, (4 D(h/2) - D(h)) / 3.
/// The truncation error drops to O(h^4), so a step large enough to keep
/// round-off far below the smallest checked entries can be used.
pub fn extrapolated_difference(x: &Instance, h: f64) -> Vec<f64> {
    let coarse = central_difference(x, h);
    let fine = central_difference(x, 0.5 * h);
    coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| (4.0 * f - c) / 3.0)
        .collect()
}

pub fn compare(analytic: &[f64], numeric: &[f64], floor: f64) -> (f64, f64) {
    let (mut rel, mut abs) = (0.0f64, 0.0f64);
    for (a, n) in analytic.iter().zip(numeric) {
        let scale = a.abs().max(n.abs());
        if scale >= floor {
            rel = rel.max((a - n).abs() / scale);
        } else {
            abs = abs.max((a - n).abs());
        }
    }
    (rel, abs)
}
