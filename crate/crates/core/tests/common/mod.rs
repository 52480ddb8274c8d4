//! Seeded random game generators shared by the integration tests.
#![allow(dead_code)]

use dynkin::{DynkinGame, PayoffTriple, StoppingProfile, ValidatedGame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ALPHAS: [f64; 3] = [0.5, 0.8, 0.95];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| i.to_string()).collect()
}

pub fn alpha(rng: &mut ChaCha8Rng) -> f64 {
    ALPHAS[rng.random_range(0..ALPHAS.len())]
}

/// Row-stochastic matrix with some zero entries and occasional absorbing rows.
pub fn kernel(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|x| {
            if rng.random_bool(0.1) {
                let mut row = vec![0.0; n];
                row[x] = 1.0;
                return row;
            }
            let mut row: Vec<f64> = (0..n)
                .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() })
                .collect();
            if row.iter().all(|&w| w == 0.0) {
                row[rng.random_range(0..n)] = 1.0;
            }
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|w| *w /= total);
            row
        })
        .collect()
}

/// Uniform on [-10, 10], or a small integer (to produce exact ties).
pub fn payoff(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random_bool(0.3) {
        rng.random_range(-5i32..=5) as f64
    } else {
        rng.random_range(-10.0..=10.0)
    }
}

pub fn payoffs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| payoff(rng)).collect()
}

pub fn size(rng: &mut ChaCha8Rng, max_n: usize) -> usize {
    rng.random_range(1..=max_n)
}

pub fn zero_sum(rng: &mut ChaCha8Rng, max_n: usize) -> ValidatedGame {
    let n = size(rng, max_n);
    let (a, k) = (alpha(rng), kernel(rng, n));
    let triple = PayoffTriple::new(payoffs(rng, n), payoffs(rng, n), payoffs(rng, n));
    DynkinGame::zero_sum(labels(n), a, k, triple).validate().unwrap()
}

/// Zero-sum game with `h` between `f` and `g` at every state.
pub fn med_zero_sum(rng: &mut ChaCha8Rng, max_n: usize) -> ValidatedGame {
    let n = size(rng, max_n);
    let (a, k) = (alpha(rng), kernel(rng, n));
    let f = payoffs(rng, n);
    let g = payoffs(rng, n);
    let h = (0..n)
        .map(|x| {
            let (lo, hi) = (f[x].min(g[x]), f[x].max(g[x]));
            match rng.random_range(0..4) {
                0 => lo,
                1 => hi,
                _ => lo + (hi - lo) * rng.random::<f64>(),
            }
        })
        .collect();
    DynkinGame::zero_sum(labels(n), a, k, PayoffTriple::new(f, g, h))
        .validate()
        .unwrap()
}

pub fn symmetric(rng: &mut ChaCha8Rng, max_n: usize, f_equals_h: bool) -> ValidatedGame {
    let n = size(rng, max_n);
    let (a, k) = (alpha(rng), kernel(rng, n));
    let f = payoffs(rng, n);
    let g = payoffs(rng, n);
    let h = if f_equals_h { f.clone() } else { payoffs(rng, n) };
    DynkinGame::symmetric(labels(n), a, k, PayoffTriple::new(f, g, h))
        .validate()
        .unwrap()
}

pub fn general(rng: &mut ChaCha8Rng, max_n: usize) -> ValidatedGame {
    let n = size(rng, max_n);
    general_with(rng, n)
}

pub fn general_with(rng: &mut ChaCha8Rng, n: usize) -> ValidatedGame {
    let (a, k) = (alpha(rng), kernel(rng, n));
    let p1 = PayoffTriple::new(payoffs(rng, n), payoffs(rng, n), payoffs(rng, n));
    let p2 = PayoffTriple::new(payoffs(rng, n), payoffs(rng, n), payoffs(rng, n));
    DynkinGame {
        states: labels(n),
        alpha: a,
        kernel: k,
        player1: p1,
        player2: p2,
    }
    .validate()
    .unwrap()
}

/// Any of the above, chosen at random.
pub fn mixed(rng: &mut ChaCha8Rng, max_n: usize) -> ValidatedGame {
    match rng.random_range(0..4) {
        0 => zero_sum(rng, max_n),
        1 => med_zero_sum(rng, max_n),
        2 => {
            let f_equals_h = rng.random_bool(0.5);
            symmetric(rng, max_n, f_equals_h)
        }
        _ => general(rng, max_n),
    }
}

/// Mix of pure and interior entries.
pub fn profile(rng: &mut ChaCha8Rng, n: usize) -> StoppingProfile {
    StoppingProfile::new(
        (0..n)
            .map(|_| match rng.random_range(0..4) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random::<f64>(),
            })
            .collect(),
    )
    .unwrap()
}

/// All pure profiles on `n` states, indexed by bit mask.
pub fn pure_profiles(n: usize) -> Vec<StoppingProfile> {
    (0..1u32 << n)
        .map(|mask| {
            StoppingProfile::new((0..n).map(|x| f64::from((mask >> x) & 1)).collect()).unwrap()
        })
        .collect()
}

pub mod oracle;
