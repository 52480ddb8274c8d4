//! Reference computations written independently of the library's solvers.

use dynkin::{Player, StoppingProfile, ValidatedGame};
use nalgebra::{DMatrix, DVector};

/// Dense transition matrix.
pub fn dense_kernel(game: &ValidatedGame) -> DMatrix<f64> {
    let n = game.num_states();
    DMatrix::from_fn(n, n, |x, y| game.kernel().prob(x, y))
}

/// `steps`-step backward induction for the auxiliary stopping problem of
/// `player` against `q`, on the explicitly materialized chain with states
/// `(x, C)` (indices `0..n`) and absorbed states `(x, S)` (indices `n..2n`).
/// Returns the values at the `(x, C)` states.
pub fn augmented_backward_induction(
    game: &ValidatedGame,
    player: Player,
    q: &[f64],
    steps: usize,
) -> Vec<f64> {
    let n = game.num_states();
    let pay = game.payoffs(player);
    let pi = dense_kernel(game);
    let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
    let mut reward = DVector::<f64>::zeros(2 * n);
    for x in 0..n {
        for y in 0..n {
            m[(x, y)] = game.alpha() * (1.0 - q[x]) * pi[(x, y)];
        }
        m[(x, n + x)] = q[x];
        reward[x] = (1.0 - q[x]) * pay.f[x] + q[x] * pay.h[x];
        reward[n + x] = pay.g[x];
    }
    let mut w = reward.clone();
    for _ in 0..steps {
        let cont = &m * &w;
        w = DVector::from_fn(2 * n, |i, _| {
            if i < n {
                reward[i].max(cont[i])
            } else {
                reward[i]
            }
        });
    }
    w.rows(0, n).iter().copied().collect()
}

/// Exact optimal stopping value of the auxiliary problem by enumerating all
/// stopping sets and solving each linear system.
pub fn policy_enumeration(game: &ValidatedGame, player: Player, q: &[f64]) -> Vec<f64> {
    let n = game.num_states();
    assert!(n <= 10);
    let pay = game.payoffs(player);
    let pi = dense_kernel(game);
    let mut best = vec![f64::NEG_INFINITY; n];
    for mask in 0..1u32 << n {
        let stops = |x: usize| (mask >> x) & 1 == 1;
        let a = DMatrix::from_fn(n, n, |x, y| {
            let diag = if x == y { 1.0 } else { 0.0 };
            if stops(x) {
                diag
            } else {
                diag - game.alpha() * (1.0 - q[x]) * pi[(x, y)]
            }
        });
        let b = DVector::from_fn(n, |x, _| {
            if stops(x) {
                (1.0 - q[x]) * pay.f[x] + q[x] * pay.h[x]
            } else {
                q[x] * pay.g[x]
            }
        });
        let v = a.lu().solve(&b).unwrap();
        for x in 0..n {
            best[x] = best[x].max(v[x]);
        }
    }
    best
}

/// Expected payoffs of a profile pair by summing the series over `steps`
/// periods (no linear solve).
pub fn payoff_series(
    game: &ValidatedGame,
    p1: &StoppingProfile,
    p2: &StoppingProfile,
    steps: usize,
) -> (Vec<f64>, Vec<f64>) {
    let n = game.num_states();
    let pi = dense_kernel(game);
    let one = |player: Player, own: &StoppingProfile, opp: &StoppingProfile| {
        let pay = game.payoffs(player);
        let now = DVector::from_fn(n, |x, _| {
            let (p, q) = (own[x], opp[x]);
            p * q * pay.h[x] + p * (1.0 - q) * pay.f[x] + (1.0 - p) * q * pay.g[x]
        });
        let carry = DMatrix::from_fn(n, n, |x, y| {
            game.alpha() * (1.0 - own[x]) * (1.0 - opp[x]) * pi[(x, y)]
        });
        let mut v = DVector::<f64>::zeros(n);
        for _ in 0..steps {
            v = &now + &carry * &v;
        }
        v.iter().copied().collect::<Vec<f64>>()
    };
    (one(Player::One, p1, p2), one(Player::Two, p2, p1))
}

/// Whether `(p1, p2)` is an equilibrium according to exhaustive pure
/// deviations: no player gains at any state by switching to any pure
/// profile.
pub fn no_pure_deviation_gain(
    game: &ValidatedGame,
    p1: &StoppingProfile,
    p2: &StoppingProfile,
    pure: &[StoppingProfile],
    slack: f64,
) -> bool {
    let (v1, v2) = dynkin::evaluate_payoffs(game, p1, p2).unwrap();
    pure.iter().all(|d| {
        let (d1, _) = dynkin::evaluate_payoffs(game, d, p2).unwrap();
        let (_, d2) = dynkin::evaluate_payoffs(game, p1, d).unwrap();
        (0..game.num_states()).all(|x| d1[x] <= v1[x] + slack && d2[x] <= v2[x] + slack)
    })
}

pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}
