//! Equilibrium verification for arbitrary two-player games, and a
//! best-response search for games without exploitable structure.
//!
//! A profile pair with values `(V1, V2)` is an equilibrium iff at every state,
//! for each player with opponent stopping probability `q`,
//!
//! * `V(x) = max{cont(x), stop(x)}` where
//!   `cont = (1 - q) α ΠV + q g` and `stop = (1 - q) f + q h`,
//! * a positive stopping probability requires `stop ≥ cont`,
//! * a stopping probability below one requires `cont ≥ stop`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixed_point::{iterate, residual_threshold};
use crate::game::{Player, StoppingProfile, ValidatedGame, ValueFunction};
use crate::stopping::{
    best_response_constraints, evaluate_payoffs, BrTag, StoppingError, INDIFFERENCE_TOL, SOLVE_TOL,
};

/// Slack allowed on every verification condition.
pub const VERIFY_TOL: f64 = 1e-8;
/// `tol`, raised to a rounding allowance `1000 ε · scale / (1 - α)` for games
/// with very large payoffs, where exact solves carry absolute errors far above
/// any fixed slack.
pub fn rounding_tolerance(game: &ValidatedGame, tol: f64) -> f64 {
    let allowance = 1e3 * f64::EPSILON * game.payoff_scale() / (1.0 - game.alpha());
    tol.max(allowance)
}

/// Stopping probabilities above this (or below one minus this) activate the
/// corresponding dominance condition.
pub const ACTIVATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    /// Player 1's value equals the better of stopping and continuing.
    ValueP1,
    ValueP2,
    /// Player 1 stops with positive probability only if stopping is weakly better.
    StopP1,
    /// Player 1 continues with positive probability only if continuing is weakly better.
    ContinueP1,
    StopP2,
    ContinueP2,
}

impl Condition {
    pub const ALL: [Condition; 6] = [
        Condition::ValueP1,
        Condition::ValueP2,
        Condition::StopP1,
        Condition::ContinueP1,
        Condition::StopP2,
        Condition::ContinueP2,
    ];
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Condition::ValueP1 => "value equation (player 1)",
            Condition::ValueP2 => "value equation (player 2)",
            Condition::StopP1 => "stop dominance (player 1)",
            Condition::ContinueP1 => "continue dominance (player 1)",
            Condition::StopP2 => "stop dominance (player 2)",
            Condition::ContinueP2 => "continue dominance (player 2)",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum Verdict {
    Verified,
    Failed {
        state: usize,
        condition: Condition,
        residual: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub p1: StoppingProfile,
    pub p2: StoppingProfile,
    pub v1: ValueFunction,
    pub v2: ValueFunction,
    /// Per state, residuals in the order of [`Condition::ALL`].
    pub residuals: Vec<[f64; 6]>,
    pub max_residual: f64,
    pub verdict: Verdict,
    pub iterations: usize,
}

impl EquilibriumReport {
    pub fn is_verified(&self) -> bool {
        self.verdict == Verdict::Verified
    }
}

/// Continue and stop values of `player` at state `x`.
fn local_values(
    game: &ValidatedGame,
    player: Player,
    opponent: &StoppingProfile,
    a_pi_v: f64,
    x: usize,
) -> (f64, f64) {
    let pay = game.payoffs(player);
    let q = opponent[x];
    let cont = (1.0 - q) * a_pi_v + q * pay.g[x];
    let stop = (1.0 - q) * pay.f[x] + q * pay.h[x];
    (cont, stop)
}

/// Checks a profile pair against the full equilibrium characterization.
/// Values are computed exactly from the profiles.
pub fn verify_equilibrium(
    game: &ValidatedGame,
    p1: &StoppingProfile,
    p2: &StoppingProfile,
    tol: f64,
) -> EquilibriumReport {
    let (v1, v2) = match evaluate_payoffs(game, p1, p2) {
        Ok(v) => v,
        Err(StoppingError::SingularSystem) | Err(StoppingError::MaxIterExceeded { .. }) => {
            unreachable!("payoff system is invertible for a discount factor below one")
        }
    };
    let a_pi_v1 = game.discounted_expectation(v1.as_slice());
    let a_pi_v2 = game.discounted_expectation(v2.as_slice());

    let n = game.num_states();
    let mut residuals = Vec::with_capacity(n);
    let mut worst: Option<(usize, Condition, f64)> = None;
    let mut max_residual = 0.0_f64;
    for x in 0..n {
        let (c1, s1) = local_values(game, Player::One, p2, a_pi_v1[x], x);
        let (c2, s2) = local_values(game, Player::Two, p1, a_pi_v2[x], x);
        let dominance = |p: f64, cont: f64, stop: f64| {
            let stop_gap = if p > ACTIVATION_TOL { (cont - stop).max(0.0) } else { 0.0 };
            let cont_gap = if p < 1.0 - ACTIVATION_TOL { (stop - cont).max(0.0) } else { 0.0 };
            (stop_gap, cont_gap)
        };
        let (stop1, cont1) = dominance(p1[x], c1, s1);
        let (stop2, cont2) = dominance(p2[x], c2, s2);
        let row = [
            (v1[x] - c1.max(s1)).abs(),
            (v2[x] - c2.max(s2)).abs(),
            stop1,
            cont1,
            stop2,
            cont2,
        ];
        for (k, &r) in row.iter().enumerate() {
            let r = if r.is_nan() { f64::INFINITY } else { r };
            if r > max_residual {
                max_residual = r;
            }
            if r >= tol && worst.is_none_or(|(_, _, w)| r > w) {
                worst = Some((x, Condition::ALL[k], r));
            }
        }
        residuals.push(row);
    }

    let verdict = match worst {
        None => Verdict::Verified,
        Some((state, condition, residual)) => Verdict::Failed {
            state,
            condition,
            residual,
        },
    };
    EquilibriumReport {
        p1: p1.clone(),
        p2: p2.clone(),
        v1,
        v2,
        residuals,
        max_residual,
        verdict,
        iterations: 0,
    }
}

/// Local one-shot bimatrix game at a state. Index `[i][j]`: `i` is player 1's
/// action, `j` player 2's; 0 = continue, 1 = stop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalBimatrix {
    pub a: [[f64; 2]; 2],
    pub b: [[f64; 2]; 2],
}

impl LocalBimatrix {
    /// Entries at `x` given discounted continuation values `α(ΠV1)(x)`, `α(ΠV2)(x)`.
    pub fn at_state(game: &ValidatedGame, x: usize, a_pi_v1: f64, a_pi_v2: f64) -> Self {
        let p1 = game.payoffs(Player::One);
        let p2 = game.payoffs(Player::Two);
        LocalBimatrix {
            a: [[a_pi_v1, p1.g[x]], [p1.f[x], p1.h[x]]],
            b: [[a_pi_v2, p2.f[x]], [p2.g[x], p2.h[x]]],
        }
    }

    /// Expected payoffs when player `i` stops with probability `s_i`.
    pub fn payoffs(&self, s1: f64, s2: f64) -> (f64, f64) {
        let w = [[(1.0 - s1) * (1.0 - s2), (1.0 - s1) * s2], [s1 * (1.0 - s2), s1 * s2]];
        let mut u = (0.0, 0.0);
        for ((w, a), b) in w.iter().flatten().zip(self.a.iter().flatten()).zip(self.b.iter().flatten()) {
            u.0 += w * a;
            u.1 += w * b;
        }
        u
    }

    /// Nash equilibria as stopping-probability pairs: all pure ones, the
    /// completely mixed one, and partially mixed ones where a player is
    /// indifferent against a pure opponent action. `tol` is relative to the
    /// largest entry.
    pub fn equilibria(&self, tol: f64) -> Vec<(f64, f64)> {
        let tol = self.absolute(tol);
        let (a, b) = (&self.a, &self.b);
        let mut out = Vec::new();
        for i in [1usize, 0] {
            for j in [1usize, 0] {
                if a[i][j] >= a[1 - i][j] - tol && b[i][j] >= b[i][1 - j] - tol {
                    out.push((i as f64, j as f64));
                }
            }
        }
        // s2 leaving player 1 indifferent, s1 leaving player 2 indifferent.
        let s2 = indifference(a[0][0] - a[1][0], a[0][1] - a[1][1]);
        let s1 = indifference(b[0][0] - b[0][1], b[1][0] - b[1][1]);
        let interior = |s: f64| s > 0.0 && s < 1.0;
        if let (Some(s1), Some(s2)) = (s1, s2) {
            if interior(s1) && interior(s2) {
                out.push((s1, s2));
            }
        }
        if let Some(s1) = s1.filter(|s| interior(*s)) {
            for j in [1usize, 0] {
                if (a[0][j] - a[1][j]).abs() <= tol {
                    out.push((s1, j as f64));
                }
            }
        }
        if let Some(s2) = s2.filter(|s| interior(*s)) {
            for i in [1usize, 0] {
                if (b[i][0] - b[i][1]).abs() <= tol {
                    out.push((i as f64, s2));
                }
            }
        }
        out
    }

    /// Equilibrium preferred by: higher player-1 payoff, then higher player-2
    /// payoff, then more stopping.
    pub fn select(&self, tol: f64) -> (f64, f64) {
        let eqs = self.equilibria(tol);
        let tol = self.absolute(tol);
        let mut best: Option<((f64, f64), (f64, f64))> = None;
        for e in eqs {
            let u = self.payoffs(e.0, e.1);
            let better = match best {
                None => true,
                Some((b, bu)) => {
                    if (u.0 - bu.0).abs() > tol {
                        u.0 > bu.0
                    } else if (u.1 - bu.1).abs() > tol {
                        u.1 > bu.1
                    } else {
                        e.0 + e.1 > b.0 + b.1
                    }
                }
            };
            if better {
                best = Some((e, u));
            }
        }
        // A 2x2 game always has an equilibrium among the candidates above;
        // fall back to the pure pair with the smallest deviation gain otherwise.
        best.map(|(e, _)| e).unwrap_or_else(|| self.least_unstable_pure())
    }

    fn absolute(&self, tol: f64) -> f64 {
        let entries: Vec<f64> = self.a.iter().chain(&self.b).flatten().copied().collect();
        relative_to(tol, &entries)
    }

    fn least_unstable_pure(&self) -> (f64, f64) {
        let (a, b) = (&self.a, &self.b);
        let mut best = (1.0, 1.0);
        let mut best_gain = f64::INFINITY;
        for i in [1usize, 0] {
            for j in [1usize, 0] {
                let gain = (a[1 - i][j] - a[i][j]).max(0.0) + (b[i][1 - j] - b[i][j]).max(0.0);
                if gain < best_gain {
                    best_gain = gain;
                    best = (i as f64, j as f64);
                }
            }
        }
        best
    }
}

/// Solves `d0 + s (d1 - d0) = 0` for `s`.
fn indifference(d0: f64, d1: f64) -> Option<f64> {
    let denom = d0 - d1;
    if denom == 0.0 {
        None
    } else {
        Some(d0 / denom)
    }
}

/// Per-state local equilibrium selection given both players' value functions.
pub fn local_bimatrix_refine(
    game: &ValidatedGame,
    v1: &[f64],
    v2: &[f64],
) -> (StoppingProfile, StoppingProfile) {
    let a1 = game.discounted_expectation(v1);
    let a2 = game.discounted_expectation(v2);
    let (s1, s2): (Vec<f64>, Vec<f64>) = (0..game.num_states())
        .map(|x| LocalBimatrix::at_state(game, x, a1[x], a2[x]).select(LOCAL_TOL))
        .unzip();
    (
        StoppingProfile::from_clamped(s1),
        StoppingProfile::from_clamped(s2),
    )
}

/// Relative tolerance of local 2×2 comparisons.
pub(crate) const LOCAL_TOL: f64 = 1e-12;

/// `tol` scaled by the largest magnitude among `values`, and at least `tol`.
pub(crate) fn relative_to(tol: f64, values: &[f64]) -> f64 {
    tol * values.iter().fold(1.0_f64, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Verification slack.
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            tol: VERIFY_TOL,
            max_iter: 10_000,
            damping: 0.5,
            restarts: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum SearchError {
    /// No verified equilibrium within the budget. This is a limitation of
    /// the search, not evidence that no equilibrium exists.
    #[error("no verified equilibrium after {attempts} attempt(s); best residual {:e}", best.max_residual)]
    NonConvergence {
        best: Box<EquilibriumReport>,
        attempts: usize,
    },
    #[error(transparent)]
    Stopping(#[from] StoppingError),
}

/// Rounds between local bimatrix refinements.
const REFINE_EVERY: usize = 10;

/// Iterates `V ← payoffs of the selected local equilibrium at αΠV` for both
/// players, starting from the values of `init`. A fixed point, together with
/// the local equilibria that produced it, solves the equilibrium system
/// exactly; the result is verified either way.
pub fn local_equilibrium_iteration(
    game: &ValidatedGame,
    init: (&StoppingProfile, &StoppingProfile),
    cfg: &SearchConfig,
) -> Result<EquilibriumReport, SearchError> {
    let n = game.num_states();
    let (v1, v2) = evaluate_payoffs(game, init.0, init.1)?;
    let mut v: Vec<f64> = v1.0.into_iter().chain(v2.0).collect();
    let run = iterate(
        v.clone(),
        residual_threshold(SOLVE_TOL, game.alpha()),
        cfg.max_iter.max(1),
        |cur, out| {
            let a1 = game.discounted_expectation(&cur[..n]);
            let a2 = game.discounted_expectation(&cur[n..]);
            for x in 0..n {
                let local = LocalBimatrix::at_state(game, x, a1[x], a2[x]);
                let (s1, s2) = local.select(LOCAL_TOL);
                let (u1, u2) = local.payoffs(s1, s2);
                out[x] = u1;
                out[n + x] = u2;
            }
        },
    );
    v.copy_from_slice(&run.value);
    let (p1, p2) = local_bimatrix_refine(game, &v[..n], &v[n..]);
    let mut report = verify_equilibrium(game, &p1, &p2, cfg.tol);
    report.iterations = run.updates();
    Ok(report)
}

/// Local-equilibrium value iteration first, then damped simultaneous
/// best-response iteration with periodic local refinement from `init` and
/// from seeded random restarts.
pub fn best_response_search(
    game: &ValidatedGame,
    init: (&StoppingProfile, &StoppingProfile),
    cfg: &SearchConfig,
) -> Result<EquilibriumReport, SearchError> {
    let direct = local_equilibrium_iteration(game, init, cfg)?;
    if direct.is_verified() {
        return Ok(direct);
    }
    let mut first = search_from(game, init.0.clone(), init.1.clone(), cfg)?;
    if first.is_verified() {
        return Ok(first);
    }
    if direct.max_residual < first.max_residual {
        first = direct;
    }
    let n = game.num_states();
    let restarts: Vec<Result<EquilibriumReport, SearchError>> = (1..=cfg.restarts as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k);
            let p1 = StoppingProfile::from_clamped((0..n).map(|_| rng.random()).collect());
            let p2 = StoppingProfile::from_clamped((0..n).map(|_| rng.random()).collect());
            search_from(game, p1, p2, cfg)
        })
        .collect();

    let mut best = first;
    for r in restarts {
        let r = r?;
        if r.is_verified() {
            return Ok(r);
        }
        if r.max_residual < best.max_residual {
            best = r;
        }
    }
    Err(SearchError::NonConvergence {
        best: Box::new(best),
        attempts: cfg.restarts + 2,
    })
}

/// One restart. Returns the verified report, or the best candidate seen.
fn search_from(
    game: &ValidatedGame,
    mut p1: StoppingProfile,
    mut p2: StoppingProfile,
    cfg: &SearchConfig,
) -> Result<EquilibriumReport, SearchError> {
    let lambda = cfg.damping.clamp(f64::MIN_POSITIVE, 1.0);
    let mut best: Option<EquilibriumReport> = None;
    let mut keep = |report: EquilibriumReport, round: usize| -> Option<EquilibriumReport> {
        let mut report = report;
        report.iterations = round;
        if report.is_verified() {
            return Some(report);
        }
        if best.as_ref().is_none_or(|b| report.max_residual < b.max_residual) {
            best = Some(report);
        }
        None
    };

    for round in 0..cfg.max_iter.max(1) {
        let current = verify_equilibrium(game, &p1, &p2, cfg.tol);
        let (v1, v2) = (current.v1.clone(), current.v2.clone());
        if let Some(done) = keep(current, round) {
            return Ok(done);
        }

        if round % REFINE_EVERY == REFINE_EVERY - 1 {
            let (r1, r2) = local_bimatrix_refine(game, v1.as_slice(), v2.as_slice());
            let refined = verify_equilibrium(game, &r1, &r2, cfg.tol);
            if let Some(done) = keep(refined, round) {
                return Ok(done);
            }
            p1 = r1;
            p2 = r2;
            continue;
        }

        let (c1, _) = best_response_constraints(game, Player::One, &p2, INDIFFERENCE_TOL)?;
        let (c2, _) = best_response_constraints(game, Player::Two, &p1, INDIFFERENCE_TOL)?;
        p1 = damped_step(&p1, c1.tags(), lambda);
        p2 = damped_step(&p2, c2.tags(), lambda);
    }
    Ok(best.expect("at least one round is evaluated"))
}

/// `(1 - λ) p + λ p'` with `p'` = 1 on strict stops, 0 on strict continues,
/// unchanged on indifferent states.
pub(crate) fn damped_step(p: &StoppingProfile, tags: &[BrTag], lambda: f64) -> StoppingProfile {
    StoppingProfile::from_clamped(
        tags.iter()
            .enumerate()
            .map(|(x, tag)| {
                let target = match tag {
                    BrTag::MustStop => 1.0,
                    BrTag::MustContinue => 0.0,
                    BrTag::Indifferent => p[x],
                };
                snap((1.0 - lambda) * p[x] + lambda * target)
            })
            .collect(),
    )
}

/// Rounds probabilities within `ACTIVATION_TOL` of 0 or 1 onto the endpoint.
pub(crate) fn snap(p: f64) -> f64 {
    if p < ACTIVATION_TOL {
        0.0
    } else if p > 1.0 - ACTIVATION_TOL {
        1.0
    } else {
        p
    }
}
