//! Symmetric games, where both players have the same `(f, g, h)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixed_point::{iterate, residual_threshold};
use crate::game::{classify_game, Player, StoppingProfile, ValidatedGame, ValueFunction};
use crate::general::{
    relative_to, rounding_tolerance, LOCAL_TOL, snap, verify_equilibrium, EquilibriumReport, VERIFY_TOL,
};
use crate::stopping::{
    best_response_constraints, constrained_stopping_value, evaluate_payoffs, BrTag, Optimize, StoppingError,
    INDIFFERENCE_TOL, SOLVE_TOL,
};
use crate::zero_sum::GUARD_TOL;

#[derive(Debug, Clone, Error)]
pub enum SymmetricError {
    #[error("game is not symmetric")]
    NotSymmetric,
    #[error("f differs from h at state(s) {witnesses:?}")]
    FNotEqualH { witnesses: Vec<usize> },
    #[error("no case applies at state {state}: V does not solve V = max(f, αΠV)")]
    CaseGuardFailure { state: usize },
    #[error("war-of-attrition preconditions fail at state(s) {witnesses:?}")]
    PreconditionViolated { witnesses: Vec<usize> },
    #[error("candidate failed verification: {:?}", report.verdict)]
    VerificationFailed { report: Box<EquilibriumReport> },
    /// Not evidence that no symmetric equilibrium exists.
    #[error("no verified symmetric equilibrium after {} round(s); best residual {:e}", best.iterations, best.max_residual)]
    NonConvergence { best: Box<EquilibriumReport> },
    #[error(transparent)]
    Stopping(#[from] StoppingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SymmetricMethod {
    ClosedForm,
    WarOfAttrition,
    FixedPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricSolution {
    /// Used by both players.
    pub p: StoppingProfile,
    /// Shared value of both players.
    pub value: ValueFunction,
    pub method: SymmetricMethod,
    pub report: EquilibriumReport,
}

fn require_symmetric(game: &ValidatedGame) -> Result<(), SymmetricError> {
    if classify_game(game).is_symmetric {
        Ok(())
    } else {
        Err(SymmetricError::NotSymmetric)
    }
}

fn finish(
    game: &ValidatedGame,
    p: StoppingProfile,
    method: SymmetricMethod,
) -> Result<SymmetricSolution, SymmetricError> {
    let report = verify_equilibrium(game, &p, &p, rounding_tolerance(game, VERIFY_TOL));
    if !report.is_verified() {
        return Err(SymmetricError::VerificationFailed {
            report: Box::new(report),
        });
    }
    Ok(SymmetricSolution {
        value: report.v1.clone(),
        p,
        method,
        report,
    })
}

/// `V = max{f, αΠV}` by value iteration from `V⁰ = f`.
pub fn optimal_stopping_value(game: &ValidatedGame, tol: f64) -> Result<ValueFunction, SymmetricError> {
    require_symmetric(game)?;
    let f = &game.payoffs(Player::One).f;
    let everywhere = vec![true; game.num_states()];
    Ok(ValueFunction(constrained_stopping_value(
        game,
        &everywhere,
        f,
        Optimize::Max,
        tol,
    )))
}

/// Symmetric profile for `f = h` from the optimal stopping value `V` of `f`:
/// on `{αΠV < f < g}` each player stops with probability
/// `(f - αΠV) / (g - αΠV)`, on `{αΠV < f, g ≤ f}` with probability one, and
/// elsewhere never.
pub fn symmetric_profile(
    game: &ValidatedGame,
    value: &ValueFunction,
) -> Result<StoppingProfile, SymmetricError> {
    require_symmetric(game)?;
    let pay = game.payoffs(Player::One);
    let witnesses: Vec<usize> = (0..game.num_states()).filter(|&x| pay.f[x] != pay.h[x]).collect();
    if !witnesses.is_empty() {
        return Err(SymmetricError::FNotEqualH { witnesses });
    }
    let tol = GUARD_TOL * game.payoff_scale().max(1.0);
    let a_pi_v = game.discounted_expectation(value.as_slice());
    let mut p = Vec::with_capacity(a_pi_v.len());
    for (x, &c) in a_pi_v.iter().enumerate() {
        let (f, g, v) = (pay.f[x], pay.g[x], value[x]);
        let gap = (v - f.max(c)).abs();
        if gap.is_nan() || gap > tol {
            return Err(SymmetricError::CaseGuardFailure { state: x });
        }
        let px = if (c - f).abs() <= tol || c > f {
            0.0
        } else if g > f + tol {
            (f - c) / (g - c)
        } else {
            1.0
        };
        p.push(px);
    }
    Ok(StoppingProfile::from_clamped(p))
}

/// Closed-form symmetric equilibrium for `f = h`.
pub fn closed_form_solve(game: &ValidatedGame, tol: f64) -> Result<SymmetricSolution, SymmetricError> {
    let value = optimal_stopping_value(game, tol)?;
    let p = symmetric_profile(game, &value)?;
    finish(game, p, SymmetricMethod::ClosedForm)
}

/// `p = (f - αΠf) / (g - αΠf)` when `αΠf < f` and `g > f = h` everywhere;
/// the value is `f`.
pub fn war_of_attrition_profile(game: &ValidatedGame) -> Result<SymmetricSolution, SymmetricError> {
    require_symmetric(game)?;
    let pay = game.payoffs(Player::One);
    let a_pi_f = game.discounted_expectation(&pay.f);
    let witnesses: Vec<usize> = (0..game.num_states())
        .filter(|&x| !(a_pi_f[x] < pay.f[x] && pay.g[x] > pay.f[x] && pay.f[x] == pay.h[x]))
        .collect();
    if !witnesses.is_empty() {
        return Err(SymmetricError::PreconditionViolated { witnesses });
    }
    let p = a_pi_f
        .iter()
        .enumerate()
        .map(|(x, c)| (pay.f[x] - c) / (pay.g[x] - c))
        .collect();
    finish(game, StoppingProfile::from_clamped(p), SymmetricMethod::WarOfAttrition)
}

/// Smallest symmetric equilibrium stopping probability of the local game
/// with own payoffs continue/continue `c`, continue/stop `g`, stop/continue
/// `f`, stop/stop `h`. Candidates: 0 if `c ≥ f`, 1 if `h ≥ g`, and the root of
/// `(1 - s)(c - f) + s(g - h) = 0` inside `(0, 1)`. `tol` is relative to the
/// largest of the four payoffs.
pub fn symmetric_local_equilibrium(c: f64, f: f64, g: f64, h: f64, tol: f64) -> f64 {
    let tol = relative_to(tol, &[c, f, g, h]);
    if c >= f - tol {
        return 0.0;
    }
    let denom = (c - f) - (g - h);
    if denom != 0.0 {
        let s = (c - f) / denom;
        if s > 0.0 && s < 1.0 {
            return s;
        }
    }
    // c < f, so continuing against a continuing opponent is strictly worse;
    // with no interior root h ≥ g must hold (up to rounding).
    1.0
}

/// Expected payoff when both players stop with probability `s` in the local game.
fn symmetric_local_payoff(c: f64, f: f64, g: f64, h: f64, s: f64) -> f64 {
    (1.0 - s) * ((1.0 - s) * c + s * g) + s * ((1.0 - s) * f + s * h)
}

fn local_profile(game: &ValidatedGame, v: &[f64], tol: f64) -> StoppingProfile {
    let pay = game.payoffs(Player::One);
    let c = game.discounted_expectation(v);
    StoppingProfile::from_clamped(
        (0..c.len())
            .map(|x| symmetric_local_equilibrium(c[x], pay.f[x], pay.g[x], pay.h[x], tol))
            .collect(),
    )
}

/// Rounds between local refinements in the damped phase.
const REFINE_EVERY: usize = 10;
/// Newton steps per polish.
const NEWTON_STEPS: usize = 50;
/// Largest state count for which every support pattern is tried.
const ENUMERATION_LIMIT: usize = 6;
/// Damped logit updates per temperature.
const LOGIT_STEPS: usize = 100;

/// Local symmetric equilibrium payoff at each state for continuation values
/// `αΠv`, and its derivative in `αΠv`.
fn local_map(game: &ValidatedGame, v: &[f64], tol: f64) -> (Vec<f64>, Vec<f64>) {
    let pay = game.payoffs(Player::One);
    let c = game.discounted_expectation(v);
    (0..c.len())
        .map(|x| {
            let (f, g, h) = (pay.f[x], pay.g[x], pay.h[x]);
            let s = symmetric_local_equilibrium(c[x], f, g, h, tol);
            let slope = if s == 0.0 {
                1.0
            } else if s == 1.0 {
                0.0
            } else {
                let d = (f - c[x]) + (g - h);
                (f - h) * (g - h) / (d * d)
            };
            (symmetric_local_payoff(c[x], f, g, h, s), slope)
        })
        .unzip()
}

/// Newton's method on `v = local_map(v)`, whose Jacobian is
/// `I - diag(slope) αΠ`.
fn newton(game: &ValidatedGame, mut v: Vec<f64>, tol: f64) -> Vec<f64> {
    let n = v.len();
    let alpha = game.alpha();
    for _ in 0..NEWTON_STEPS {
        let (phi, slope) = local_map(game, &v, tol);
        let residual = DVector::from_iterator(n, v.iter().zip(&phi).map(|(a, b)| a - b));
        if residual.iter().zip(&v).all(|(r, vx)| r.abs() <= relative_to(tol, &[*vx])) {
            break;
        }
        let mut jac = DMatrix::<f64>::identity(n, n);
        for x in 0..n {
            for &(y, prob) in game.kernel().row(x) {
                jac[(x, y)] -= slope[x] * alpha * prob;
            }
        }
        let Some(step) = jac.lu().solve(&residual) else { break };
        if step.iter().any(|d| !d.is_finite()) {
            break;
        }
        v.iter_mut().zip(step.iter()).for_each(|(a, d)| *a -= d);
    }
    v
}

/// Support of a symmetric strategy at one state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Support {
    Stop,
    Continue,
    Mixed,
}

impl Support {
    const MARGIN: f64 = 1e-3;

    fn of(p: f64) -> Self {
        if p > 1.0 - Self::MARGIN {
            Support::Stop
        } else if p < Self::MARGIN {
            Support::Continue
        } else {
            Support::Mixed
        }
    }
}

/// Newton's method on the equilibrium equations with the support of each
/// state held fixed, in the unknowns `(V, s)`. At a mixed state `V` equals
/// the stopping payoff `(1-s) f + s h` and the player is indifferent:
/// `(1-s)(αΠV - f) + s (g - h) = 0`. Returns the implied profile.
fn pattern_newton(
    game: &ValidatedGame,
    pattern: &[Support],
    v0: &[f64],
    s0: &[f64],
    tol: f64,
) -> StoppingProfile {
    let pay = game.payoffs(Player::One);
    let n = v0.len();
    let alpha = game.alpha();
    let mut z: Vec<f64> = v0.iter().chain(s0).copied().collect();
    for x in 0..n {
        match pattern[x] {
            Support::Stop => z[n + x] = 1.0,
            Support::Continue => z[n + x] = 0.0,
            Support::Mixed => {}
        }
    }
    for _ in 0..NEWTON_STEPS {
        let c = game.discounted_expectation(&z[..n]);
        let mut residual = DVector::<f64>::zeros(2 * n);
        let mut limit = vec![0.0; 2 * n];
        let mut jac = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for x in 0..n {
            limit[x] = relative_to(tol, &[z[x]]);
            limit[n + x] = relative_to(tol, &[c[x], pay.f[x], pay.g[x], pay.h[x]]);
            let (f, g, h) = (pay.f[x], pay.g[x], pay.h[x]);
            let (v, s) = (z[x], z[n + x]);
            jac[(x, x)] = 1.0;
            match pattern[x] {
                Support::Stop => {
                    residual[x] = v - h;
                    residual[n + x] = s - 1.0;
                    jac[(n + x, n + x)] = 1.0;
                }
                Support::Continue => {
                    residual[x] = v - c[x];
                    for &(y, prob) in game.kernel().row(x) {
                        jac[(x, y)] -= alpha * prob;
                    }
                    residual[n + x] = s;
                    jac[(n + x, n + x)] = 1.0;
                }
                Support::Mixed => {
                    residual[x] = v - (1.0 - s) * f - s * h;
                    jac[(x, n + x)] = f - h;
                    residual[n + x] = (1.0 - s) * (c[x] - f) + s * (g - h);
                    for &(y, prob) in game.kernel().row(x) {
                        jac[(n + x, y)] += (1.0 - s) * alpha * prob;
                    }
                    jac[(n + x, n + x)] = (g - h) - (c[x] - f);
                }
            }
        }
        if residual.iter().zip(&limit).all(|(r, l)| r.abs() <= *l) {
            break;
        }
        let Some(step) = jac.lu().solve(&residual) else { break };
        if step.iter().any(|d| !d.is_finite()) {
            break;
        }
        z.iter_mut().zip(step.iter()).for_each(|(a, d)| *a -= d);
    }
    StoppingProfile::from_clamped(z[n..].iter().map(|s| s.clamp(0.0, 1.0)).collect())
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Keeps the best candidate seen across the search phases.
struct Tracker<'a> {
    game: &'a ValidatedGame,
    tol: f64,
    local_tol: f64,
    rounds: usize,
    best: Option<EquilibriumReport>,
}

impl Tracker<'_> {
    fn try_profile(&mut self, p: StoppingProfile) -> Option<SymmetricSolution> {
        let mut report = verify_equilibrium(self.game, &p, &p, self.tol);
        report.iterations = self.rounds;
        if report.is_verified() {
            return Some(SymmetricSolution {
                value: report.v1.clone(),
                p,
                method: SymmetricMethod::FixedPoint,
                report,
            });
        }
        if self.best.as_ref().is_none_or(|b| report.max_residual < b.max_residual) {
            self.best = Some(report);
        }
        None
    }

    fn try_values(&mut self, v: &[f64]) -> Option<SymmetricSolution> {
        let p = local_profile(self.game, v, self.local_tol);
        self.try_profile(p)
    }
}

/// Symmetric equilibrium search for any symmetric game. Candidates are
/// verified after each phase:
///
/// 1. value iteration `V ← payoff of the local symmetric equilibrium at αΠV`;
/// 2. Newton's method on the same equation;
/// 3. logit-smoothed best response with decreasing temperature, each stage
///    polished by Newton;
/// 4. on small games, Newton on every support pattern;
/// 5. damped best response `p ← (1-λ)p + λp'`, with `p'` = 1 on strict stops,
///    0 on strict continues and the local symmetric equilibrium on
///    indifferent states, and a local refinement every tenth round.
pub fn symmetric_fixed_point(
    game: &ValidatedGame,
    tol: f64,
    max_iter: usize,
    damping: f64,
) -> Result<SymmetricSolution, SymmetricError> {
    require_symmetric(game)?;
    let pay = game.payoffs(Player::One);
    let n = game.num_states();
    let ltol = LOCAL_TOL;
    let max_iter = max_iter.max(1);
    let lambda = damping.clamp(f64::MIN_POSITIVE, 1.0);
    let mut track = Tracker {
        game,
        tol: rounding_tolerance(game, tol),
        local_tol: ltol,
        rounds: 0,
        best: None,
    };

    let init: Vec<f64> = pay.f.iter().zip(&pay.h).map(|(f, h)| f.min(*h)).collect();
    let run = iterate(
        init.clone(),
        residual_threshold(SOLVE_TOL, game.alpha()),
        max_iter,
        |v, out| out.copy_from_slice(&local_map(game, v, ltol).0),
    );
    track.rounds = run.updates();
    if let Some(sol) = track.try_values(&run.value) {
        return Ok(sol);
    }

    for start in [run.value, init.clone()] {
        track.rounds += 1;
        if let Some(sol) = track.try_values(&newton(game, start, ltol)) {
            return Ok(sol);
        }
    }

    let scale = game.payoff_scale().max(1.0);
    let mut p = vec![0.5; n];
    let mut tau = scale;
    while tau > ltol * scale {
        for _ in 0..LOGIT_STEPS {
            let q = StoppingProfile::from_clamped(p.clone());
            let (v, _) = evaluate_payoffs(game, &q, &q)?;
            let c = game.discounted_expectation(v.as_slice());
            let mut change = 0.0_f64;
            for x in 0..n {
                let stop = (1.0 - p[x]) * pay.f[x] + p[x] * pay.h[x];
                let cont = (1.0 - p[x]) * c[x] + p[x] * pay.g[x];
                let next = (1.0 - lambda) * p[x] + lambda * logistic((stop - cont) / tau);
                change = change.max((next - p[x]).abs());
                p[x] = next;
            }
            track.rounds += 1;
            if change < 1e-12 {
                break;
            }
        }
        let q = StoppingProfile::from_clamped(p.clone());
        let (v, _) = evaluate_payoffs(game, &q, &q)?;
        let pattern: Vec<Support> = p.iter().map(|&px| Support::of(px)).collect();
        let polished = pattern_newton(game, &pattern, v.as_slice(), &p, ltol);
        track.rounds += 1;
        if let Some(sol) = track.try_profile(polished) {
            return Ok(sol);
        }
        tau *= 0.5;
    }

    if n <= ENUMERATION_LIMIT {
        let best_v = track.best.as_ref().map(|b| b.v1.0.clone());
        let starts: Vec<Vec<f64>> = best_v
            .into_iter()
            .chain([init, pay.f.clone(), pay.g.clone(), pay.h.clone()])
            .collect();
        let mixes = [0.5, 0.1, 0.9];
        for code in 0..3usize.pow(n as u32) {
            let pattern: Vec<Support> = (0..n)
                .map(|x| match code / 3usize.pow(x as u32) % 3 {
                    0 => Support::Continue,
                    1 => Support::Stop,
                    _ => Support::Mixed,
                })
                .collect();
            for start in &starts {
                for mix in mixes {
                    track.rounds += 1;
                    let candidate = pattern_newton(game, &pattern, start, &vec![mix; n], ltol);
                    if let Some(sol) = track.try_profile(candidate) {
                        return Ok(sol);
                    }
                }
            }
        }
    }

    let mut p = StoppingProfile::constant(n, 0.0);
    for round in 0..max_iter {
        track.rounds += 1;
        if let Some(sol) = track.try_profile(p.clone()) {
            return Ok(sol);
        }
        if round % REFINE_EVERY == REFINE_EVERY - 1 {
            let (v, _) = evaluate_payoffs(game, &p, &p)?;
            p = local_profile(game, v.as_slice(), ltol);
            continue;
        }
        let (constraint, aux) = best_response_constraints(game, Player::One, &p, INDIFFERENCE_TOL)?;
        let c = game.discounted_expectation(&aux.v_c);
        p = StoppingProfile::from_clamped(
            constraint
                .tags()
                .iter()
                .enumerate()
                .map(|(x, tag)| {
                    let target = match tag {
                        BrTag::MustStop => 1.0,
                        BrTag::MustContinue => 0.0,
                        BrTag::Indifferent => {
                            symmetric_local_equilibrium(c[x], pay.f[x], pay.g[x], pay.h[x], ltol)
                        }
                    };
                    snap((1.0 - lambda) * p[x] + lambda * target)
                })
                .collect(),
        );
    }
    Err(SymmetricError::NonConvergence {
        best: Box::new(track.best.expect("at least one candidate is checked")),
    })
}
