//! Zero-sum games: player 1 receives `(f, g, h)` and player 2 the negated
//! mirror `(-g, -f, -h)`. Every equilibrium has the same value `V` (player 1's
//! payoff; player 2's is `-V`).
//!
//! * When `h` is the middle value of `(f, h, g)` at every state, a pure
//!   equilibrium exists and is built from the fixed point of
//!   `V = med(f, αΠV, g)` on `{f < g}`, `V = h` on `{f ≥ g}`.
//! * In general, the value is the fixed point of the per-state 2×2 matrix-game
//!   value operator, and a pure equilibrium exists iff
//!   `h ∨ αΠV ≥ f ∧ g` and `h ∧ αΠV ≤ f ∨ g` at every state.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixed_point::{iterate, residual_threshold};
use crate::game::{classify_game, med, med_condition_witnesses, Player, StoppingProfile, ValidatedGame, ValueFunction};
use crate::general::{rounding_tolerance, verify_equilibrium, EquilibriumReport, VERIFY_TOL};
use crate::stopping::{constrained_stopping_value, Optimize, SOLVE_TOL};

/// Tolerance used when comparing `αΠV` against payoffs in case guards.
pub const GUARD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Error)]
pub enum ZeroSumError {
    #[error("game is not zero-sum")]
    NotZeroSum,
    #[error("h is not the middle value at state(s) {witnesses:?}")]
    MedConditionViolated { witnesses: Vec<usize> },
    #[error("no case applies at state {state}: the value function does not solve the fixed-point equation")]
    NoCaseMatched { state: usize },
    #[error("value iteration did not converge (last change {last_change:e})")]
    MaxIterExceeded { best: ValueFunction, last_change: f64 },
    #[error("candidate failed verification: {:?}", report.verdict)]
    VerificationFailed { report: Box<EquilibriumReport> },
    #[error("degenerate local matrix game without a pure saddle point")]
    DegenerateGame,
}

fn require_zero_sum(game: &ValidatedGame) -> Result<(), ZeroSumError> {
    if classify_game(game).is_zero_sum {
        Ok(())
    } else {
        Err(ZeroSumError::NotZeroSum)
    }
}

/// Fixed point of `V = med(f, αΠV, g)` if `f < g`, else `h`, by monotone
/// iteration from `V⁰ = f ∧ h`. Requires the middle-value condition.
pub fn med_value_iteration(
    game: &ValidatedGame,
    tol: f64,
    max_iter: usize,
) -> Result<ValueFunction, ZeroSumError> {
    med_run(game, tol, max_iter).map(|(v, _)| v)
}

fn med_run(game: &ValidatedGame, tol: f64, max_iter: usize) -> Result<(ValueFunction, usize), ZeroSumError> {
    require_zero_sum(game)?;
    let pay = game.payoffs(Player::One);
    let witnesses = med_condition_witnesses(pay);
    if !witnesses.is_empty() {
        return Err(ZeroSumError::MedConditionViolated { witnesses });
    }
    let alpha = game.alpha();
    let kernel = game.kernel();
    let init = pay.f.iter().zip(&pay.h).map(|(f, h)| f.min(*h)).collect();
    let run = iterate(init, tol * (1.0 - alpha), max_iter, |v, out| {
        for (x, o) in out.iter_mut().enumerate() {
            *o = if pay.f[x] < pay.g[x] {
                med(pay.f[x], alpha * kernel.expect_at(x, v), pay.g[x])
            } else {
                pay.h[x]
            };
        }
    });
    if run.converged {
        let updates = run.updates();
        Ok((ValueFunction(run.value), updates))
    } else {
        Err(ZeroSumError::MaxIterExceeded {
            best: ValueFunction(run.value),
            last_change: run.last_change,
        })
    }
}

fn cmp_tol(a: f64, b: f64, tol: f64) -> Option<Ordering> {
    if a.is_nan() || b.is_nan() {
        None
    } else if a < b - tol {
        Some(Ordering::Less)
    } else if a > b + tol {
        Some(Ordering::Greater)
    } else {
        Some(Ordering::Equal)
    }
}

/// Case of the pure construction under the middle-value condition, keyed on
/// the signs of `f - g`, `αΠV - V` (when `f = g`) and the position of `αΠV`
/// relative to `f` and `g` (when `f < g`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MedCase {
    /// `f > g`: both stop.
    I,
    /// `f = g`, `αΠV < V`: player 1 stops, player 2 free.
    II,
    /// `f = g`, `αΠV = V`: equal, free.
    III,
    /// `f = g`, `αΠV > V`: player 2 stops, player 1 free.
    IV,
    /// `f < g < αΠV`: player 2 stops.
    V,
    /// `f < g = αΠV`: player 1 continues, player 2 free.
    VI,
    /// `f < αΠV < g`: both continue.
    VII,
    /// `f = αΠV < g`: player 2 continues, player 1 free.
    VIII,
    /// `αΠV < f < g`: player 1 stops.
    IX,
}

impl MedCase {
    /// Default pure choice `(p1, p2)` and which slots are free.
    fn defaults(self) -> ((f64, f64), (bool, bool)) {
        match self {
            MedCase::I => ((1.0, 1.0), (false, false)),
            MedCase::II => ((1.0, 1.0), (false, true)),
            MedCase::III => ((0.0, 0.0), (true, true)),
            MedCase::IV => ((1.0, 1.0), (true, false)),
            MedCase::V => ((0.0, 1.0), (false, false)),
            MedCase::VI => ((0.0, 0.0), (false, true)),
            MedCase::VII => ((0.0, 0.0), (false, false)),
            MedCase::VIII => ((0.0, 0.0), (true, false)),
            MedCase::IX => ((1.0, 0.0), (false, false)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PureAssembly {
    pub p1: StoppingProfile,
    pub p2: StoppingProfile,
    pub cases: Vec<MedCase>,
    pub report: EquilibriumReport,
}

/// Builds a pure equilibrium from a solution of the middle-value fixed-point
/// equation. Free slots default to stopping in cases II and IV and to
/// continuing in III, VI and VIII; a slot is flipped if the default fails
/// verification.
pub fn assemble_pure_profiles(
    game: &ValidatedGame,
    value: &ValueFunction,
    tol: f64,
) -> Result<PureAssembly, ZeroSumError> {
    require_zero_sum(game)?;
    let pay = game.payoffs(Player::One);
    let a_pi_v = game.discounted_expectation(value.as_slice());
    let n = game.num_states();

    let mut cases = Vec::with_capacity(n);
    let mut p1 = vec![0.0; n];
    let mut p2 = vec![0.0; n];
    let mut free = Vec::with_capacity(n);
    for x in 0..n {
        let (f, g, h, v, c) = (pay.f[x], pay.g[x], pay.h[x], value[x], a_pi_v[x]);
        let fg = cmp_tol(f, g, tol).ok_or(ZeroSumError::NoCaseMatched { state: x })?;
        let expected = if fg == Ordering::Less { med(f, c, g) } else { h };
        if (v - expected).abs() > tol {
            return Err(ZeroSumError::NoCaseMatched { state: x });
        }
        let case = match fg {
            Ordering::Greater => MedCase::I,
            Ordering::Equal => match cmp_tol(c, v, tol) {
                Some(Ordering::Less) => MedCase::II,
                Some(Ordering::Equal) => MedCase::III,
                Some(Ordering::Greater) => MedCase::IV,
                None => return Err(ZeroSumError::NoCaseMatched { state: x }),
            },
            Ordering::Less => match (cmp_tol(c, f, tol), cmp_tol(c, g, tol)) {
                (_, Some(Ordering::Greater)) => MedCase::V,
                (_, Some(Ordering::Equal)) => MedCase::VI,
                (Some(Ordering::Greater), Some(Ordering::Less)) => MedCase::VII,
                (Some(Ordering::Equal), Some(Ordering::Less)) => MedCase::VIII,
                (Some(Ordering::Less), Some(Ordering::Less)) => MedCase::IX,
                _ => return Err(ZeroSumError::NoCaseMatched { state: x }),
            },
        };
        let ((d1, d2), slots) = case.defaults();
        p1[x] = d1;
        p2[x] = d2;
        cases.push(case);
        free.push(slots);
    }

    let verify_tol = rounding_tolerance(game, VERIFY_TOL);
    let build = |p1: &[f64], p2: &[f64]| {
        let p1 = StoppingProfile::new(p1.to_vec()).expect("pure entries");
        let p2 = StoppingProfile::new(p2.to_vec()).expect("pure entries");
        let report = verify_equilibrium(game, &p1, &p2, verify_tol);
        (p1, p2, report)
    };
    let (mut q1, mut q2, mut report) = build(&p1, &p2);
    if !report.is_verified() {
        // Flip free slots at the states that fail, then re-verify once.
        for x in 0..n {
            if report.residuals[x].iter().any(|r| *r >= verify_tol) {
                if free[x].0 {
                    p1[x] = 1.0 - p1[x];
                }
                if free[x].1 {
                    p2[x] = 1.0 - p2[x];
                }
            }
        }
        (q1, q2, report) = build(&p1, &p2);
        if !report.is_verified() {
            return Err(ZeroSumError::VerificationFailed {
                report: Box::new(report),
            });
        }
    }
    Ok(PureAssembly {
        p1: q1,
        p2: q2,
        cases,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalSolution {
    pub value: f64,
    /// Probability that the row player (maximizer) stops.
    pub row_stop: f64,
    /// Probability that the column player (minimizer) stops.
    pub col_stop: f64,
}

impl LocalSolution {
    pub fn row_continue(&self) -> f64 {
        1.0 - self.row_stop
    }

    pub fn col_continue(&self) -> f64 {
        1.0 - self.col_stop
    }
}

/// Closed-form solution of the 2×2 zero-sum game
///
/// ```text
///              col continue   col stop
/// row continue      cc           cs
/// row stop          sc           ss
/// ```
///
/// with the row player maximizing. Pure saddle points are preferred, checked
/// in the order (stop, stop), (stop, continue), (continue, stop),
/// (continue, continue).
pub fn solve_local_matrix_game(
    cc: f64,
    cs: f64,
    sc: f64,
    ss: f64,
) -> Result<LocalSolution, ZeroSumError> {
    let m = [[cc, cs], [sc, ss]];
    for (i, j) in [(1usize, 1usize), (1, 0), (0, 1), (0, 0)] {
        let e = m[i][j];
        if e >= m[1 - i][j] && e <= m[i][1 - j] {
            return Ok(LocalSolution {
                value: e,
                row_stop: i as f64,
                col_stop: j as f64,
            });
        }
    }
    let denom = cc - cs - sc + ss;
    if denom == 0.0 || !denom.is_finite() {
        return Err(ZeroSumError::DegenerateGame);
    }
    let row_continue = (ss - sc) / denom;
    let col_continue = (ss - cs) / denom;
    debug_assert!(
        (-1e-9..=1.0 + 1e-9).contains(&row_continue) && (-1e-9..=1.0 + 1e-9).contains(&col_continue),
        "mixed solution outside [0, 1]: {row_continue}, {col_continue}"
    );
    Ok(LocalSolution {
        value: (cc * ss - cs * sc) / denom,
        row_stop: (1.0 - row_continue).clamp(0.0, 1.0),
        col_stop: (1.0 - col_continue).clamp(0.0, 1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZeroSumMethod {
    MedIteration,
    Shapley,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroSumSolution {
    /// Player 1's value; player 2's is the negation.
    pub value: ValueFunction,
    pub p1: StoppingProfile,
    pub p2: StoppingProfile,
    pub method: ZeroSumMethod,
    pub pure: bool,
    pub report: EquilibriumReport,
}

fn local_game_at(game: &ValidatedGame, x: usize, a_pi_v: f64) -> [f64; 4] {
    let pay = game.payoffs(Player::One);
    [a_pi_v, pay.g[x], pay.f[x], pay.h[x]]
}

/// Value iteration where each state's update is the value of its local 2×2
/// zero-sum game; the result is re-verified before it is returned.
pub fn shapley_solve(
    game: &ValidatedGame,
    tol: f64,
    max_iter: usize,
) -> Result<ZeroSumSolution, ZeroSumError> {
    require_zero_sum(game)?;
    let pay = game.payoffs(Player::One);
    let alpha = game.alpha();
    let kernel = game.kernel();
    let init = pay.f.iter().zip(&pay.h).map(|(f, h)| f.min(*h)).collect();
    let mut degenerate = false;
    let run = iterate(init, residual_threshold(tol, alpha), max_iter, |v, out| {
        for (x, o) in out.iter_mut().enumerate() {
            let [cc, cs, sc, ss] = local_game_at(game, x, alpha * kernel.expect_at(x, v));
            match solve_local_matrix_game(cc, cs, sc, ss) {
                Ok(sol) => *o = sol.value,
                Err(_) => {
                    degenerate = true;
                    *o = v[x];
                }
            }
        }
    });
    if degenerate {
        return Err(ZeroSumError::DegenerateGame);
    }
    if !run.converged {
        return Err(ZeroSumError::MaxIterExceeded {
            best: ValueFunction(run.value),
            last_change: run.last_change,
        });
    }

    let a_pi_v = game.discounted_expectation(&run.value);
    let mut p1 = Vec::with_capacity(a_pi_v.len());
    let mut p2 = Vec::with_capacity(a_pi_v.len());
    for (x, &c) in a_pi_v.iter().enumerate() {
        let [cc, cs, sc, ss] = local_game_at(game, x, c);
        let sol = solve_local_matrix_game(cc, cs, sc, ss)?;
        p1.push(sol.row_stop);
        p2.push(sol.col_stop);
    }
    let p1 = StoppingProfile::from_clamped(p1);
    let p2 = StoppingProfile::from_clamped(p2);
    let mut report = verify_equilibrium(game, &p1, &p2, rounding_tolerance(game, VERIFY_TOL));
    report.iterations = run.updates();
    if !report.is_verified() {
        return Err(ZeroSumError::VerificationFailed {
            report: Box::new(report),
        });
    }
    Ok(ZeroSumSolution {
        value: ValueFunction(run.value),
        pure: p1.is_pure() && p2.is_pure(),
        p1,
        p2,
        method: ZeroSumMethod::Shapley,
        report,
    })
}

/// Middle-value iteration followed by pure assembly.
pub fn med_solve(
    game: &ValidatedGame,
    tol: f64,
    max_iter: usize,
) -> Result<ZeroSumSolution, ZeroSumError> {
    let (value, updates) = med_run(game, tol, max_iter)?;
    let mut assembly = assemble_pure_profiles(game, &value, GUARD_TOL)?;
    assembly.report.iterations = updates;
    Ok(ZeroSumSolution {
        value,
        p1: assembly.p1,
        p2: assembly.p2,
        method: ZeroSumMethod::MedIteration,
        pure: true,
        report: assembly.report,
    })
}

/// Local pattern admitting a pure action pair at a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LocalPureCase {
    /// `g ≤ h ≤ f`: both stop.
    BothStop,
    /// `αΠV ≤ f ≤ h`: only player 1 stops.
    Player1Stops,
    /// `h ≤ g ≤ αΠV`: only player 2 stops.
    Player2Stops,
    /// `f ≤ αΠV ≤ g`: both continue.
    BothContinue,
}

impl LocalPureCase {
    pub fn number(self) -> u8 {
        match self {
            LocalPureCase::BothStop => 1,
            LocalPureCase::Player1Stops => 2,
            LocalPureCase::Player2Stops => 3,
            LocalPureCase::BothContinue => 4,
        }
    }

    fn actions(self) -> (f64, f64) {
        match self {
            LocalPureCase::BothStop => (1.0, 1.0),
            LocalPureCase::Player1Stops => (1.0, 0.0),
            LocalPureCase::Player2Stops => (0.0, 1.0),
            LocalPureCase::BothContinue => (0.0, 0.0),
        }
    }
}

/// Lowest-numbered pure pattern satisfied at a state, if any.
pub fn classify_local_pure(f: f64, g: f64, h: f64, a_pi_v: f64, tol: f64) -> Option<LocalPureCase> {
    let le = |a: f64, b: f64| a <= b + tol;
    if le(g, h) && le(h, f) {
        Some(LocalPureCase::BothStop)
    } else if le(a_pi_v, f) && le(f, h) {
        Some(LocalPureCase::Player1Stops)
    } else if le(h, g) && le(g, a_pi_v) {
        Some(LocalPureCase::Player2Stops)
    } else if le(f, a_pi_v) && le(a_pi_v, g) {
        Some(LocalPureCase::BothContinue)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PureExistence {
    /// Whether the pure-existence inequalities hold at each state.
    pub per_state: Vec<bool>,
    pub cases: Vec<Option<LocalPureCase>>,
    pub exists: bool,
    /// A pure equilibrium when one exists.
    pub equilibrium: Option<(StoppingProfile, StoppingProfile)>,
}

/// Tests `h ∨ αΠV ≥ f ∧ g` and `h ∧ αΠV ≤ f ∨ g` at every state, given the
/// game value `V`, and builds a pure equilibrium when they all hold.
pub fn pure_existence_check(game: &ValidatedGame, value: &ValueFunction, tol: f64) -> PureExistence {
    let pay = game.payoffs(Player::One);
    let a_pi_v = game.discounted_expectation(value.as_slice());
    let mut per_state = Vec::with_capacity(a_pi_v.len());
    let mut cases = Vec::with_capacity(a_pi_v.len());
    for (x, &c) in a_pi_v.iter().enumerate() {
        let (f, g, h) = (pay.f[x], pay.g[x], pay.h[x]);
        per_state.push(h.max(c) >= f.min(g) - tol && h.min(c) <= f.max(g) + tol);
        cases.push(classify_local_pure(f, g, h, c, tol));
    }
    let exists = per_state.iter().all(|&ok| ok);
    let equilibrium = if exists && cases.iter().all(Option::is_some) {
        let (s1, s2): (Vec<f64>, Vec<f64>) = cases.iter().map(|c| c.unwrap().actions()).unzip();
        Some((
            StoppingProfile::from_clamped(s1),
            StoppingProfile::from_clamped(s2),
        ))
    } else {
        None
    };
    PureExistence {
        per_state,
        cases,
        exists,
        equilibrium,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PureDiagnosticsReport {
    /// States with `f ∨ g < h`.
    pub m1: Vec<usize>,
    /// States with `h < f ∧ g`.
    pub m2: Vec<usize>,
    /// Constrained sup-stopping value of player 1 on `m1` (entries outside
    /// `m1` hold the boundary reward `f ∧ h`).
    pub v_m1: Option<Vec<f64>>,
    /// Constrained inf-stopping value on `m2` (boundary reward `g ∨ h`).
    pub v_m2: Option<Vec<f64>>,
    /// States `x ∈ m1` with `v_m1(x) > (f ∨ g)(x)`.
    pub witnesses_m1: Vec<usize>,
    /// States `x ∈ m2` with `v_m2(x) < (f ∧ g)(x)`.
    pub witnesses_m2: Vec<usize>,
    /// Per-state pure-existence inequalities, when the game value was supplied.
    pub criterion_holds: Option<Vec<bool>>,
    /// Set when a witness exists; sufficient but not necessary for the
    /// absence of pure equilibria.
    pub pure_impossible: bool,
    /// Exact answer from the pure-existence inequalities, when the value was supplied.
    pub pure_exists: Option<bool>,
}

impl PureDiagnosticsReport {
    pub fn witnesses(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.witnesses_m1.iter().chain(&self.witnesses_m2).copied().collect();
        w.sort_unstable();
        w.dedup();
        w
    }
}

/// Sufficient test for the non-existence of pure equilibria from payoffs and
/// two constrained stopping problems. With the game value, also runs the
/// exact pure-existence check.
pub fn pure_nonexistence_diagnostic(
    game: &ValidatedGame,
    value: Option<&ValueFunction>,
    tol: f64,
) -> Result<PureDiagnosticsReport, ZeroSumError> {
    require_zero_sum(game)?;
    let pay = game.payoffs(Player::One);
    let n = game.num_states();
    let in_m1: Vec<bool> = (0..n).map(|x| pay.f[x].max(pay.g[x]) < pay.h[x]).collect();
    let in_m2: Vec<bool> = (0..n).map(|x| pay.h[x] < pay.f[x].min(pay.g[x])).collect();
    let members = |mask: &[bool]| -> Vec<usize> { (0..n).filter(|&x| mask[x]).collect() };
    let (m1, m2) = (members(&in_m1), members(&in_m2));

    let v_m1 = (!m1.is_empty()).then(|| {
        let k1: Vec<f64> = (0..n)
            .map(|x| if in_m1[x] { pay.f[x] } else { pay.f[x].min(pay.h[x]) })
            .collect();
        constrained_stopping_value(game, &in_m1, &k1, Optimize::Max, SOLVE_TOL)
    });
    let v_m2 = (!m2.is_empty()).then(|| {
        let k2: Vec<f64> = (0..n)
            .map(|x| if in_m2[x] { pay.g[x] } else { pay.g[x].max(pay.h[x]) })
            .collect();
        constrained_stopping_value(game, &in_m2, &k2, Optimize::Min, SOLVE_TOL)
    });

    let witnesses_m1 = v_m1.as_ref().map_or_else(Vec::new, |v| {
        m1.iter()
            .copied()
            .filter(|&x| v[x] > pay.f[x].max(pay.g[x]) + tol)
            .collect()
    });
    let witnesses_m2 = v_m2.as_ref().map_or_else(Vec::new, |v| {
        m2.iter()
            .copied()
            .filter(|&x| v[x] < pay.f[x].min(pay.g[x]) - tol)
            .collect()
    });

    let check = value.map(|v| pure_existence_check(game, v, tol));
    Ok(PureDiagnosticsReport {
        pure_impossible: !witnesses_m1.is_empty() || !witnesses_m2.is_empty(),
        m1,
        m2,
        v_m1,
        v_m2,
        witnesses_m1,
        witnesses_m2,
        pure_exists: check.as_ref().map(|c| c.exists),
        criterion_holds: check.map(|c| c.per_state),
    })
}
