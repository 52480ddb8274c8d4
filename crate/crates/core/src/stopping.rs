//! One-player optimal stopping against a fixed opponent profile.
//!
//! Against an opponent who stops at `x` with probability `q(x)`, a player faces
//! an ordinary stopping problem on an augmented chain: at a non-absorbed state
//! `(x, C)` the player may stop and collect
//! `r(x) = (1 - q(x)) f(x) + q(x) h(x)`, or continue, in which case the opponent
//! stops (absorbing the player at `g(x)`) with probability `q(x)`, the chain is
//! killed with probability `(1 - q(x))(1 - α)`, and otherwise it moves by `Π`.
//! The absorbed states and the cemetery are not materialized: their values are
//! `g(x)` and `0`, which gives the continuation value
//! `(1 - q(x)) α (ΠV)(x) + q(x) g(x)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixed_point::{iterate, residual_threshold, sup_distance};
use crate::game::{Player, StoppingProfile, ValidatedGame, ValueFunction};

/// Default tolerance for fixed-point solves.
pub const SOLVE_TOL: f64 = 1e-12;
/// Default absolute tolerance for indifference between stopping and continuing.
pub const INDIFFERENCE_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

#[derive(Debug, Clone, Error)]
pub enum StoppingError {
    #[error("value iteration stopped after {iterations} iterations with residual {residual:e}")]
    MaxIterExceeded {
        best: Box<AuxiliaryValue>,
        residual: f64,
        iterations: usize,
    },
    #[error("payoff system is singular")]
    SingularSystem,
}

/// The stopping problem one player faces against a fixed opponent profile.
#[derive(Debug, Clone)]
pub struct AuxiliaryProblem<'a> {
    game: &'a ValidatedGame,
    player: Player,
    opponent: Vec<f64>,
    continue_reward: Vec<f64>,
    absorbed_reward: Vec<f64>,
}

impl<'a> AuxiliaryProblem<'a> {
    pub fn game(&self) -> &'a ValidatedGame {
        self.game
    }

    pub fn player(&self) -> Player {
        self.player
    }

    /// Opponent stopping probabilities `q`.
    pub fn opponent(&self) -> &[f64] {
        &self.opponent
    }

    /// Reward for stopping at a non-absorbed state.
    pub fn continue_reward(&self) -> &[f64] {
        &self.continue_reward
    }

    /// Reward once the opponent has stopped first (`g` of this player).
    pub fn absorbed_reward(&self) -> &[f64] {
        &self.absorbed_reward
    }

    /// `(1 - q) α ΠV + q g` at every state.
    pub fn continuation(&self, v: &[f64]) -> Vec<f64> {
        (0..v.len()).map(|x| self.continuation_at(x, v)).collect()
    }

    fn continuation_at(&self, x: usize, v: &[f64]) -> f64 {
        let q = self.opponent[x];
        let alpha = self.game.alpha();
        (1.0 - q) * alpha * self.game.kernel().expect_at(x, v) + q * self.absorbed_reward[x]
    }

    /// Wald-Bellman operator `V ↦ max{continuation(V), r}`.
    pub fn bellman(&self, v: &[f64]) -> Vec<f64> {
        (0..v.len())
            .map(|x| self.continuation_at(x, v).max(self.continue_reward[x]))
            .collect()
    }
}

pub fn build_auxiliary<'a>(
    game: &'a ValidatedGame,
    player: Player,
    opponent: &StoppingProfile,
) -> AuxiliaryProblem<'a> {
    assert_eq!(opponent.len(), game.num_states(), "opponent profile length");
    let own = game.payoffs(player);
    let q = opponent.as_slice().to_vec();
    let continue_reward = q
        .iter()
        .enumerate()
        .map(|(x, &q)| (1.0 - q) * own.f[x] + q * own.h[x])
        .collect();
    AuxiliaryProblem {
        game,
        player,
        opponent: q,
        continue_reward,
        absorbed_reward: own.g.clone(),
    }
}

/// Solution of the auxiliary stopping problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryValue {
    /// Value at the non-absorbed states `(x, C)`.
    pub v_c: Vec<f64>,
    /// Value at the absorbed states `(x, S)`.
    pub v_s: Vec<f64>,
    pub continuation_value: Vec<f64>,
    /// Sup-norm residual of the Wald-Bellman equation.
    pub residual: f64,
    pub iterations: usize,
}

/// Value iteration from `V⁰ = r` until the Wald-Bellman residual is below `tol`.
pub fn solve_wald_bellman(
    aux: &AuxiliaryProblem<'_>,
    tol: f64,
    max_iter: usize,
) -> Result<AuxiliaryValue, StoppingError> {
    assert!(tol > 0.0, "tolerance must be positive");
    let alpha = aux.game.alpha();
    let run = iterate(
        aux.continue_reward.clone(),
        residual_threshold(tol, alpha),
        max_iter,
        |v, out| {
            for (x, o) in out.iter_mut().enumerate() {
                *o = aux.continuation_at(x, v).max(aux.continue_reward[x]);
            }
        },
    );
    let continuation_value = aux.continuation(&run.value);
    let residual = sup_distance(&aux.bellman(&run.value), &run.value);
    let value = AuxiliaryValue {
        v_c: run.value,
        v_s: aux.absorbed_reward.clone(),
        continuation_value,
        residual,
        iterations: run.iterations,
    };
    if run.converged {
        Ok(value)
    } else {
        Err(StoppingError::MaxIterExceeded {
            residual,
            iterations: run.iterations,
            best: Box::new(value),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BrTag {
    /// Stopping strictly better than continuing.
    MustStop,
    Indifferent,
    /// Continuing strictly better than stopping.
    MustContinue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BestResponseConstraint(pub Vec<BrTag>);

impl BestResponseConstraint {
    pub fn tags(&self) -> &[BrTag] {
        &self.0
    }

    /// Stops exactly on the strict stopping set.
    pub fn strict_stop_profile(&self) -> StoppingProfile {
        StoppingProfile::from_clamped(
            self.0
                .iter()
                .map(|t| if *t == BrTag::MustStop { 1.0 } else { 0.0 })
                .collect(),
        )
    }
}

pub fn classify_best_response(
    aux: &AuxiliaryProblem<'_>,
    val: &AuxiliaryValue,
    tol: f64,
) -> BestResponseConstraint {
    BestResponseConstraint(
        val.continuation_value
            .iter()
            .zip(&aux.continue_reward)
            .map(|(&cont, &stop)| {
                if cont < stop - tol {
                    BrTag::MustStop
                } else if cont > stop + tol {
                    BrTag::MustContinue
                } else {
                    BrTag::Indifferent
                }
            })
            .collect(),
    )
}

/// Best-response constraints of `player` against `opponent`.
pub fn best_response_constraints(
    game: &ValidatedGame,
    player: Player,
    opponent: &StoppingProfile,
    tol: f64,
) -> Result<(BestResponseConstraint, AuxiliaryValue), StoppingError> {
    let aux = build_auxiliary(game, player, opponent);
    let val = solve_wald_bellman(&aux, SOLVE_TOL, DEFAULT_MAX_ITER)?;
    Ok((classify_best_response(&aux, &val, tol), val))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BestResponseCheck {
    pub is_best_response: bool,
    pub violations: Vec<usize>,
}

/// A profile is a best response iff it stops surely on `MustStop`, never on
/// `MustContinue`, and arbitrarily on `Indifferent` states.
pub fn is_best_response(
    profile: &StoppingProfile,
    constraints: &BestResponseConstraint,
) -> BestResponseCheck {
    assert_eq!(profile.len(), constraints.0.len(), "profile length");
    let violations: Vec<usize> = constraints
        .0
        .iter()
        .enumerate()
        .filter(|&(x, tag)| match tag {
            BrTag::MustStop => profile[x] != 1.0,
            BrTag::MustContinue => profile[x] != 0.0,
            BrTag::Indifferent => false,
        })
        .map(|(x, _)| x)
        .collect();
    BestResponseCheck {
        is_best_response: violations.is_empty(),
        violations,
    }
}

/// Exact expected payoffs of both players under a profile pair, by a dense
/// linear solve of the one-step decomposition
/// `V = p q h + p (1-q) f + (1-p) q g + (1-p)(1-q) α ΠV`.
pub fn evaluate_payoffs(
    game: &ValidatedGame,
    p1: &StoppingProfile,
    p2: &StoppingProfile,
) -> Result<(ValueFunction, ValueFunction), StoppingError> {
    let n = game.num_states();
    assert_eq!(p1.len(), n, "p1 length");
    assert_eq!(p2.len(), n, "p2 length");
    let alpha = game.alpha();

    // Both players share the system matrix: the continuation weight is symmetric in (p1, p2).
    let mut matrix = DMatrix::<f64>::identity(n, n);
    for x in 0..n {
        let w = (1.0 - p1[x]) * (1.0 - p2[x]) * alpha;
        if w == 0.0 {
            continue;
        }
        for &(y, prob) in game.kernel().row(x) {
            matrix[(x, y)] -= w * prob;
        }
    }
    let lu = matrix.lu();

    let solve = |player: Player| -> Result<ValueFunction, StoppingError> {
        let (own, opp) = match player {
            Player::One => (p1, p2),
            Player::Two => (p2, p1),
        };
        let pay = game.payoffs(player);
        let rhs = DVector::from_iterator(
            n,
            (0..n).map(|x| {
                let (p, q) = (own[x], opp[x]);
                p * q * pay.h[x] + p * (1.0 - q) * pay.f[x] + (1.0 - p) * q * pay.g[x]
            }),
        );
        let sol = lu.solve(&rhs).ok_or(StoppingError::SingularSystem)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(StoppingError::SingularSystem);
        }
        Ok(ValueFunction(sol.iter().copied().collect()))
    };

    Ok((solve(Player::One)?, solve(Player::Two)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Optimize {
    Max,
    Min,
}

/// Value of `sup` (or `inf`) over stopping times `τ ≤ τ_M` of `E[α^τ k(X_τ)]`,
/// where `τ_M` is the first exit time from `region`. Outside the region the
/// value is frozen at `k`. Never stopping inside the region contributes 0.
pub fn constrained_stopping_value(
    game: &ValidatedGame,
    region: &[bool],
    reward: &[f64],
    mode: Optimize,
    tol: f64,
) -> Vec<f64> {
    let n = game.num_states();
    assert_eq!(region.len(), n, "region length");
    assert_eq!(reward.len(), n, "reward length");
    let alpha = game.alpha();
    let kernel = game.kernel();
    let run = iterate(
        reward.to_vec(),
        residual_threshold(tol, alpha),
        usize::MAX,
        |v, out| {
            for x in 0..n {
                out[x] = if region[x] {
                    let cont = alpha * kernel.expect_at(x, v);
                    match mode {
                        Optimize::Max => reward[x].max(cont),
                        Optimize::Min => reward[x].min(cont),
                    }
                } else {
                    reward[x]
                };
            }
        },
    );
    run.value
}
