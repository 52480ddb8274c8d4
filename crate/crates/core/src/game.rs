//! Game data model: state space, transition kernel, payoff triples, validation
//! and structural classification.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound on the number of states accepted by [`DynkinGame::validate`].
pub const MAX_STATES: usize = 10_000;

/// Absolute tolerance on kernel row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("state space is empty")]
    EmptyStateSpace,
    #[error("state label at position {position} is empty")]
    EmptyLabel { position: usize },
    #[error("duplicate state label {label:?}")]
    DuplicateLabel { label: String },
    #[error("{states} states declared, limit is {limit}")]
    ExplicitLimit { states: usize, limit: usize },
    #[error("discount factor {alpha} outside the open interval (0, 1)")]
    AlphaRange { alpha: f64 },
    #[error("{field}: expected {expected} entries, found {found}")]
    LengthMismatch {
        field: String,
        expected: usize,
        found: usize,
    },
    #[error("{field} at state {state:?} is not finite")]
    NonFiniteEntry { field: String, state: String },
    #[error("kernel[{state:?}][{column:?}] = {value} is outside [0, 1]")]
    ProbabilityRange {
        state: String,
        column: String,
        value: f64,
    },
    #[error("kernel row {state:?} sums to {sum}, expected 1")]
    RowSum { state: String, sum: f64 },
}

/// Every violation found while validating a game.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ValidationErrors(pub Vec<GameError>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid game ({} violation(s))", self.0.len())?;
        for e in &self.0 {
            write!(f, "\n  - {e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Player {
    One,
    Two,
}

impl Player {
    pub fn opponent(self) -> Player {
        match self {
            Player::One => Player::Two,
            Player::Two => Player::One,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Player::One => 0,
            Player::Two => 1,
        }
    }
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Player::One => write!(f, "player 1"),
            Player::Two => write!(f, "player 2"),
        }
    }
}

/// Payoffs of one player: `f` if this player stops strictly first, `g` if the
/// opponent stops strictly first, `h` on simultaneous stopping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffTriple {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl PayoffTriple {
    pub fn new(f: Vec<f64>, g: Vec<f64>, h: Vec<f64>) -> Self {
        PayoffTriple { f, g, h }
    }

    /// The opponent's triple in a zero-sum game: `(-g, -f, -h)`.
    pub fn zero_sum_opponent(&self) -> PayoffTriple {
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        PayoffTriple {
            f: neg(&self.g),
            g: neg(&self.f),
            h: neg(&self.h),
        }
    }

    fn max_abs(&self) -> f64 {
        self.f
            .iter()
            .chain(&self.g)
            .chain(&self.h)
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// Unvalidated game description, as authored or parsed from a file.
#[derive(Debug, Clone, PartialEq)]
pub struct DynkinGame {
    pub states: Vec<String>,
    pub alpha: f64,
    pub kernel: Vec<Vec<f64>>,
    pub player1: PayoffTriple,
    pub player2: PayoffTriple,
}

impl DynkinGame {
    /// Zero-sum game: player 1 receives `(f, g, h)`, player 2 the negated
    /// mirror `(-g, -f, -h)`.
    pub fn zero_sum(
        states: Vec<String>,
        alpha: f64,
        kernel: Vec<Vec<f64>>,
        payoffs: PayoffTriple,
    ) -> Self {
        let player2 = payoffs.zero_sum_opponent();
        DynkinGame {
            states,
            alpha,
            kernel,
            player1: payoffs,
            player2,
        }
    }

    /// Symmetric game: both players receive the same triple.
    pub fn symmetric(
        states: Vec<String>,
        alpha: f64,
        kernel: Vec<Vec<f64>>,
        payoffs: PayoffTriple,
    ) -> Self {
        DynkinGame {
            states,
            alpha,
            kernel,
            player1: payoffs.clone(),
            player2: payoffs,
        }
    }

    /// Checks every invariant and returns the full list of violations.
    pub fn validate(self) -> Result<ValidatedGame, ValidationErrors> {
        let mut errors = Vec::new();
        let n = self.states.len();

        if n == 0 {
            errors.push(GameError::EmptyStateSpace);
        }
        if n > MAX_STATES {
            // Nothing else is worth checking at this size.
            return Err(ValidationErrors(vec![GameError::ExplicitLimit {
                states: n,
                limit: MAX_STATES,
            }]));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, label) in self.states.iter().enumerate() {
            if label.is_empty() {
                errors.push(GameError::EmptyLabel { position: i });
            } else if index.insert(label.clone(), i).is_some() {
                errors.push(GameError::DuplicateLabel {
                    label: label.clone(),
                });
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            errors.push(GameError::AlphaRange { alpha: self.alpha });
        }

        let label = |i: usize| {
            self.states
                .get(i)
                .cloned()
                .unwrap_or_else(|| format!("#{i}"))
        };

        if self.kernel.len() != n {
            errors.push(GameError::LengthMismatch {
                field: "kernel".into(),
                expected: n,
                found: self.kernel.len(),
            });
        }
        for (i, row) in self.kernel.iter().enumerate() {
            if row.len() != n {
                errors.push(GameError::LengthMismatch {
                    field: format!("kernel[{}]", label(i)),
                    expected: n,
                    found: row.len(),
                });
                continue;
            }
            let mut row_ok = true;
            for (j, &p) in row.iter().enumerate() {
                if !p.is_finite() {
                    row_ok = false;
                    errors.push(GameError::NonFiniteEntry {
                        field: format!("kernel[{}]", label(i)),
                        state: label(j),
                    });
                } else if !(0.0..=1.0).contains(&p) {
                    row_ok = false;
                    errors.push(GameError::ProbabilityRange {
                        state: label(i),
                        column: label(j),
                        value: p,
                    });
                }
            }
            if row_ok {
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    errors.push(GameError::RowSum {
                        state: label(i),
                        sum,
                    });
                }
            }
        }

        for (name, triple) in [("player1", &self.player1), ("player2", &self.player2)] {
            for (part, values) in [("f", &triple.f), ("g", &triple.g), ("h", &triple.h)] {
                let field = format!("{name}.{part}");
                if values.len() != n {
                    errors.push(GameError::LengthMismatch {
                        field,
                        expected: n,
                        found: values.len(),
                    });
                    continue;
                }
                for (i, v) in values.iter().enumerate() {
                    if !v.is_finite() {
                        errors.push(GameError::NonFiniteEntry {
                            field: field.clone(),
                            state: label(i),
                        });
                    }
                }
            }
        }

        if !errors.is_empty() {
            return Err(ValidationErrors(errors));
        }

        let kernel = TransitionKernel::from_rows(&self.kernel);
        Ok(ValidatedGame {
            space: StateSpace {
                labels: self.states,
                index,
            },
            kernel,
            alpha: self.alpha,
            players: [self.player1, self.player2],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, state: usize) -> &str {
        &self.labels[state]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }
}

/// Row-stochastic matrix stored as sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    rows: Vec<Vec<(usize, f64)>>,
}

impl TransitionKernel {
    fn from_rows(dense: &[Vec<f64>]) -> Self {
        let rows = dense
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p != 0.0)
                    .map(|(j, &p)| (j, p))
                    .collect()
            })
            .collect();
        TransitionKernel { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Non-zero entries `(column, probability)` of the row for `state`.
    pub fn row(&self, state: usize) -> &[(usize, f64)] {
        &self.rows[state]
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.rows[from]
            .iter()
            .find(|(j, _)| *j == to)
            .map_or(0.0, |&(_, p)| p)
    }

    /// `(Πv)(x)` for a single state.
    pub fn expect_at(&self, state: usize, v: &[f64]) -> f64 {
        self.rows[state].iter().map(|&(j, p)| p * v[j]).sum()
    }

    /// `Πv` for every state.
    pub fn expect(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows.len()).map(|x| self.expect_at(x, v)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.rows.len();
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![0.0; n];
                for &(j, p) in row {
                    dense[j] = p;
                }
                dense
            })
            .collect()
    }
}

/// A game whose invariants have been checked. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedGame {
    space: StateSpace,
    kernel: TransitionKernel,
    alpha: f64,
    players: [PayoffTriple; 2],
}

impl ValidatedGame {
    pub fn num_states(&self) -> usize {
        self.space.len()
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn kernel(&self) -> &TransitionKernel {
        &self.kernel
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn payoffs(&self, player: Player) -> &PayoffTriple {
        &self.players[player.index()]
    }

    /// `α(Πv)(x)` for every state.
    pub fn discounted_expectation(&self, v: &[f64]) -> Vec<f64> {
        self.kernel
            .expect(v)
            .into_iter()
            .map(|e| self.alpha * e)
            .collect()
    }

    /// Largest absolute payoff over both players and all states.
    pub fn payoff_scale(&self) -> f64 {
        self.players[0].max_abs().max(self.players[1].max_abs())
    }

    /// Back to the plain description (for serialization).
    pub fn to_raw(&self) -> DynkinGame {
        DynkinGame {
            states: self.space.labels.clone(),
            alpha: self.alpha,
            kernel: self.kernel.to_dense(),
            player1: self.players[0].clone(),
            player2: self.players[1].clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameClass {
    pub is_zero_sum: bool,
    pub is_symmetric: bool,
    /// `h = med(f, h, g)` at every state; only meaningful for zero-sum games.
    pub med_condition: bool,
    /// `f = h` entrywise; only meaningful for symmetric games.
    pub f_equals_h: bool,
}

/// Middle value of three numbers: `min{max(a,b), max(a,c), max(b,c)}`.
pub fn med(a: f64, b: f64, c: f64) -> f64 {
    a.max(b).min(a.max(c)).min(b.max(c))
}

/// Structural classification. Array comparisons are exact.
pub fn classify_game(game: &ValidatedGame) -> GameClass {
    let p1 = game.payoffs(Player::One);
    let p2 = game.payoffs(Player::Two);
    let negated = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| *x == -*y);

    let is_zero_sum = negated(&p1.f, &p2.g) && negated(&p1.g, &p2.f) && negated(&p1.h, &p2.h);
    let is_symmetric = p1 == p2;
    let med_condition = is_zero_sum && med_condition_witnesses(p1).is_empty();
    let f_equals_h = is_symmetric && p1.f == p1.h;

    GameClass {
        is_zero_sum,
        is_symmetric,
        med_condition,
        f_equals_h,
    }
}

/// States where `h(x) != med(f(x), h(x), g(x))`.
pub fn med_condition_witnesses(payoffs: &PayoffTriple) -> Vec<usize> {
    (0..payoffs.h.len())
        .filter(|&x| med(payoffs.f[x], payoffs.h[x], payoffs.g[x]) != payoffs.h[x])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("profile has {found} entries, game has {expected} states")]
    Length { expected: usize, found: usize },
    #[error("stopping probability {value} at state index {state} is outside [0, 1]")]
    Range { state: usize, value: f64 },
}

/// Markovian randomized stopping rule: stop at `x` with probability `p(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StoppingProfile(Vec<f64>);

impl StoppingProfile {
    pub fn new(p: Vec<f64>) -> Result<Self, ProfileError> {
        for (state, &value) in p.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(ProfileError::Range { state, value });
            }
        }
        Ok(StoppingProfile(p))
    }

    /// Like [`StoppingProfile::new`] but also checks the length against a game.
    pub fn for_game(game: &ValidatedGame, p: Vec<f64>) -> Result<Self, ProfileError> {
        if p.len() != game.num_states() {
            return Err(ProfileError::Length {
                expected: game.num_states(),
                found: p.len(),
            });
        }
        Self::new(p)
    }

    pub fn constant(n: usize, value: f64) -> Self {
        assert!((0.0..=1.0).contains(&value));
        StoppingProfile(vec![value; n])
    }

    /// Clamps every entry into `[0, 1]`.
    pub(crate) fn from_clamped(p: Vec<f64>) -> Self {
        StoppingProfile(p.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    pub fn is_pure(&self) -> bool {
        self.0.iter().all(|&p| p == 0.0 || p == 1.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for StoppingProfile {
    type Output = f64;

    fn index(&self, state: usize) -> &f64 {
        &self.0[state]
    }
}

/// Per-state expected payoff of one player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueFunction(pub Vec<f64>);

impl ValueFunction {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for ValueFunction {
    type Output = f64;

    fn index(&self, state: usize) -> &f64 {
        &self.0[state]
    }
}
