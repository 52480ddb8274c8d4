//! Monte Carlo estimation of the players' expected rewards under a profile pair.
//!
//! Stream discipline: episode `k` draws from `ChaCha8Rng::seed_from_u64(seed)`
//! with stream `k`. Within an episode, each step draws player 1's uniform,
//! player 2's uniform, then (geometric killing only) the killing uniform, then
//! the transition uniform. Uniforms lie in `(0, 1]`; player `i` stops at state
//! `x` iff `p_i(x) ≥ ξ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{Player, StoppingProfile, ValidatedGame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "steps")]
pub enum HorizonMode {
    /// Kill the chain with probability `1 - α` each step; rewards undiscounted.
    GeometricKilling,
    /// Discount by `α^n` and stop simulating after `n` steps.
    DiscountedCutoff(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub samples: usize,
    pub seed: u64,
    pub initial_state: String,
    pub horizon_mode: HorizonMode,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimulationError {
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("unknown initial state {0:?}")]
    UnknownState(String),
    #[error("profile length {found} does not match {expected} states")]
    ProfileLength { expected: usize, found: usize },
    #[error("cutoff tail bound {bound:e} exceeds the requested precision {precision:e}")]
    CutoffTooShort { bound: f64, precision: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Player1First,
    Player2First,
    Simultaneous,
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub reward1: f64,
    pub reward2: f64,
    pub outcome: Outcome,
    /// Epoch of the stop (or of killing / cutoff).
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub player1_first: u64,
    pub player2_first: u64,
    pub simultaneous: u64,
    pub never: u64,
}

impl OutcomeCounts {
    pub fn total(&self) -> u64 {
        self.player1_first + self.player2_first + self.simultaneous + self.never
    }

    fn record(&mut self, o: Outcome) {
        match o {
            Outcome::Player1First => self.player1_first += 1,
            Outcome::Player2First => self.player2_first += 1,
            Outcome::Simultaneous => self.simultaneous += 1,
            Outcome::Never => self.never += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalEstimate {
    pub mean1: f64,
    pub mean2: f64,
    pub std_err1: f64,
    pub std_err2: f64,
    pub samples: usize,
    pub outcome_counts: OutcomeCounts,
}

/// Uniform on `(0, 1]`.
fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

fn next_state(game: &ValidatedGame, x: usize, u: f64) -> usize {
    let row = game.kernel().row(x);
    let mut acc = 0.0;
    for &(y, p) in row {
        acc += p;
        if u <= acc {
            return y;
        }
    }
    // Rows sum to one up to rounding.
    row.last().map(|&(y, _)| y).expect("rows are non-empty")
}

/// Simulates one episode from `x0`.
pub fn sample_outcome(
    game: &ValidatedGame,
    p1: &StoppingProfile,
    p2: &StoppingProfile,
    x0: usize,
    mode: HorizonMode,
    rng: &mut ChaCha8Rng,
) -> SampleOutcome {
    let alpha = game.alpha();
    let (pay1, pay2) = (game.payoffs(Player::One), game.payoffs(Player::Two));
    let mut x = x0;
    let mut discount = 1.0;
    let mut n = 0usize;
    loop {
        if let HorizonMode::DiscountedCutoff(limit) = mode {
            if n >= limit {
                break;
            }
        }
        let stop1 = p1[x] >= uniform(rng);
        let stop2 = p2[x] >= uniform(rng);
        let (r1, r2, outcome) = match (stop1, stop2) {
            (true, true) => (pay1.h[x], pay2.h[x], Outcome::Simultaneous),
            (true, false) => (pay1.f[x], pay2.g[x], Outcome::Player1First),
            (false, true) => (pay1.g[x], pay2.f[x], Outcome::Player2First),
            (false, false) => {
                match mode {
                    HorizonMode::GeometricKilling => {
                        if uniform(rng) > alpha {
                            break;
                        }
                    }
                    HorizonMode::DiscountedCutoff(_) => discount *= alpha,
                }
                x = next_state(game, x, uniform(rng));
                n += 1;
                continue;
            }
        };
        return SampleOutcome {
            reward1: discount * r1,
            reward2: discount * r2,
            outcome,
            steps: n,
        };
    }
    SampleOutcome {
        reward1: 0.0,
        reward2: 0.0,
        outcome: Outcome::Never,
        steps: n,
    }
}

/// Smallest cutoff `N` with `α^N · scale` below `precision`.
pub fn cutoff_for_precision(game: &ValidatedGame, precision: f64) -> usize {
    let scale = game.payoff_scale();
    if scale <= precision {
        return 0;
    }
    ((precision / scale).ln() / game.alpha().ln()).ceil() as usize
}

/// Tail bound `α^N · max|payoffs|` of a cutoff.
pub fn cutoff_tail_bound(game: &ValidatedGame, steps: usize) -> f64 {
    game.alpha().powi(steps.min(i32::MAX as usize) as i32) * game.payoff_scale()
}

/// Sample means and standard errors over `cfg.samples` episodes. Episodes run
/// in parallel; results are identical to a serial run.
/// Neumaier summation: keeps the mean of many near-equal rewards accurate to
/// rounding.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0_f64, 0.0_f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

pub fn estimate_payoffs(
    game: &ValidatedGame,
    p1: &StoppingProfile,
    p2: &StoppingProfile,
    cfg: &SimulationConfig,
) -> Result<EmpiricalEstimate, SimulationError> {
    if cfg.samples == 0 {
        return Err(SimulationError::NoSamples);
    }
    let n = game.num_states();
    for p in [p1, p2] {
        if p.len() != n {
            return Err(SimulationError::ProfileLength {
                expected: n,
                found: p.len(),
            });
        }
    }
    let x0 = game
        .space()
        .index_of(&cfg.initial_state)
        .ok_or_else(|| SimulationError::UnknownState(cfg.initial_state.clone()))?;

    let outcomes: Vec<SampleOutcome> = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k);
            sample_outcome(game, p1, p2, x0, cfg.horizon_mode, &mut rng)
        })
        .collect();

    let mut counts = OutcomeCounts::default();
    for o in &outcomes {
        counts.record(o.outcome);
    }
    let m = cfg.samples as f64;
    let mean1 = compensated_sum(outcomes.iter().map(|o| o.reward1)) / m;
    let mean2 = compensated_sum(outcomes.iter().map(|o| o.reward2)) / m;
    let q1 = compensated_sum(outcomes.iter().map(|o| (o.reward1 - mean1).powi(2)));
    let q2 = compensated_sum(outcomes.iter().map(|o| (o.reward2 - mean2).powi(2)));
    let std_err = |q: f64| {
        if cfg.samples < 2 {
            0.0
        } else {
            (q / (m - 1.0)).sqrt() / m.sqrt()
        }
    };
    Ok(EmpiricalEstimate {
        mean1,
        mean2,
        std_err1: std_err(q1),
        std_err2: std_err(q2),
        samples: cfg.samples,
        outcome_counts: counts,
    })
}
