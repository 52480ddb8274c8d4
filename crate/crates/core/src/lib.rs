//! Nash equilibria of two-player Dynkin stopping games on finite Markov chains.
//!
//! Each player picks a Markovian randomized stopping rule `p: E → [0, 1]`.
//! Player `i` receives `f_i` when stopping alone, `g_i` when the opponent
//! stops alone, `h_i` on a simultaneous stop, all discounted by `α^τ`; never
//! stopping pays 0.

mod fixed_point;

pub mod game;
pub mod general;
pub mod io;
pub mod simulate;
pub mod solver;
pub mod stopping;
pub mod symmetric;
pub mod zero_sum;

pub use game::{
    classify_game, med, DynkinGame, GameClass, PayoffTriple, Player, StoppingProfile,
    ValidatedGame, ValueFunction,
};
pub use general::{best_response_search, verify_equilibrium, EquilibriumReport, SearchConfig, Verdict};
pub use stopping::{best_response_constraints, evaluate_payoffs, is_best_response, solve_wald_bellman};
pub use solver::{solve, Mode, SolveOptions, Solution, SolverPath};
