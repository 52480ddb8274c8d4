//! Classification-driven dispatch to the equilibrium solvers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{classify_game, GameClass, StoppingProfile, ValidatedGame, ValueFunction};
use crate::general::{
    best_response_search, rounding_tolerance, verify_equilibrium, EquilibriumReport, SearchConfig,
    SearchError, VERIFY_TOL,
};
use crate::symmetric::{closed_form_solve, symmetric_fixed_point, SymmetricError};
use crate::zero_sum::{
    med_solve, pure_nonexistence_diagnostic, shapley_solve, PureDiagnosticsReport, ZeroSumError,
    GUARD_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Auto,
    ZeroSum,
    Symmetric,
    General,
    DiagnosePure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverPath {
    MedIteration,
    Shapley,
    ClosedForm,
    SymmetricFixedPoint,
    GeneralSearch,
    PureDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Convergence target of the value iterations. The search paths stop on
    /// the verification gate instead.
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 10_000,
            damping: 0.5,
            restarts: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub path: SolverPath,
    pub classification: GameClass,
    /// Absent only for a diagnosis whose value solve failed.
    pub report: Option<EquilibriumReport>,
    /// Game value, for zero-sum and symmetric paths.
    pub value: Option<ValueFunction>,
    pub diagnostics: Option<PureDiagnosticsReport>,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    ZeroSum(#[from] ZeroSumError),
    #[error(transparent)]
    Symmetric(#[from] SymmetricError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("mode {mode:?} does not apply to this game")]
    ModeMismatch { mode: Mode },
}

impl SolveError {
    /// Whether the failure is a solver limitation rather than a rejected input.
    pub fn is_nonconvergence(&self) -> bool {
        match self {
            SolveError::ZeroSum(e) => matches!(
                e,
                ZeroSumError::MaxIterExceeded { .. }
                    | ZeroSumError::VerificationFailed { .. }
                    | ZeroSumError::NoCaseMatched { .. }
            ),
            SolveError::Symmetric(e) => matches!(
                e,
                SymmetricError::NonConvergence { .. }
                    | SymmetricError::VerificationFailed { .. }
                    | SymmetricError::CaseGuardFailure { .. }
            ),
            SolveError::Search(e) => matches!(e, SearchError::NonConvergence { .. }),
            SolveError::ModeMismatch { .. } => false,
        }
    }

    /// Best candidate seen before giving up, if any.
    pub fn best_report(&self) -> Option<&EquilibriumReport> {
        match self {
            SolveError::ZeroSum(ZeroSumError::VerificationFailed { report })
            | SolveError::Symmetric(SymmetricError::VerificationFailed { report })
            | SolveError::Symmetric(SymmetricError::NonConvergence { best: report })
            | SolveError::Search(SearchError::NonConvergence { best: report, .. }) => Some(report),
            _ => None,
        }
    }
}

/// Path `auto` takes for a given classification.
pub fn auto_path(class: &GameClass) -> SolverPath {
    if class.is_zero_sum && class.med_condition {
        SolverPath::MedIteration
    } else if class.is_zero_sum {
        SolverPath::Shapley
    } else if class.is_symmetric && class.f_equals_h {
        SolverPath::ClosedForm
    } else if class.is_symmetric {
        SolverPath::SymmetricFixedPoint
    } else {
        SolverPath::GeneralSearch
    }
}

fn select_path(class: &GameClass, mode: Mode) -> Result<SolverPath, SolveError> {
    let path = auto_path(class);
    let ok = match mode {
        Mode::Auto => return Ok(path),
        Mode::ZeroSum | Mode::DiagnosePure => class.is_zero_sum,
        Mode::Symmetric => class.is_symmetric,
        Mode::General => return Ok(SolverPath::GeneralSearch),
    };
    if !ok {
        return Err(SolveError::ModeMismatch { mode });
    }
    Ok(match mode {
        Mode::DiagnosePure => SolverPath::PureDiagnostics,
        Mode::Symmetric if class.f_equals_h => SolverPath::ClosedForm,
        Mode::Symmetric => SolverPath::SymmetricFixedPoint,
        _ => path,
    })
}

/// Solves `game` along the path selected by `mode` and re-verifies the result.
pub fn solve(game: &ValidatedGame, mode: Mode, opts: &SolveOptions) -> Result<Solution, SolveError> {
    let classification = classify_game(game);
    let path = select_path(&classification, mode)?;
    let verify_tol = rounding_tolerance(game, VERIFY_TOL);
    let mut diagnostics = None;

    let (report, value) = match path {
        SolverPath::MedIteration => {
            let s = med_solve(game, opts.tol, opts.max_iter)?;
            (Some(s.report), Some(s.value))
        }
        SolverPath::Shapley => {
            let s = shapley_solve(game, opts.tol, opts.max_iter)?;
            (Some(s.report), Some(s.value))
        }
        SolverPath::ClosedForm => {
            let s = closed_form_solve(game, opts.tol)?;
            (Some(s.report), Some(s.value))
        }
        SolverPath::SymmetricFixedPoint => {
            let s = symmetric_fixed_point(game, VERIFY_TOL, opts.max_iter, opts.damping)?;
            (Some(s.report), Some(s.value))
        }
        SolverPath::GeneralSearch => {
            let zero = StoppingProfile::constant(game.num_states(), 0.0);
            let cfg = SearchConfig {
                tol: verify_tol,
                max_iter: opts.max_iter,
                damping: opts.damping,
                restarts: opts.restarts,
                seed: opts.seed,
            };
            (Some(best_response_search(game, (&zero, &zero), &cfg)?), None)
        }
        SolverPath::PureDiagnostics => {
            let solved = shapley_solve(game, opts.tol, opts.max_iter).ok();
            let value = solved.as_ref().map(|s| s.value.clone());
            diagnostics = Some(pure_nonexistence_diagnostic(game, value.as_ref(), GUARD_TOL)?);
            (solved.map(|s| s.report), value)
        }
    };

    let report = match report {
        Some(r) => {
            let iterations = r.iterations;
            let mut check = verify_equilibrium(game, &r.p1, &r.p2, verify_tol);
            check.iterations = iterations;
            if !check.is_verified() {
                let err = SearchError::NonConvergence {
                    best: Box::new(check),
                    attempts: 1,
                };
                return Err(err.into());
            }
            Some(check)
        }
        None => None,
    };

    Ok(Solution {
        path,
        classification,
        report,
        value,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{DynkinGame, PayoffTriple};

    fn section_game() -> ValidatedGame {
        DynkinGame::zero_sum(
            vec!["1".into(), "2".into()],
            0.8,
            vec![vec![0.5, 0.5], vec![0.0, 1.0]],
            PayoffTriple::new(vec![0.0, 5.0], vec![0.0, 3.0], vec![2.0, 4.0]),
        )
        .validate()
        .unwrap()
    }

    #[test]
    fn auto_routes_non_med_zero_sum_to_shapley() {
        let sol = solve(&section_game(), Mode::Auto, &SolveOptions::default()).unwrap();
        assert_eq!(sol.path, SolverPath::Shapley);
        let r = sol.report.unwrap();
        assert!(r.is_verified());
        assert!((r.p1.as_slice()[0] - 0.5).abs() < 1e-9);
        assert!((r.v1.0[1] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric_mode_rejects_zero_sum_game() {
        let err = solve(&section_game(), Mode::Symmetric, &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, SolveError::ModeMismatch { mode: Mode::Symmetric }));
        assert!(!err.is_nonconvergence());
    }

    #[test]
    fn diagnosis_carries_value_and_witness() {
        let sol = solve(&section_game(), Mode::DiagnosePure, &SolveOptions::default()).unwrap();
        let d = sol.diagnostics.unwrap();
        assert_eq!(d.m1, vec![0]);
        assert!(d.pure_impossible);
        assert_eq!(d.pure_exists, Some(false));
    }

    #[test]
    fn general_mode_runs_search_on_any_game() {
        let sol = solve(&section_game(), Mode::General, &SolveOptions::default()).unwrap();
        assert_eq!(sol.path, SolverPath::GeneralSearch);
        assert!(sol.report.unwrap().is_verified());
    }
}
