//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::oracle;
use dynkin::general::VERIFY_TOL;
use dynkin::simulate::{estimate_payoffs, HorizonMode, SimulationConfig};
use dynkin::stopping::{build_auxiliary, BrTag, INDIFFERENCE_TOL, SOLVE_TOL};
use dynkin::symmetric::{optimal_stopping_value, symmetric_profile, war_of_attrition_profile};
use dynkin::zero_sum::{
    assemble_pure_profiles, med_value_iteration, pure_existence_check, shapley_solve, GUARD_TOL,
};
use dynkin::{
    best_response_constraints, evaluate_payoffs, is_best_response, solve, solve_wald_bellman,
    verify_equilibrium, DynkinGame, Mode, PayoffTriple, Player, SolveOptions, SolverPath,
    StoppingProfile, ValidatedGame,
};
use rand::Rng;

type Outcome = Result<String, String>;

const MAX_ITER: usize = 1_000_000;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn two_state_game() -> ValidatedGame {
    DynkinGame::zero_sum(
        common::labels(2),
        0.8,
        vec![vec![0.5, 0.5], vec![0.0, 1.0]],
        PayoffTriple::new(vec![0.0, 5.0], vec![0.0, 3.0], vec![2.0, 4.0]),
    )
    .validate()
    .unwrap()
}

fn criterion_1() -> Outcome {
    let game = two_state_game();
    let start = Instant::now();
    let sol = solve(&game, Mode::Auto, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let r = sol.report.ok_or("no report")?;
    let expected_p = [0.5, 1.0];
    let expected_v = [1.0, 4.0];
    let err_p = oracle::sup_distance(r.p1.as_slice(), &expected_p)
        .max(oracle::sup_distance(r.p2.as_slice(), &expected_p));
    let err_v = oracle::sup_distance(&r.v1.0, &expected_v);
    ensure(r.is_verified(), || format!("verdict {:?}", r.verdict))?;
    ensure(err_p < 1e-9 && err_v < 1e-9, || format!("profile error {err_p:e}, value error {err_v:e}"))?;
    ensure(elapsed.as_secs_f64() < 1.0, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "path {:?}, p1 = p2 = {:?}, V = {:?}, {elapsed:?}",
        sol.path,
        r.p1.as_slice(),
        r.v1.0
    ))
}

fn criterion_2() -> Outcome {
    let game = two_state_game();
    let sol = solve(&game, Mode::DiagnosePure, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let d = sol.diagnostics.ok_or("no diagnostics")?;
    // On {1}: V = α(V/2 + f∧h(2)/2) = 0.4 V + 1.6.
    let mut oracle_v = 0.0;
    for _ in 0..200 {
        oracle_v = 0.4 * oracle_v + 1.6;
    }
    let v = d.v_m1.as_ref().ok_or("no constrained value")?[0];
    ensure(d.m1 == vec![0], || format!("M1 = {:?}", d.m1))?;
    ensure((v - oracle_v).abs() < 1e-9, || format!("V_M1(1) = {v}, oracle {oracle_v}"))?;
    ensure(d.witnesses() == vec![0], || format!("witnesses {:?}", d.witnesses()))?;
    ensure(d.pure_impossible, || "pure not ruled out".into())?;
    Ok(format!("M1 = {{1}}, V_M1(1) = {v:.12}, witness state 1, pure impossible"))
}

fn med_corpus() -> Vec<ValidatedGame> {
    let mut rng = common::rng(0xacc3);
    (0..1000).map(|_| common::med_zero_sum(&mut rng, 8)).collect()
}

fn criterion_3(corpus: &[ValidatedGame]) -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for (i, game) in corpus.iter().enumerate() {
        let value = med_value_iteration(game, SOLVE_TOL, MAX_ITER).map_err(|e| format!("game {i}: {e}"))?;
        let a = assemble_pure_profiles(game, &value, GUARD_TOL).map_err(|e| format!("game {i}: {e}"))?;
        ensure(a.p1.is_pure() && a.p2.is_pure(), || format!("game {i}: mixed profile"))?;
        let r = verify_equilibrium(game, &a.p1, &a.p2, VERIFY_TOL);
        ensure(r.max_residual < 1e-8, || format!("game {i}: residual {:e}", r.max_residual))?;
        worst = worst.max(r.max_residual);
    }
    let elapsed = start.elapsed();
    ensure(elapsed.as_secs_f64() < 60.0, || format!("took {elapsed:?}"))?;
    Ok(format!("{} games pure and verified, worst residual {worst:e}, {elapsed:?}", corpus.len()))
}

fn criterion_4(corpus: &[ValidatedGame]) -> Outcome {
    let mut worst = 0.0_f64;
    for (i, game) in corpus.iter().enumerate() {
        let med = med_value_iteration(game, SOLVE_TOL, MAX_ITER).map_err(|e| format!("game {i}: {e}"))?;
        let shapley = shapley_solve(game, SOLVE_TOL, MAX_ITER).map_err(|e| format!("game {i}: {e}"))?;
        let d = oracle::sup_distance(&med.0, &shapley.value.0);
        ensure(d <= 2e-9, || format!("game {i}: values differ by {d:e}"))?;
        worst = worst.max(d);
    }
    Ok(format!("{} games, largest value gap {worst:e}", corpus.len()))
}

fn criterion_5() -> Outcome {
    let mut rng = common::rng(0xacc5);
    let mut worst = 0.0_f64;
    let games = 1000;
    for i in 0..games {
        let game = common::symmetric(&mut rng, 8, true);
        let value = optimal_stopping_value(&game, SOLVE_TOL).map_err(|e| format!("game {i}: {e}"))?;
        let p = symmetric_profile(&game, &value).map_err(|e| format!("game {i}: {e}"))?;
        let r = verify_equilibrium(&game, &p, &p, VERIFY_TOL);
        ensure(r.is_verified() && r.max_residual < 1e-8, || {
            format!("game {i}: residual {:e}", r.max_residual)
        })?;
        worst = worst.max(r.max_residual);
    }
    Ok(format!("{games} games verified, worst residual {worst:e}"))
}

fn criterion_6() -> Outcome {
    let game = DynkinGame::symmetric(
        common::labels(1),
        0.5,
        vec![vec![1.0]],
        PayoffTriple::new(vec![1.0], vec![2.0], vec![1.0]),
    )
    .validate()
    .unwrap();
    let sol = war_of_attrition_profile(&game).map_err(|e| e.to_string())?;
    let p = sol.p[0];
    ensure((p - 1.0 / 3.0).abs() < 1e-12, || format!("p = {p}"))?;
    ensure((sol.value[0] - 1.0).abs() < 1e-12, || format!("value {}", sol.value[0]))?;
    let always = StoppingProfile::constant(1, 1.0);
    let (constraint, _) =
        best_response_constraints(&game, Player::One, &always, INDIFFERENCE_TOL).map_err(|e| e.to_string())?;
    let check = is_best_response(&always, &constraint);
    ensure(!check.is_best_response, || "p ≡ 1 is a best response to itself".into())?;
    ensure(constraint.tags()[0] == BrTag::MustContinue, || format!("tag {:?}", constraint.tags()[0]))?;
    Ok(format!("p = {p:.15}, value {}, p ≡ 1 rejected", sol.value[0]))
}

fn enumerated_equilibrium(game: &ValidatedGame, p1: &StoppingProfile, p2: &StoppingProfile) -> Result<bool, String> {
    let (c1, _) = best_response_constraints(game, Player::One, p2, INDIFFERENCE_TOL).map_err(|e| e.to_string())?;
    let (c2, _) = best_response_constraints(game, Player::Two, p1, INDIFFERENCE_TOL).map_err(|e| e.to_string())?;
    Ok(is_best_response(p1, &c1).is_best_response && is_best_response(p2, &c2).is_best_response)
}

fn criterion_7() -> Outcome {
    let mut rng = common::rng(0xacc7);
    let (mut pairs, mut equilibria, mut zero_sum) = (0, 0, 0);
    for i in 0..200 {
        let game = common::mixed(&mut rng, 4);
        let pure = common::pure_profiles(game.num_states());
        let mut any = false;
        for p1 in &pure {
            for p2 in &pure {
                let enumerated = enumerated_equilibrium(&game, p1, p2)?;
                let verified = verify_equilibrium(&game, p1, p2, VERIFY_TOL).is_verified();
                ensure(enumerated == verified, || {
                    format!("game {i}: enumeration {enumerated}, verification {verified} at {p1:?}, {p2:?}")
                })?;
                pairs += 1;
                equilibria += usize::from(verified);
                any |= verified;
            }
        }
        if dynkin::classify_game(&game).is_zero_sum {
            let value = shapley_solve(&game, SOLVE_TOL, MAX_ITER).map_err(|e| format!("game {i}: {e}"))?.value;
            let check = pure_existence_check(&game, &value, GUARD_TOL);
            ensure(check.exists == any, || format!("game {i}: check {}, enumeration {any}", check.exists))?;
            zero_sum += 1;
        }
    }
    Ok(format!("{pairs} pairs agree ({equilibria} equilibria), {zero_sum} zero-sum existence checks agree"))
}

fn criterion_8() -> Outcome {
    let mut rng = common::rng(0xacc8);
    let mut worst_ratio = 0.0_f64;
    for i in 0..100 {
        let game = common::mixed(&mut rng, 8);
        let who = if rng.random_bool(0.5) { Player::One } else { Player::Two };
        let q = common::profile(&mut rng, game.num_states());
        let aux = build_auxiliary(&game, who, &q);
        let value = solve_wald_bellman(&aux, SOLVE_TOL, MAX_ITER).map_err(|e| format!("problem {i}: {e}"))?;
        let reference = oracle::augmented_backward_induction(&game, who, q.as_slice(), 60);
        let scale = aux
            .continue_reward()
            .iter()
            .chain(aux.absorbed_reward())
            .fold(0.0_f64, |m, r| m.max(r.abs()));
        let alpha = game.alpha();
        // Truncation bound, plus the solver's own accuracy and rounding in
        // both computations.
        let numeric = (SOLVE_TOL + 64.0 * f64::EPSILON * scale) / (1.0 - alpha);
        let bound = 2.0 * alpha.powi(60) * scale + numeric;
        let d = oracle::sup_distance(&value.v_c, &reference);
        ensure(d <= bound, || format!("problem {i}: distance {d:e} > {bound:e}"))?;
        worst_ratio = worst_ratio.max(d / bound);
    }
    Ok(format!("100 problems within bound, largest distance/bound {worst_ratio:.3}"))
}

fn killing(samples: usize, seed: u64, state: &str) -> SimulationConfig {
    SimulationConfig {
        samples,
        seed,
        initial_state: state.to_string(),
        horizon_mode: HorizonMode::GeometricKilling,
    }
}

/// Four standard errors, with a rounding floor for zero-variance rewards.
fn within(mean: f64, se: f64, exact: f64) -> bool {
    (mean - exact).abs() <= 4.0 * se + 1e-12 * exact.abs().max(1.0)
}

fn criterion_9() -> Outcome {
    let mut rng = common::rng(0xacc9);
    let instances = 50;
    let (mut hits1, mut hits2) = (0, 0);
    for i in 0..instances {
        let game = common::general(&mut rng, 6);
        let n = game.num_states();
        let (p1, p2) = (common::profile(&mut rng, n), common::profile(&mut rng, n));
        let x0 = rng.random_range(0..n);
        let (v1, v2) = evaluate_payoffs(&game, &p1, &p2).map_err(|e| e.to_string())?;
        let cfg = killing(100_000, i, game.space().label(x0));
        let est = estimate_payoffs(&game, &p1, &p2, &cfg).map_err(|e| e.to_string())?;
        hits1 += usize::from(within(est.mean1, est.std_err1, v1[x0]));
        hits2 += usize::from(within(est.mean2, est.std_err2, v2[x0]));
    }
    ensure(hits1 >= 47 && hits2 >= 47, || format!("within 4 SE: {hits1}/{instances}, {hits2}/{instances}"))?;

    let game = two_state_game();
    let p = StoppingProfile::new(vec![0.5, 1.0]).unwrap();
    let mut means = Vec::new();
    for (label, exact) in [("1", 1.0), ("2", 4.0)] {
        let est = estimate_payoffs(&game, &p, &p, &killing(100_000, 7, label)).map_err(|e| e.to_string())?;
        ensure(within(est.mean1, est.std_err1, exact), || {
            format!("state {label}: mean {} ± {} vs {exact}", est.mean1, est.std_err1)
        })?;
        means.push(est.mean1);
    }
    Ok(format!(
        "within 4 SE: {hits1}/{instances} (player 1), {hits2}/{instances} (player 2); equilibrium means {means:?}"
    ))
}

/// Deterministic drift `n → n+1` on `n` states with `f = g = 2^n`, `h = 0`,
/// `α = 1/2`; the last state absorbs.
fn doubling_game(n: usize) -> ValidatedGame {
    let kernel = (0..n)
        .map(|x| {
            let mut row = vec![0.0; n];
            row[(x + 1).min(n - 1)] = 1.0;
            row
        })
        .collect();
    let f: Vec<f64> = (0..n).map(|x| 2f64.powi(x as i32)).collect();
    DynkinGame::symmetric(common::labels(n), 0.5, kernel, PayoffTriple::new(f.clone(), f, vec![0.0; n]))
        .validate()
        .unwrap()
}

/// Symmetric equilibrium value on the truncation: at the absorbing state
/// `V = (2 - √2) 2^{n-1}`, and backwards `V(x) = 2^x / (2 - V(x+1) / 2^{x+1})`.
fn doubling_values(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[n - 1] = (2.0 - 2f64.sqrt()) * 2f64.powi(n as i32 - 1);
    for x in (0..n - 1).rev() {
        let beta = v[x + 1] / 2f64.powi(x as i32 + 1);
        v[x] = 2f64.powi(x as i32) / (2.0 - beta);
    }
    v
}

fn criterion_10() -> Outcome {
    let mut rows = Vec::new();
    for n in [10, 20, 40, 60] {
        let game = doubling_game(n);
        let sol = solve(&game, Mode::Auto, &SolveOptions::default()).map_err(|e| format!("N = {n}: {e}"))?;
        ensure(sol.path == SolverPath::SymmetricFixedPoint, || format!("N = {n}: path {:?}", sol.path))?;
        let r = sol.report.ok_or("no report")?;
        ensure(r.is_verified(), || format!("N = {n}: verdict {:?}", r.verdict))?;
        let expected = doubling_values(n);
        let rel = r
            .v1
            .0
            .iter()
            .zip(&expected)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs() / b.abs()));
        ensure(rel < 1e-9, || format!("N = {n}: relative error {rel:e} against the backward recursion"))?;
        let sup = r.v1.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        rows.push(format!("N={n}: V(1)={:.6} sup V={sup:.4e}", r.v1.0[0]));
    }
    Ok(format!("solvable at every truncation, values grow with length; {}", rows.join("; ")))
}

fn main() -> ExitCode {
    let corpus = med_corpus();
    let results: Vec<(u32, Outcome)> = vec![
        (1, criterion_1()),
        (2, criterion_2()),
        (3, criterion_3(&corpus)),
        (4, criterion_4(&corpus)),
        (5, criterion_5()),
        (6, criterion_6()),
        (7, criterion_7()),
        (8, criterion_8()),
        (9, criterion_9()),
        (10, criterion_10()),
    ];
    let mut failed = 0;
    for (k, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS criterion {k}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL criterion {k}: {reason}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
