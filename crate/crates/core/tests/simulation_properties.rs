mod common;

use dynkin::evaluate_payoffs;
use dynkin::simulate::{cutoff_for_precision, estimate_payoffs, HorizonMode, SimulationConfig};
use dynkin::{DynkinGame, PayoffTriple, StoppingProfile};
use rand::Rng;

fn config(samples: usize, seed: u64, state: &str, mode: HorizonMode) -> SimulationConfig {
    SimulationConfig {
        samples,
        seed,
        initial_state: state.to_string(),
        horizon_mode: mode,
    }
}

#[test]
fn estimates_are_unbiased() {
    let mut rng = common::rng(0x51a1);
    let instances = 60;
    let (mut hits1, mut hits2) = (0, 0);
    for i in 0..instances {
        let game = common::general(&mut rng, 5);
        let n = game.num_states();
        let (p1, p2) = (common::profile(&mut rng, n), common::profile(&mut rng, n));
        let x0 = rng.random_range(0..n);
        let (v1, v2) = evaluate_payoffs(&game, &p1, &p2).unwrap();
        let label = game.space().label(x0).to_string();
        let est = estimate_payoffs(&game, &p1, &p2, &config(20_000, i, &label, HorizonMode::GeometricKilling)).unwrap();
        assert_eq!(est.outcome_counts.total(), 20_000);
        let within = |mean: f64, se: f64, v: f64| (mean - v).abs() <= 4.0 * se + 1e-12 * v.abs().max(1.0);
        hits1 += usize::from(within(est.mean1, est.std_err1, v1[x0]));
        hits2 += usize::from(within(est.mean2, est.std_err2, v2[x0]));
    }
    // A 4σ band misses with probability about 6e-5 per instance.
    assert!(hits1 >= instances as usize - 2 && hits2 >= instances as usize - 2, "{hits1} {hits2}");
}

#[test]
fn killing_and_cutoff_modes_agree() {
    let mut rng = common::rng(0x51a2);
    for i in 0..10 {
        let game = common::general(&mut rng, 4);
        let n = game.num_states();
        let (p1, p2) = (common::profile(&mut rng, n), common::profile(&mut rng, n));
        let label = game.space().label(0).to_string();
        let a = estimate_payoffs(&game, &p1, &p2, &config(40_000, i, &label, HorizonMode::GeometricKilling)).unwrap();
        let b = estimate_payoffs(&game, &p1, &p2, &config(40_000, i + 100, &label, HorizonMode::DiscountedCutoff(200)))
            .unwrap();
        let tail = game.alpha().powi(200) * game.payoff_scale();
        let se = (a.std_err1.powi(2) + b.std_err1.powi(2)).sqrt();
        assert!((a.mean1 - b.mean1).abs() <= 4.0 * se + tail + 1e-12, "{a:?} {b:?}");
    }
}

#[test]
fn never_fraction_matches_killing_probability() {
    // Two states swapping deterministically; both players stop with probability
    // 0.1 at state 1 and 0.3 at state 2. The chance that nobody stops before the
    // chain is killed solves N = (1-a)(1-b)[(1-α) + α N'] on each state.
    let alpha = 0.8;
    let game = DynkinGame::symmetric(
        vec!["1".into(), "2".into()],
        alpha,
        vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        PayoffTriple::new(vec![1.0, 2.0], vec![0.5, 0.5], vec![0.0, 0.0]),
    )
    .validate()
    .unwrap();
    let p = StoppingProfile::new(vec![0.1, 0.3]).unwrap();
    let (c1, c2) = (0.9f64 * 0.9, 0.7f64 * 0.7);
    // N1 = c1 ((1-α) + α N2), N2 = c2 ((1-α) + α N1)
    let n1 = (c1 * (1.0 - alpha) + c1 * alpha * c2 * (1.0 - alpha)) / (1.0 - c1 * alpha * c2 * alpha);
    let samples = 100_000;
    let est = estimate_payoffs(&game, &p, &p, &config(samples, 17, "1", HorizonMode::GeometricKilling)).unwrap();
    let frac = est.outcome_counts.never as f64 / samples as f64;
    let se = (n1 * (1.0 - n1) / samples as f64).sqrt();
    assert!((frac - n1).abs() <= 4.0 * se, "{frac} vs {n1}");
}

#[test]
fn cutoff_precision_bound_holds() {
    let mut rng = common::rng(0x51a3);
    for _ in 0..20 {
        let game = common::general(&mut rng, 3);
        let steps = cutoff_for_precision(&game, 1e-4);
        assert!(game.alpha().powi(steps as i32) * game.payoff_scale() <= 1e-4 * (1.0 + 1e-12));
    }
}
