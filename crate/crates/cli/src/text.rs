use std::fmt::Write;

use dynkin::general::Verdict;
use dynkin::simulate::HorizonMode;
use dynkin::{GameClass, SolverPath};

use crate::RunReport;

fn class_line(c: &GameClass) -> String {
    if c.is_zero_sum {
        let med = if c.med_condition { "holds" } else { "fails" };
        format!("zero-sum, middle-value condition {med}")
    } else if c.is_symmetric {
        let eq = if c.f_equals_h { "f = h" } else { "f ≠ h" };
        format!("symmetric, {eq}")
    } else {
        "general".to_string()
    }
}

fn path_name(p: SolverPath) -> &'static str {
    match p {
        SolverPath::MedIteration => "middle-value iteration with pure assembly",
        SolverPath::Shapley => "Shapley iteration",
        SolverPath::ClosedForm => "closed-form symmetric profile",
        SolverPath::SymmetricFixedPoint => "symmetric fixed-point search",
        SolverPath::GeneralSearch => "best-response search",
        SolverPath::PureDiagnostics => "pure-equilibrium diagnostics",
    }
}

fn state_set(labels: &[String], states: &[usize]) -> String {
    let names: Vec<&str> = states.iter().map(|&x| labels[x].as_str()).collect();
    format!("{{{}}}", names.join(", "))
}

pub(crate) fn render(r: &RunReport) -> String {
    let labels = &r.game.states;
    let mut s = String::new();
    let _ = writeln!(s, "game:     {} state(s), alpha {}", labels.len(), r.game.alpha);
    let _ = writeln!(s, "class:    {}", class_line(&r.classification));
    if let Some(path) = r.solver_path {
        let _ = writeln!(s, "path:     {}", path_name(path));
    }

    if let Some(eq) = &r.equilibrium {
        match &eq.verdict {
            Verdict::Verified => {
                let _ = writeln!(s, "verdict:  verified (max residual {:e})", eq.max_residual);
            }
            Verdict::Failed {
                state,
                condition,
                residual,
            } => {
                let _ = writeln!(
                    s,
                    "verdict:  failed; worst condition: {condition} at state {}, residual {residual:e}",
                    labels[*state]
                );
            }
        }
        if r.solver_path.is_some() {
            let _ = writeln!(s, "rounds:   {}", eq.iterations);
        }
        let _ = writeln!(s, "{:<10} {:>24} {:>24} {:>24} {:>24}", "state", "p1", "p2", "V1", "V2");
        for (x, label) in labels.iter().enumerate() {
            let _ = writeln!(
                s,
                "{label:<10} {:>24} {:>24} {:>24} {:>24}",
                eq.p1[x], eq.p2[x], eq.v1[x], eq.v2[x]
            );
        }
    }

    if let Some(d) = &r.diagnostics {
        let _ = writeln!(s, "M1 (f ∨ g < h): {}", state_set(labels, &d.m1));
        let _ = writeln!(s, "M2 (h < f ∧ g): {}", state_set(labels, &d.m2));
        if let Some(v) = &d.v_m1 {
            for &x in &d.m1 {
                let _ = writeln!(s, "V_M1({}) = {}", labels[x], v[x]);
            }
        }
        if let Some(v) = &d.v_m2 {
            for &x in &d.m2 {
                let _ = writeln!(s, "V_M2({}) = {}", labels[x], v[x]);
            }
        }
        for x in d.witnesses() {
            let _ = writeln!(s, "witness state {}", labels[x]);
        }
        if d.pure_impossible {
            let _ = writeln!(s, "diagnosis: pure impossible");
        } else {
            let _ = writeln!(s, "diagnosis: no witness; pure equilibria not ruled out");
        }
        match d.pure_exists {
            Some(true) => {
                let _ = writeln!(s, "exact check: a pure equilibrium exists");
            }
            Some(false) => {
                let _ = writeln!(s, "exact check: no pure equilibrium");
            }
            None => {}
        }
    }

    if let Some(sim) = &r.simulation {
        let e = &sim.estimate;
        let horizon = match sim.horizon {
            HorizonMode::GeometricKilling => "geometric killing".to_string(),
            HorizonMode::DiscountedCutoff(n) => format!("discounted, cut off after {n} steps"),
        };
        let _ = writeln!(s, "start:    {}", sim.initial_state);
        let _ = writeln!(s, "episodes: {} (seed {}, {horizon})", e.samples, sim.seed);
        let _ = writeln!(s, "player 1: {} ± {} (exact {})", e.mean1, e.std_err1, sim.exact[0]);
        let _ = writeln!(s, "player 2: {} ± {} (exact {})", e.mean2, e.std_err2, sim.exact[1]);
        let c = &e.outcome_counts;
        let _ = writeln!(
            s,
            "outcomes: player 1 first {}, player 2 first {}, simultaneous {}, never {}",
            c.player1_first, c.player2_first, c.simultaneous, c.never
        );
    }

    if let Some(t) = &r.timings {
        let _ = writeln!(s, "time:     load {:.3} ms, solve {:.3} ms", t.load_seconds * 1e3, t.solve_seconds * 1e3);
    }
    if let Some(f) = &r.failure {
        let _ = writeln!(s, "failure:  {f}");
    }
    s
}
