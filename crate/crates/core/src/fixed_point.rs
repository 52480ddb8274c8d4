//! Shared value-iteration driver for the α-contractions used throughout the crate.

/// Outcome of [`iterate`].
#[derive(Debug, Clone)]
pub(crate) struct Iterate {
    pub value: Vec<f64>,
    pub last_change: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl Iterate {
    /// Updates that changed the iterate; the final, confirming step of a
    /// converged run is not counted.
    pub fn updates(&self) -> usize {
        self.iterations - usize::from(self.converged)
    }
}

pub(crate) fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

pub(crate) fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Stop threshold on the sup-norm change that guarantees a fixed-point
/// residual below `tol` for an `alpha`-contraction.
pub(crate) fn residual_threshold(tol: f64, alpha: f64) -> f64 {
    tol * (1.0 - alpha) / (2.0 * alpha)
}

/// Repeats `step(current, next)` until the sup-norm change drops below
/// `threshold`, or stops shrinking once it is at rounding level relative to
/// the iterate's magnitude. Small components keep converging while the
/// change still falls.
pub(crate) fn iterate(
    init: Vec<f64>,
    threshold: f64,
    max_iter: usize,
    mut step: impl FnMut(&[f64], &mut [f64]),
) -> Iterate {
    let mut current = init;
    let mut next = vec![0.0; current.len()];
    let mut last_change = f64::INFINITY;
    for it in 1..=max_iter {
        step(&current, &mut next);
        let previous = last_change;
        last_change = sup_distance(&current, &next);
        std::mem::swap(&mut current, &mut next);
        let floor = 8.0 * f64::EPSILON * sup_norm(&current).max(1.0);
        if last_change < threshold || (last_change <= floor && last_change >= previous) {
            return Iterate {
                value: current,
                last_change,
                iterations: it,
                converged: true,
            };
        }
    }
    Iterate {
        value: current,
        last_change,
        iterations: max_iter,
        converged: false,
    }
}
