//! Projected gradient ascent with backtracking and multistart.
//!
//! The objectives here are maximized over a linear subspace (usually the
//! `mu`-mean-zero functions), optionally followed by a retraction back onto a
//! normalization surface. Each start owns its state; starts run through
//! [`crate::par`] and the best value is picked afterwards in start order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscentOptions {
    pub starts: usize,
    pub max_iters: usize,
    /// Initial step length.
    pub step: f64,
    /// Stop when the projected gradient norm drops below `tol * max(1, |value|)`.
    pub tol: f64,
    pub seed: u64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            starts: 16,
            max_iters: 5000,
            step: 1.0,
            tol: 1e-7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct AscentRun {
    pub value: f64,
    pub point: Vec<f64>,
    pub converged: bool,
}

/// Relative gradient size accepted when backtracking stalls at round-off.
const STALL_TOL: f64 = 1e-5;
const ARMIJO: f64 = 1e-4;

/// Single-start ascent. `eval` returns `(value, gradient)` or `None` when
/// the point is outside the objective's domain; `project` maps a gradient to
/// an admissible direction; `retract` maps a trial point back to the
/// feasible set and returns `false` when it cannot.
pub(crate) fn ascend<E, P, R>(
    eval: &E,
    project: &P,
    retract: &R,
    start: Vec<f64>,
    opts: &AscentOptions,
) -> Option<AscentRun>
where
    E: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
    P: Fn(&mut [f64]),
    R: Fn(&mut [f64]) -> bool,
{
    let mut u = start;
    let (mut value, mut grad) = eval(&u)?;
    let mut step = opts.step;
    for _ in 0..opts.max_iters {
        let mut d = grad.clone();
        project(&mut d);
        let dn2: f64 = d.iter().map(|v| v * v).sum();
        let dn = dn2.sqrt();
        let scale = value.abs().max(1.0);
        if dn <= opts.tol * scale {
            return Some(AscentRun {
                value,
                point: u,
                converged: true,
            });
        }
        let mut accepted = false;
        while step > 1e-20 {
            let mut cand: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            if retract(&mut cand) {
                if let Some((v2, g2)) = eval(&cand) {
                    if v2 >= value + ARMIJO * step * dn2 {
                        u = cand;
                        value = v2;
                        grad = g2;
                        accepted = true;
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        if !accepted {
            return Some(AscentRun {
                value,
                point: u,
                converged: dn <= STALL_TOL * scale,
            });
        }
        step = (step * 2.0).min(1e6);
    }
    Some(AscentRun {
        value,
        point: u,
        converged: false,
    })
}

/// Random start vectors in `[-1, 1]^n`, one independent stream per start.
pub(crate) fn random_starts(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
        })
        .collect()
}

/// Runs `ascend` from each start and returns all runs in start order.
pub(crate) fn multistart<E, P, R>(
    eval: &E,
    project: &P,
    retract: &R,
    starts: Vec<Vec<f64>>,
    opts: &AscentOptions,
) -> Vec<Option<AscentRun>>
where
    E: Fn(&[f64]) -> Option<(f64, Vec<f64>)> + Sync,
    P: Fn(&mut [f64]) + Sync,
    R: Fn(&mut [f64]) -> bool + Sync,
{
    par::map(&starts, |s| {
        let mut s = s.clone();
        if !retract(&mut s) {
            return None;
        }
        ascend(eval, project, retract, s, opts)
    })
}

/// Best run by value. Runs within `1e-9` (relative) of the top count as
/// ties; a converged one is preferred, then the earliest start.
pub(crate) fn best(runs: Vec<Option<AscentRun>>) -> Option<(AscentRun, usize)> {
    let runs: Vec<AscentRun> = runs.into_iter().flatten().collect();
    let converged = runs.iter().filter(|r| r.converged).count();
    let top = runs
        .iter()
        .map(|r| r.value)
        .fold(f64::NEG_INFINITY, f64::max);
    let near = |r: &AscentRun| r.value >= top - 1e-9 * top.abs().max(1.0);
    let pick = runs
        .iter()
        .position(|r| r.converged && near(r))
        .or_else(|| runs.iter().position(|r| r.value == top))?;
    Some((runs.into_iter().nth(pick)?, converged))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximizes_concave_quadratic() {
        // max -(x-1)^2 - 2(y+3)^2
        let eval = |u: &[f64]| {
            let v = -(u[0] - 1.0).powi(2) - 2.0 * (u[1] + 3.0).powi(2);
            Some((v, vec![-2.0 * (u[0] - 1.0), -4.0 * (u[1] + 3.0)]))
        };
        let run = ascend(
            &eval,
            &|_| {},
            &|_| true,
            vec![0.0, 0.0],
            &AscentOptions::default(),
        )
        .unwrap();
        assert!(run.converged);
        assert!((run.point[0] - 1.0).abs() < 1e-7);
        assert!((run.point[1] + 3.0).abs() < 1e-7);
    }

    #[test]
    fn random_starts_are_reproducible() {
        assert_eq!(random_starts(4, 3, 7), random_starts(4, 3, 7));
        assert_ne!(random_starts(4, 3, 7), random_starts(4, 3, 8));
    }
}
