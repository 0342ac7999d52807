//! Executable checks of the eigenvalue and integral inequalities, the
//! Trudinger–Moser functional and the Sobolev embedding constants.
//!
//! All supremum searches run over `mu`-mean-zero functions: the
//! `W^{1,p}` quantity vanishes on constants and is a norm only there.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::ascent::{self, AscentOptions};
use crate::calculus::{self, grad_norm_sq_at};
use crate::curvature::{self, CdParams};
use crate::graph::{VertexFunction, WeightedGraph};
use crate::spectral::{self, EigenPair, SpectralError};

/// Exponent above which `exp` is refused.
pub const EXP_OVERFLOW: f64 = 700.0;

#[derive(Debug, thiserror::Error)]
pub enum InequalityError {
    #[error("dimension parameter must satisfy m > 1, got {0}")]
    InvalidDimension(f64),
    #[error("the inequality concerns nonzero eigenvalues, got lambda = {0}")]
    ZeroEigenvalue(f64),
    #[error("denominator sign: need lambda > xi, got lambda = {lambda}, xi = {xi}")]
    DenominatorSign { lambda: f64, xi: f64 },
    #[error("magnitude overflow at vertex '{vertex}': beta |u|^(p/(p-1)) = {exponent}")]
    MagnitudeOverflow { vertex: String, exponent: f64 },
    #[error("alpha-form indefinite on mean-zero subspace: alpha = {alpha} >= 2 lambda_1 = {two_lambda1}")]
    IndefiniteAlphaForm { alpha: f64, two_lambda1: f64 },
    #[error("invalid exponent: {0}")]
    InvalidExponent(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`
    pub slack: f64,
    pub holds: bool,
    pub inputs: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cd_certified: Option<bool>,
}

impl InequalityReport {
    fn new(name: &str, lhs: f64, rhs: f64, inputs: &[(&str, f64)]) -> Self {
        let slack = rhs - lhs;
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            slack,
            holds: slack >= -1e-10 * rhs.abs().max(1.0),
            inputs: inputs.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
            cd_certified: None,
        }
    }
}

fn check_m(m: f64) -> Result<(), InequalityError> {
    if m > 1.0 {
        Ok(())
    } else {
        Err(InequalityError::InvalidDimension(m))
    }
}

fn check_nonzero(lambda: f64) -> Result<(), InequalityError> {
    if lambda.abs() <= 1e-12 {
        Err(InequalityError::ZeroEigenvalue(lambda))
    } else {
        Ok(())
    }
}

/// Eigenvalue lower bound under `CD(m, xi)`: `lambda >= m xi / (m - 1)`.
pub fn check_lambda_bound(
    lambda: f64,
    m: f64,
    xi: f64,
) -> Result<InequalityReport, InequalityError> {
    check_m(m)?;
    check_nonzero(lambda)?;
    Ok(InequalityReport::new(
        "lambda-bound",
        m * xi / (m - 1.0),
        lambda,
        &[("lambda", lambda), ("m", m), ("xi", xi)],
    ))
}

/// `alpha* = 2 lambda^2 / (m (lambda - xi))`.
pub fn alpha_star(lambda: f64, m: f64, xi: f64) -> Result<f64, InequalityError> {
    check_m(m)?;
    if lambda <= xi {
        return Err(InequalityError::DenominatorSign { lambda, xi });
    }
    Ok(2.0 * lambda * lambda / (m * (lambda - xi)))
}

#[derive(Debug, Clone, Serialize)]
pub struct AlphaStarComparison {
    pub lambda1: f64,
    pub m: f64,
    pub xi: f64,
    pub alpha_star: f64,
    /// `alpha* > lambda_1`: the admissible range goes past the first eigenvalue.
    pub exceeds_lambda1: bool,
}

pub fn compare_alpha_star(
    lambda1: f64,
    m: f64,
    xi: f64,
) -> Result<AlphaStarComparison, InequalityError> {
    let a = alpha_star(lambda1, m, xi)?;
    Ok(AlphaStarComparison {
        lambda1,
        m,
        xi,
        alpha_star: a,
        exceeds_lambda1: a > lambda1,
    })
}

/// Integral inequality for an eigenpair:
/// `(2 lambda^2 / (m (lambda - xi))) int u^2 <= int |grad u|^2`,
/// with `|grad u|^2 = 2 Gamma(u,u)`. Also certifies `CD(m, xi)` and echoes
/// the outcome, since the inequality is only guaranteed under it.
pub fn check_theorem2(
    g: &WeightedGraph,
    pair: &EigenPair,
    m: f64,
    xi: f64,
) -> Result<InequalityReport, InequalityError> {
    check_m(m)?;
    let certified = curvature::verify_cd(g, m, xi)
        .map_err(|_| InequalityError::InvalidDimension(m))?
        .holds;
    check_theorem2_certified(g, pair, m, xi, certified)
}

/// [`check_theorem2`] with a CD verdict computed by the caller.
pub fn check_theorem2_certified(
    g: &WeightedGraph,
    pair: &EigenPair,
    m: f64,
    xi: f64,
    cd_certified: bool,
) -> Result<InequalityReport, InequalityError> {
    check_m(m)?;
    let lambda = pair.lambda;
    check_nonzero(lambda)?;
    let coef = alpha_star(lambda, m, xi)?;
    let l2 = calculus::l2_sq(g, &pair.u);
    let grad = 2.0 * calculus::dirichlet_energy(g, &pair.u);
    let mut report = InequalityReport::new(
        "theorem2",
        coef * l2,
        grad,
        &[("lambda", lambda), ("m", m), ("xi", xi)],
    );
    report.cd_certified = Some(cd_certified);
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct NormEquivalence {
    pub alpha: f64,
    /// min of `||u||_alpha^2 / ||u||_{W^{1,2}}^2` over mean-zero `u`
    pub c1: f64,
    /// max of the same ratio
    pub c2: f64,
    pub alpha_star: Option<f64>,
    pub below_alpha_star: Option<bool>,
}

/// Extremes of `||u||_alpha^2 / ||u||_{W^{1,2}}^2` over mean-zero `u`.
/// On the eigenbasis the ratio is `1 - alpha / (2 lambda_k)`.
pub fn norm_equivalence(
    g: &WeightedGraph,
    alpha: f64,
    cd: Option<CdParams>,
) -> Result<NormEquivalence, InequalityError> {
    let pairs = spectral::spectrum(g)?;
    let ratios: Vec<f64> = spectral::nonzero_pairs(&pairs)
        .map(|p| 1.0 - alpha / (2.0 * p.lambda))
        .collect();
    let c1 = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let c2 = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if c1 <= 1e-12 {
        return Err(InequalityError::IndefiniteAlphaForm {
            alpha,
            two_lambda1: 2.0 * pairs[1].lambda,
        });
    }
    let alpha_star = match cd {
        Some(p) => alpha_star(pairs[1].lambda, p.m, p.xi).ok(),
        None => None,
    };
    Ok(NormEquivalence {
        alpha,
        c1,
        c2,
        alpha_star,
        below_alpha_star: alpha_star.map(|a| alpha < a),
    })
}

/// Warnings for parameters outside `beta > 1, p > 2`.
pub fn tm_parameter_warnings(beta: f64, p: f64) -> Vec<String> {
    let mut w = Vec::new();
    if !(beta > 1.0) {
        w.push(format!("beta = {beta} is outside the range beta > 1"));
    }
    if !(p > 2.0) {
        w.push(format!("p = {p} is outside the range p > 2"));
    }
    w
}

fn tm_exponent(p: f64) -> Result<f64, InequalityError> {
    if !(p > 1.0) {
        return Err(InequalityError::InvalidExponent(format!(
            "Trudinger-Moser exponent needs p > 1, got {p}"
        )));
    }
    Ok(p / (p - 1.0))
}

/// `int exp(beta |u|^(p/(p-1))) dmu`.
pub fn tm_functional(
    g: &WeightedGraph,
    u: &[f64],
    beta: f64,
    p: f64,
) -> Result<f64, InequalityError> {
    let r = tm_exponent(p)?;
    let mut total = 0.0;
    for x in 0..g.len() {
        let e = beta * u[x].abs().powf(r);
        if e > EXP_OVERFLOW {
            return Err(InequalityError::MagnitudeOverflow {
                vertex: g.label(x).to_string(),
                exponent: e,
            });
        }
        total += g.mu(x) * e.exp();
    }
    Ok(total)
}

/// Gradient of `int |grad u|^s dmu` with respect to the vertex values.
fn grad_power_gradient(g: &WeightedGraph, u: &[f64], s: f64) -> Vec<f64> {
    let mut grad = vec![0.0; g.len()];
    for x in 0..g.len() {
        let gx = grad_norm_sq_at(g, u, x);
        if gx == 0.0 {
            continue;
        }
        let c = 0.5 * s * gx.powf(0.5 * s - 1.0);
        for &(y, w) in g.neighbors(x) {
            let t = c * 2.0 * w * (u[y] - u[x]);
            grad[y] += t;
            grad[x] -= t;
        }
    }
    grad
}

/// Euclidean projection onto `{v : sum_x mu(x) v(x) = 0}`.
fn project_mean_zero(g: &WeightedGraph, d: &mut [f64]) {
    let mu = g.measure();
    let mm: f64 = mu.iter().map(|m| m * m).sum();
    let md: f64 = mu.iter().zip(d.iter()).map(|(m, v)| m * v).sum();
    let c = md / mm;
    d.iter_mut().zip(mu).for_each(|(v, m)| *v -= c * m);
}

/// Moves a start onto the mean-zero sphere `||u||_{W^{1,s}} = 1`.
fn normalize_sobolev(g: &WeightedGraph, u: &mut [f64], s: f64) -> bool {
    calculus::remove_mean(g, u);
    let n = calculus::grad_power_integral(g, u, s).powf(1.0 / s);
    if !(n > 1e-300) || !n.is_finite() {
        return false;
    }
    u.iter_mut().for_each(|v| *v /= n);
    true
}

/// Deterministic starts: the first nonconstant eigenfunction, then seeded
/// random vectors.
fn start_points(g: &WeightedGraph, opts: &AscentOptions) -> Vec<Vec<f64>> {
    let mut starts = Vec::with_capacity(opts.starts);
    if opts.starts > 0 {
        if let Ok(pairs) = spectral::spectrum(g) {
            starts.push(pairs[1].u.to_vec());
        }
    }
    let remaining = opts.starts.saturating_sub(starts.len());
    // values are drawn in label order, so relabeling permutes the starts
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by_key(|&x| g.label(x));
    starts.extend(
        ascent::random_starts(g.len(), remaining, opts.seed)
            .into_iter()
            .map(|r| {
                let mut u = vec![0.0; g.len()];
                order.iter().zip(r).for_each(|(&x, v)| u[x] = v);
                u
            }),
    );
    // one spike per vertex: maximizers concentrate on light vertices
    if opts.starts > 0 {
        starts.extend((0..g.len()).map(|x| {
            let mut u = vec![0.0; g.len()];
            u[x] = 1.0;
            u
        }));
    }
    starts
}

#[derive(Debug, Clone, Serialize)]
pub struct SobolevEstimate {
    pub s: f64,
    /// `None` encodes `q = infinity`.
    pub q: Option<f64>,
    pub value: f64,
    pub maximizer: VertexFunction,
    pub converged: bool,
}

/// Best constant in `||u||_q <= C ||u||_{W^{1,s}}` over mean-zero `u`.
/// `q = f64::INFINITY` selects the sup norm.
pub fn sobolev_constant(
    g: &WeightedGraph,
    s: f64,
    q: f64,
    opts: &AscentOptions,
) -> Result<SobolevEstimate, InequalityError> {
    if !(s > 1.0) {
        return Err(InequalityError::InvalidExponent(format!(
            "need s > 1, got {s}"
        )));
    }
    if !(q >= 1.0) {
        return Err(InequalityError::InvalidExponent(format!(
            "need q >= 1, got {q}"
        )));
    }
    if q.is_infinite() {
        return Ok(sobolev_sup_constant(g, s, opts));
    }
    let eval = |u: &[f64]| -> Option<(f64, Vec<f64>)> {
        // log ||u||_q - log ||u||_{W^{1,s}}
        let lq: f64 = (0..g.len()).map(|x| g.mu(x) * u[x].abs().powf(q)).sum();
        let ls = calculus::grad_power_integral(g, u, s);
        if !(lq > 0.0 && ls > 0.0) {
            return None;
        }
        let value = lq.ln() / q - ls.ln() / s;
        let gs = grad_power_gradient(g, u, s);
        let grad = (0..g.len())
            .map(|x| {
                let dq = g.mu(x) * q * u[x].abs().powf(q - 1.0) * u[x].signum();
                dq / (q * lq) - gs[x] / (s * ls)
            })
            .collect();
        Some((value, grad))
    };
    let project = |d: &mut [f64]| project_mean_zero(g, d);
    let retract = |u: &mut [f64]| normalize_sobolev(g, u, s);
    let runs = ascent::multistart(&eval, &project, &retract, start_points(g, opts), opts);
    let (run, _) = ascent::best(runs).expect("at least one start is admissible");
    Ok(SobolevEstimate {
        s,
        q: Some(q),
        value: run.value.exp(),
        maximizer: VertexFunction::from_vec(run.point),
        converged: run.converged,
    })
}

/// `q = infinity`: for each vertex `x`, minimize the convex quantity
/// `int |grad u|^s` over mean-zero `u` with `u(x) = 1`; the constant is
/// `max_x 1 / min^(1/s)`. The sup norm is attained at some vertex, and the
/// problem is symmetric under `u -> -u`, so this is exact up to the inner
/// solver tolerance.
fn sobolev_sup_constant(g: &WeightedGraph, s: f64, opts: &AscentOptions) -> SobolevEstimate {
    let n = g.len();
    let vol = g.total_volume();
    let runs = crate::par::map_range(n, |x| {
        let mut start = vec![-g.mu(x) / (vol - g.mu(x)); n];
        start[x] = 1.0;
        let eval = |u: &[f64]| -> Option<(f64, Vec<f64>)> {
            let v = calculus::grad_power_integral(g, u, s);
            let grad = grad_power_gradient(g, u, s)
                .into_iter()
                .map(|d| -d)
                .collect();
            Some((-v, grad))
        };
        // directions keep u(x) fixed and the mean at zero
        let project = |d: &mut [f64]| {
            d[x] = 0.0;
            let mm: f64 = (0..n).filter(|&y| y != x).map(|y| g.mu(y) * g.mu(y)).sum();
            let md: f64 = (0..n).filter(|&y| y != x).map(|y| g.mu(y) * d[y]).sum();
            let c = md / mm;
            for y in (0..n).filter(|&y| y != x) {
                d[y] -= c * g.mu(y);
            }
        };
        let inner = AscentOptions {
            tol: opts.tol.min(1e-9),
            max_iters: opts.max_iters.max(20_000),
            ..*opts
        };
        let run = ascent::ascend(&eval, &project, &|_| true, start, &inner)
            .expect("feasible start evaluates");
        (x, run)
    });
    let (x, run) = runs
        .into_iter()
        .fold(
            None,
            |acc: Option<(usize, ascent::AscentRun)>, (x, r)| match acc {
                Some((bx, b)) if b.value >= r.value => Some((bx, b)),
                _ => Some((x, r)),
            },
        )
        .expect("graph has vertices");
    let _ = x;
    let min = -run.value;
    let norm = min.powf(1.0 / s);
    let value = 1.0 / norm;
    SobolevEstimate {
        s,
        q: None,
        value,
        maximizer: VertexFunction::from_vec(run.point.iter().map(|v| v / norm).collect()),
        converged: run.converged,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TmEstimate {
    pub beta: f64,
    pub p: f64,
    pub empirical_sup: f64,
    /// Mean-zero with unit `W^{1,p}` seminorm.
    pub maximizer: VertexFunction,
    /// `C |V|` with `C = exp(beta C0 / mu_min)^(p/(p-1))`; may be infinite.
    pub theoretical_bound: f64,
    pub log_theoretical_bound: f64,
    /// Sobolev constant for `W^{1,p} -> L^{p/(p-1)}`.
    pub c0: f64,
    pub mu_min: f64,
    pub volume: f64,
    pub converged: bool,
    pub starts_converged: usize,
    /// `empirical_sup <= theoretical_bound`, compared in log space.
    pub bound_holds: bool,
    pub warnings: Vec<String>,
}

/// Maximizes the Trudinger–Moser functional over mean-zero `u` with
/// `||u||_{W^{1,p}} = 1` and compares it with the explicit bound.
pub fn tm_sup_estimate(
    g: &WeightedGraph,
    beta: f64,
    p: f64,
    opts: &AscentOptions,
) -> Result<TmEstimate, InequalityError> {
    let r = tm_exponent(p)?;
    let mut warnings = tm_parameter_warnings(beta, p);

    let eval = |u: &[f64]| -> Option<(f64, Vec<f64>)> {
        // u is on the unit sphere, so grad of Phi(u / N(u)) is
        // grad Phi - (grad Phi . u) grad N with grad N = grad(N^p) / p
        let mut dphi = vec![0.0; g.len()];
        let mut value = 0.0;
        for x in 0..g.len() {
            let a = u[x].abs();
            let e = beta * a.powf(r);
            if e > EXP_OVERFLOW {
                return None;
            }
            let ex = e.exp();
            value += g.mu(x) * ex;
            dphi[x] = g.mu(x) * beta * r * a.powf(r - 1.0) * u[x].signum() * ex;
        }
        let dn = grad_power_gradient(g, u, p);
        let along: f64 = dphi.iter().zip(u).map(|(a, b)| a * b).sum();
        let grad = dphi
            .iter()
            .zip(&dn)
            .map(|(a, b)| a - along * b / p)
            .collect();
        Some((value, grad))
    };
    let project = |d: &mut [f64]| project_mean_zero(g, d);
    let retract = |u: &mut [f64]| normalize_sobolev(g, u, p);
    let runs = ascent::multistart(&eval, &project, &retract, start_points(g, opts), opts);
    let (run, starts_converged) = ascent::best(runs).expect("at least one start is admissible");
    if !run.converged {
        warnings.push("not converged".to_string());
    }

    let c0 = sobolev_constant(g, p, r, opts)?;
    if !c0.converged {
        warnings.push("Sobolev constant search not converged".to_string());
    }
    let mu_min = g.min_measure();
    let volume = g.total_volume();
    let log_c = r * beta * c0.value / mu_min;
    let log_bound = log_c + volume.ln();
    Ok(TmEstimate {
        beta,
        p,
        empirical_sup: run.value,
        maximizer: VertexFunction::from_vec(run.point),
        theoretical_bound: log_bound.exp(),
        log_theoretical_bound: log_bound,
        c0: c0.value,
        mu_min,
        volume,
        converged: run.converged,
        starts_converged,
        bound_holds: run.value.ln() <= log_bound,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn k2() -> WeightedGraph {
        WeightedGraph::new(&["a", "b"], &[("a", "b", 1.0)]).unwrap()
    }

    #[test]
    fn lambda_bound_examples() {
        let r = check_lambda_bound(2.0, 2.0, 1.0).unwrap();
        assert!(r.holds);
        assert_eq!(r.slack, 0.0);
        let r = check_lambda_bound(2.0, 2.0, 1.5).unwrap();
        assert!(!r.holds);
        assert!(matches!(
            check_lambda_bound(0.0, 2.0, 1.0),
            Err(InequalityError::ZeroEigenvalue(_))
        ));
    }

    #[test]
    fn alpha_star_examples() {
        assert_eq!(alpha_star(2.0, 2.0, 1.0).unwrap(), 4.0);
        assert_eq!(alpha_star(2.0, 2.0, 0.0).unwrap(), 2.0);
        assert!(matches!(
            alpha_star(1.0, 2.0, 1.0),
            Err(InequalityError::DenominatorSign { .. })
        ));
        let c = compare_alpha_star(2.0, 2.0, 1.0).unwrap();
        assert!(c.exceeds_lambda1);
        let c = compare_alpha_star(2.0, 2.0, 0.0).unwrap();
        assert!(!c.exceeds_lambda1);
    }

    #[test]
    fn tm_functional_examples() {
        let g = k2();
        assert_eq!(tm_functional(&g, &[0.0, 0.0], 2.0, 3.0).unwrap(), 2.0);
        assert_relative_eq!(
            tm_functional(&g, &[1.0, -1.0], 1.0, 3.0).unwrap(),
            2.0 * std::f64::consts::E,
            max_relative = 1e-15
        );
        let err = tm_functional(&g, &[1000.0, 0.0], 2.0, 3.0).unwrap_err();
        assert!(
            matches!(err, InequalityError::MagnitudeOverflow { ref vertex, .. } if vertex == "a")
        );
    }

    #[test]
    fn norm_equivalence_examples() {
        let g = k2();
        let r = norm_equivalence(&g, 0.0, None).unwrap();
        assert_relative_eq!(r.c1, 1.0);
        assert_relative_eq!(r.c2, 1.0);
        let r = norm_equivalence(&g, 2.0, Some(CdParams { m: 2.0, xi: 1.0 })).unwrap();
        assert_relative_eq!(r.c1, 0.5, max_relative = 1e-14);
        assert_relative_eq!(r.c2, 0.5, max_relative = 1e-14);
        assert_eq!(r.below_alpha_star, Some(true));
        assert!(matches!(
            norm_equivalence(&g, 4.0, None),
            Err(InequalityError::IndefiniteAlphaForm { .. })
        ));
    }

    #[test]
    fn sobolev_k2_l2() {
        let c = sobolev_constant(&k2(), 2.0, 2.0, &AscentOptions::default()).unwrap();
        assert_relative_eq!(c.value, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn mean_zero_projection() {
        let g = WeightedGraph::new(&["a", "b", "c"], &[("a", "b", 1.0), ("b", "c", 3.0)]).unwrap();
        let mut d = vec![1.0, 2.0, -0.5];
        project_mean_zero(&g, &mut d);
        assert!(calculus::integrate(&g, &d).abs() < 1e-14);
    }
}
