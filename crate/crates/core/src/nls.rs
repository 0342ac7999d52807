//! Positive solutions of `-Lap u - alpha u = f(x, u)` by a numerical
//! mountain-pass method.
//!
//! The energy is
//!
//! ```text
//! J(u) = 1/2 (c E(u) - alpha int u^2 dmu) - int F(x, u+) dmu
//! ```
//!
//! with `c = 1` for the Dirichlet-energy convention (critical points solve
//! `-Lap u - alpha u = f(x, u+)` exactly) and `c = 2` for the `|grad u|^2`
//! convention (critical points solve `-2 Lap u - alpha u = f(x, u+)`).
//!
//! [`mountain_pass_solve`] builds the segment from `0` to a low-energy
//! endpoint, deforms its highest point by steepest descent and hands the
//! candidate to a damped Newton iteration once the gradient is small.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::calculus::{self, EnergyConvention};
use crate::graph::{VertexFunction, VertexSubsetProblem, WeightedGraph};
use crate::spectral::{self, SpectralError};

/// Values with `|u| <= SIGN_THRESHOLD` count as zero in sign reports.
pub const SIGN_THRESHOLD: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum NlsError {
    #[error("invalid nonlinearity: {0}")]
    InvalidNonlinearity(String),
    #[error("function is not admissible: value {value} at '{vertex}' outside the interior")]
    NotAdmissible { vertex: String, value: f64 },
    #[error("start direction must be nonnegative and nonzero")]
    InvalidStart,
    #[error("no descent endpoint: J(t u0) >= 0 up to t = {t:e}")]
    NoDescentEndpoint { t: f64 },
    #[error("degenerate critical point: smallest singular value of the Jacobian is {sigma_min:e}")]
    DegenerateCriticalPoint { sigma_min: f64 },
    #[error(
        "Newton iteration not converged after {iterations} iterations (residual {residual:e})"
    )]
    NotConverged { iterations: usize, residual: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// A nonlinearity `f(x, t)` together with its primitive and derivative in `t`.
///
/// Only [`PowerNonlinearity`] ships; other families implement this trait.
pub trait Nonlinearity: Sync {
    fn f(&self, x: usize, t: f64) -> f64;
    /// `F(x, t) = int_0^t f(x, s) ds`
    fn primitive(&self, x: usize, t: f64) -> f64;
    /// `d f / d t`, right derivative at 0.
    fn derivative(&self, x: usize, t: f64) -> f64;
}

/// `f(x,t) = a(x) (t+)^(q-1)`, `F(x,t) = a(x) (t+)^q / q`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerNonlinearity {
    pub q: f64,
    pub coef: Vec<f64>,
    /// Exponent used for the Ambrosetti–Rabinowitz check.
    pub ar_exponent: f64,
}

impl PowerNonlinearity {
    pub fn new(q: f64, coef: Vec<f64>) -> Result<Self, NlsError> {
        Self::with_ar_exponent(q, coef, q - 0.5)
    }

    pub fn with_ar_exponent(q: f64, coef: Vec<f64>, ar_exponent: f64) -> Result<Self, NlsError> {
        if !(q > 2.0) || !q.is_finite() {
            return Err(NlsError::InvalidNonlinearity(format!(
                "need q > 2, got {q}"
            )));
        }
        if let Some(a) = coef.iter().find(|a| !(**a >= 0.0) || !a.is_finite()) {
            return Err(NlsError::InvalidNonlinearity(format!(
                "coefficients must be finite and nonnegative, got {a}"
            )));
        }
        Ok(Self {
            q,
            coef,
            ar_exponent,
        })
    }

    pub fn uniform(g: &WeightedGraph, q: f64, a: f64) -> Result<Self, NlsError> {
        Self::new(q, vec![a; g.len()])
    }
}

impl Nonlinearity for PowerNonlinearity {
    #[inline]
    fn f(&self, x: usize, t: f64) -> f64 {
        if t > 0.0 {
            self.coef[x] * t.powf(self.q - 1.0)
        } else {
            0.0
        }
    }

    #[inline]
    fn primitive(&self, x: usize, t: f64) -> f64 {
        if t > 0.0 {
            self.coef[x] * t.powf(self.q) / self.q
        } else {
            0.0
        }
    }

    #[inline]
    fn derivative(&self, x: usize, t: f64) -> f64 {
        if t > 0.0 {
            self.coef[x] * (self.q - 1.0) * t.powf(self.q - 2.0)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum Mode {
    /// Functions on all of `V`.
    Whole,
    /// Functions vanishing outside the interior.
    Dirichlet(VertexSubsetProblem),
}

impl Mode {
    #[inline]
    fn is_free(&self, x: usize) -> bool {
        match self {
            Mode::Whole => true,
            Mode::Dirichlet(p) => p.contains(x),
        }
    }

    fn free(&self, n: usize) -> Vec<usize> {
        (0..n).filter(|&x| self.is_free(x)).collect()
    }

    fn check(&self, g: &WeightedGraph, u: &[f64]) -> Result<(), NlsError> {
        if let Some(x) = (0..g.len()).find(|&x| !self.is_free(x) && u[x] != 0.0) {
            return Err(NlsError::NotAdmissible {
                vertex: g.label(x).to_string(),
                value: u[x],
            });
        }
        Ok(())
    }
}

/// The energy functional `J`.
pub fn functional_j(
    g: &WeightedGraph,
    u: &[f64],
    alpha: f64,
    f: &dyn Nonlinearity,
    mode: &Mode,
    convention: EnergyConvention,
) -> Result<f64, NlsError> {
    mode.check(g, u)?;
    Ok(energy(g, u, alpha, f, convention))
}

fn energy(
    g: &WeightedGraph,
    u: &[f64],
    alpha: f64,
    f: &dyn Nonlinearity,
    convention: EnergyConvention,
) -> f64 {
    let quad =
        convention.factor() * calculus::dirichlet_energy(g, u) - alpha * calculus::l2_sq(g, u);
    let nonlinear: f64 = (0..g.len()).map(|x| g.mu(x) * f.primitive(x, u[x])).sum();
    0.5 * quad - nonlinear
}

/// The `mu`-gradient of `J`: `d/de J(u + e v)|_0 = int grad_J v dmu` for all
/// admissible `v`. Zero outside the interior in Dirichlet mode.
pub fn gradient_j(
    g: &WeightedGraph,
    u: &[f64],
    alpha: f64,
    f: &dyn Nonlinearity,
    mode: &Mode,
    convention: EnergyConvention,
) -> Result<VertexFunction, NlsError> {
    mode.check(g, u)?;
    Ok(VertexFunction::from_vec(gradient(
        g, u, alpha, f, mode, convention,
    )))
}

fn gradient(
    g: &WeightedGraph,
    u: &[f64],
    alpha: f64,
    f: &dyn Nonlinearity,
    mode: &Mode,
    convention: EnergyConvention,
) -> Vec<f64> {
    let c = convention.factor();
    (0..g.len())
        .map(|x| {
            if mode.is_free(x) {
                -c * calculus::laplacian_at(g, u, x) - alpha * u[x] - f.f(x, u[x])
            } else {
                0.0
            }
        })
        .collect()
}

/// `(int_free v^2 dmu)^(1/2)`
fn mu_norm(g: &WeightedGraph, v: &[f64]) -> f64 {
    calculus::l2_sq(g, v).sqrt()
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignReport {
    Positive,
    Nonnegative,
    SignChanging,
    Nonpositive,
    Trivial,
}

/// Sign classification on the free vertices.
pub fn sign_report(u: &[f64], mode: &Mode) -> SignReport {
    let free: Vec<f64> = u
        .iter()
        .enumerate()
        .filter(|&(x, _)| mode.is_free(x))
        .map(|(_, &v)| v)
        .collect();
    let pos = free.iter().any(|&v| v > SIGN_THRESHOLD);
    let neg = free.iter().any(|&v| v < -SIGN_THRESHOLD);
    match (pos, neg) {
        (false, false) => SignReport::Trivial,
        (true, true) => SignReport::SignChanging,
        (false, true) => SignReport::Nonpositive,
        (true, false) if free.iter().all(|&v| v > SIGN_THRESHOLD) => SignReport::Positive,
        (true, false) => SignReport::Nonnegative,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    NotConverged,
    /// `0` is not a strict local minimum of `J` on the admissible space,
    /// so there is no mountain to cross.
    NoMountainPassGeometry,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SolverTrace {
    /// Highest energy on the discrete path, one entry per deformation step.
    pub path_max: Vec<f64>,
    /// `mu`-norm of the gradient at the path maximizer, per step.
    pub grad_norm: Vec<f64>,
    /// Residual after each Newton iteration of the accepted refinement.
    pub newton_residuals: Vec<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub u: VertexFunction,
    pub j_value: f64,
    /// `max_x |c(-Lap u) - alpha u - f(x, u+)|` over the free vertices.
    pub residual: f64,
    /// `mu`-norm of the gradient of `J`.
    pub gradient_norm: f64,
    /// `max_x |-Lap u - alpha u - f(x, u+)|` over the free vertices; equals
    /// `residual` in the Dirichlet-energy convention.
    pub equation_residual: f64,
    pub sign_report: SignReport,
    pub status: SolveStatus,
    pub newton_iterations: usize,
    pub trace: SolverTrace,
}

struct Problem<'a> {
    g: &'a WeightedGraph,
    alpha: f64,
    f: &'a dyn Nonlinearity,
    mode: &'a Mode,
    convention: EnergyConvention,
}

impl Problem<'_> {
    fn energy(&self, u: &[f64]) -> f64 {
        energy(self.g, u, self.alpha, self.f, self.convention)
    }

    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        gradient(self.g, u, self.alpha, self.f, self.mode, self.convention)
    }

    fn solution(
        &self,
        u: Vec<f64>,
        status: SolveStatus,
        newton_iterations: usize,
        trace: SolverTrace,
    ) -> Solution {
        let grad = self.gradient(&u);
        let literal = gradient(
            self.g,
            &u,
            self.alpha,
            self.f,
            self.mode,
            EnergyConvention::DirichletEnergy,
        );
        Solution {
            equation_residual: sup_norm(&literal),
            j_value: self.energy(&u),
            residual: sup_norm(&grad),
            gradient_norm: mu_norm(self.g, &grad),
            sign_report: sign_report(&u, self.mode),
            status,
            newton_iterations,
            trace,
            u: VertexFunction::from_vec(u),
        }
    }
}

/// Smallest `t = 2^k` with `J(t u0) < 0`.
pub fn find_endpoint(
    g: &WeightedGraph,
    u0: &[f64],
    alpha: f64,
    f: &dyn Nonlinearity,
    mode: &Mode,
    convention: EnergyConvention,
) -> Result<(f64, VertexFunction), NlsError> {
    mode.check(g, u0)?;
    if u0.iter().any(|&v| v < 0.0) || u0.iter().all(|&v| v == 0.0) {
        return Err(NlsError::InvalidStart);
    }
    let mut t = 1.0f64;
    let limit = 2f64.powi(60);
    while t <= limit {
        let e: Vec<f64> = u0.iter().map(|v| t * v).collect();
        let j = energy(g, &e, alpha, f, convention);
        if j < 0.0 {
            return Ok((t, VertexFunction::from_vec(e)));
        }
        t *= 2.0;
    }
    Err(NlsError::NoDescentEndpoint { t: limit })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartChoice {
    /// Positive part of the first nonconstant eigenfunction, with fallbacks.
    Eigenfunction,
    Ones,
    /// Absolute values of seeded uniform noise.
    Random,
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, Serialize)]
pub struct MountainPassOptions {
    /// Number of segments of the discrete path.
    pub path_points: usize,
    pub max_steps: usize,
    /// Residual threshold for accepting a solution.
    pub tol: f64,
    /// Gradient-norm threshold for accepting a solution.
    pub grad_tol: f64,
    /// Gradient norm at the path maximizer below which Newton is tried.
    pub switch_threshold: f64,
    pub newton_max_iters: usize,
    pub seed: u64,
    pub start: StartChoice,
}

impl Default for MountainPassOptions {
    fn default() -> Self {
        Self {
            path_points: 40,
            max_steps: 5000,
            tol: 1e-10,
            grad_tol: 1e-8,
            switch_threshold: 1e-2,
            newton_max_iters: 50,
            seed: 0,
            start: StartChoice::Eigenfunction,
        }
    }
}

fn default_start(
    g: &WeightedGraph,
    mode: &Mode,
    choice: &StartChoice,
    seed: u64,
) -> Result<Vec<f64>, NlsError> {
    let n = g.len();
    let mask = |mut v: Vec<f64>| {
        for (x, val) in v.iter_mut().enumerate() {
            if !mode.is_free(x) {
                *val = 0.0;
            }
        }
        v
    };
    let fallback = || match mode {
        Mode::Whole => vec![1.0; n],
        Mode::Dirichlet(p) => {
            let mut v = vec![0.0; n];
            v[p.interior()[0]] = 1.0;
            v
        }
    };
    let u = match choice {
        StartChoice::Eigenfunction => {
            let pairs = spectral::spectrum(g)?;
            let v = mask(pairs[1].u.iter().map(|&v| v.max(0.0)).collect());
            if v.iter().any(|&x| x > SIGN_THRESHOLD) {
                v
            } else {
                fallback()
            }
        }
        StartChoice::Ones => mask(vec![1.0; n]),
        StartChoice::Random => {
            let v = crate::ascent::random_starts(n, 1, seed).remove(0);
            mask(v.into_iter().map(f64::abs).collect())
        }
        StartChoice::Custom(v) => {
            if v.len() != n {
                return Err(NlsError::InvalidParameter(format!(
                    "start has {} values, graph has {n} vertices",
                    v.len()
                )));
            }
            mode.check(g, v)?;
            v.clone()
        }
    };
    let norm = calculus::l2_sq(g, &u).sqrt();
    if !(norm > 0.0) || u.iter().any(|&v| v < 0.0) {
        return Err(NlsError::InvalidStart);
    }
    Ok(u.into_iter().map(|v| v / norm).collect())
}

/// `c lambda_min - alpha`, where `lambda_min` is the bottom of the spectrum
/// of `-Lap` on the admissible space. Positive iff `0` is a strict local
/// minimum of `J` (the nonlinear term is `o(t^2)` at `0`).
pub fn quadratic_margin(
    g: &WeightedGraph,
    alpha: f64,
    mode: &Mode,
    convention: EnergyConvention,
) -> Result<f64, NlsError> {
    let lambda = match mode {
        Mode::Whole => 0.0,
        Mode::Dirichlet(p) => spectral::dirichlet_lambda1(g, p)?.lambda,
    };
    Ok(convention.factor() * lambda - alpha)
}

fn dist(g: &WeightedGraph, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    mu_norm(g, &d)
}

fn lerp(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
}

/// Maximum of `J` on the segment `[a, b]` and its parameter: coarse
/// sampling followed by golden-section refinement around each sampled peak.
fn segment_max(prob: &Problem<'_>, a: &[f64], b: &[f64]) -> (f64, f64) {
    const SAMPLES: usize = 32;
    let at = |s: f64| prob.energy(&lerp(a, b, s));
    let vals: Vec<f64> = (0..=SAMPLES)
        .map(|j| at(j as f64 / SAMPLES as f64))
        .collect();
    let mut best = (vals[0], 0.0);
    // refine around every sampled local maximum; J may have several bumps
    for j in 0..=SAMPLES {
        let left_ok = j == 0 || vals[j] >= vals[j - 1];
        let right_ok = j == SAMPLES || vals[j] >= vals[j + 1];
        if !(left_ok && right_ok) {
            continue;
        }
        if vals[j] > best.0 {
            best = (vals[j], j as f64 / SAMPLES as f64);
        }
        let cand = golden_max(
            &at,
            j.saturating_sub(1) as f64 / SAMPLES as f64,
            (j + 1).min(SAMPLES) as f64 / SAMPLES as f64,
        );
        if cand.0 > best.0 {
            best = cand;
        }
    }
    best
}

fn golden_max(at: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut x1, mut x2) = (hi - ratio * (hi - lo), lo + ratio * (hi - lo));
    let (mut f1, mut f2) = (at(x1), at(x2));
    for _ in 0..48 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = at(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = at(x1);
        }
    }
    if f1 >= f2 {
        (f1, x1)
    } else {
        (f2, x2)
    }
}

/// Piecewise-linear path with the maximum of `J` on each segment cached.
struct Polygon {
    nodes: Vec<Vec<f64>>,
    seg: Vec<(f64, f64)>,
}

impl Polygon {
    fn new(prob: &Problem<'_>, nodes: Vec<Vec<f64>>) -> Self {
        let seg = nodes
            .windows(2)
            .map(|w| segment_max(prob, &w[0], &w[1]))
            .collect();
        Self { nodes, seg }
    }

    /// `(segment, value, parameter)` of the highest point; first one on ties.
    fn argmax(&self) -> (usize, f64, f64) {
        let k =
            (0..self.seg.len()).fold(0, |b, i| if self.seg[i].0 > self.seg[b].0 { i } else { b });
        (k, self.seg[k].0, self.seg[k].1)
    }

    fn top(&self) -> f64 {
        self.argmax().1
    }

    /// Splits segment `k` at `s` if both halves stay at or below `cap`.
    fn split(&mut self, prob: &Problem<'_>, k: usize, s: f64, cap: f64) -> bool {
        let p = lerp(&self.nodes[k], &self.nodes[k + 1], s);
        let left = segment_max(prob, &self.nodes[k], &p);
        let right = segment_max(prob, &p, &self.nodes[k + 1]);
        if left.0 > cap || right.0 > cap {
            return false;
        }
        self.nodes.insert(k + 1, p);
        self.seg[k] = left;
        self.seg.insert(k + 1, right);
        true
    }

    /// Drops one interior node (shortest neighbourhood first, never `keep`)
    /// whose removal keeps every segment at or below `cap` and no longer
    /// than `max_len`.
    fn coarsen(
        &mut self,
        g: &WeightedGraph,
        prob: &Problem<'_>,
        keep: usize,
        cap: f64,
        max_len: f64,
    ) -> bool {
        let len = |i: usize| {
            dist(g, &self.nodes[i - 1], &self.nodes[i])
                + dist(g, &self.nodes[i], &self.nodes[i + 1])
        };
        let mut order: Vec<(f64, usize)> = (1..self.nodes.len() - 1)
            .filter(|&i| i != keep)
            .map(|i| (len(i), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, i) in order.iter().take(8) {
            if dist(g, &self.nodes[i - 1], &self.nodes[i + 1]) > max_len {
                continue;
            }
            let chord = segment_max(prob, &self.nodes[i - 1], &self.nodes[i + 1]);
            if chord.0 <= cap {
                self.nodes.remove(i);
                self.seg.remove(i);
                self.seg[i - 1] = chord;
                return true;
            }
        }
        false
    }
}

/// Mountain-pass search for a nontrivial critical point of `J`.
///
/// The path is a polygon from `0` to the endpoint. Each step locates the
/// highest point of the polygon, makes it a node and moves it along
/// `-grad J`; a move is accepted only if the two new segments stay below
/// the previous path maximum, so the recorded maxima never increase.
pub fn mountain_pass_solve(
    g: &WeightedGraph,
    alpha: f64,
    f: &dyn Nonlinearity,
    mode: &Mode,
    convention: EnergyConvention,
    opts: &MountainPassOptions,
) -> Result<Solution, NlsError> {
    if opts.path_points < 2 {
        return Err(NlsError::InvalidParameter(
            "path needs at least 2 segments".into(),
        ));
    }
    let prob = Problem {
        g,
        alpha,
        f,
        mode,
        convention,
    };
    let mut trace = SolverTrace::default();
    let u0 = default_start(g, mode, &opts.start, opts.seed)?;
    let (t, e) = find_endpoint(g, &u0, alpha, f, mode, convention)?;
    trace.notes.push(format!("endpoint at t = {t}"));

    let margin = quadratic_margin(g, alpha, mode, convention)?;
    if margin <= 1e-12 {
        trace.notes.push(format!(
            "quadratic part of J at 0 is not positive definite (c lambda_min - alpha = {margin}); \
             no mountain-pass geometry"
        ));
        return Ok(prob.solution(
            vec![0.0; g.len()],
            SolveStatus::NoMountainPassGeometry,
            0,
            trace,
        ));
    }

    let nseg = opts.path_points;
    let nodes = (0..=nseg)
        .map(|i| lerp(&vec![0.0; g.len()], &e, i as f64 / nseg as f64))
        .collect();
    let mut poly = Polygon::new(&prob, nodes);
    let ends = prob.energy(&e).max(0.0);
    let mut switch = opts.switch_threshold;
    let mut step = 1.0f64;
    let mut best = None;

    for it in 0..opts.max_steps {
        let (k, top, s) = poly.argmax();
        trace.path_max.push(top);
        if top <= ends {
            trace.notes.push(format!(
                "path maximum fell to the endpoint level at step {it}"
            ));
            return Ok(prob.solution(
                vec![0.0; g.len()],
                SolveStatus::NoMountainPassGeometry,
                0,
                trace,
            ));
        }

        let idx = if s <= 1e-12 {
            k
        } else if s >= 1.0 - 1e-12 {
            k + 1
        } else {
            // the split point lies on the old segment, so its value is `top`
            let p = lerp(&poly.nodes[k], &poly.nodes[k + 1], s);
            poly.nodes.insert(k + 1, p);
            poly.seg.insert(k + 1, poly.seg[k]);
            k + 1
        };
        let p = poly.nodes[idx].clone();
        let grad = prob.gradient(&p);
        let gnorm = mu_norm(g, &grad);
        trace.grad_norm.push(gnorm);
        best = Some(p.clone());

        if gnorm < switch {
            match newton_iterate(
                &prob,
                p.clone(),
                opts.tol,
                opts.grad_tol,
                opts.newton_max_iters,
            ) {
                Ok((u, iters, residuals)) if sup_norm(&u) > SIGN_THRESHOLD => {
                    trace.newton_residuals = residuals;
                    trace.notes.push(format!("Newton hand-off at step {it}"));
                    return Ok(prob.solution(u, SolveStatus::Converged, iters, trace));
                }
                Ok(_) => trace.notes.push(format!(
                    "Newton from step {it} reached the trivial solution"
                )),
                Err(err) => trace
                    .notes
                    .push(format!("Newton from step {it} failed: {err}")),
            }
            switch = (switch * 0.1).max(opts.grad_tol);
        }

        let g2 = gnorm * gnorm;
        let mut moved = false;
        let mut idx = idx;
        // a node never moves further than one mean segment length
        let total: f64 = poly.nodes.windows(2).map(|w| dist(g, &w[0], &w[1])).sum();
        let reach = total / nseg as f64 / gnorm;
        for _ in 0..24 {
            let mut h = step.min(reach);
            while h > 1e-16 {
                let cand: Vec<f64> = p.iter().zip(&grad).map(|(u, d)| u - h * d).collect();
                if prob.energy(&cand) <= top - 1e-4 * h * g2 {
                    let left = segment_max(&prob, &poly.nodes[idx - 1], &cand);
                    let right = segment_max(&prob, &cand, &poly.nodes[idx + 1]);
                    if left.0 <= top && right.0 <= top {
                        poly.nodes[idx] = cand;
                        poly.seg[idx - 1] = left;
                        poly.seg[idx] = right;
                        moved = true;
                        break;
                    }
                }
                h *= 0.5;
            }
            if moved {
                step = h;
                break;
            }
            // the neighbouring segments bend over higher ground; pull the
            // neighbours closer and retry
            let right = poly.split(&prob, idx, 0.5, top);
            let left = poly.split(&prob, idx - 1, 0.5, top);
            if !(left || right) {
                break;
            }
            idx += usize::from(left);
        }
        if !moved {
            trace
                .notes
                .push(format!("deformation stalled at step {it}"));
            break;
        }
        step = (step * 2.0).min(1e3);

        // keep the resolution roughly uniform without raising the maximum
        let cap = poly.top();
        let lens: Vec<f64> = poly
            .nodes
            .windows(2)
            .map(|w| dist(g, &w[0], &w[1]))
            .collect();
        let mean = lens.iter().sum::<f64>() / nseg as f64;
        let longest = (0..lens.len()).fold(0, |b, i| if lens[i] > lens[b] { i } else { b });
        if lens[longest] > 2.0 * mean {
            poly.split(&prob, longest, 0.5, cap);
        }
        if poly.nodes.len() > 2 * nseg + 1 {
            let keep = (idx + usize::from(idx > longest && lens[longest] > 2.0 * mean))
                .min(poly.nodes.len() - 2);
            poly.coarsen(g, &prob, keep, cap, 2.0 * mean);
        }
    }

    let p = best.unwrap_or_else(|| {
        let (k, _, s) = poly.argmax();
        lerp(&poly.nodes[k], &poly.nodes[k + 1], s)
    });
    match newton_iterate(
        &prob,
        p.clone(),
        opts.tol,
        opts.grad_tol,
        opts.newton_max_iters,
    ) {
        Ok((u, iters, residuals)) if sup_norm(&u) > SIGN_THRESHOLD => {
            trace.newton_residuals = residuals;
            Ok(prob.solution(u, SolveStatus::Converged, iters, trace))
        }
        _ => {
            trace.notes.push("not converged".to_string());
            Ok(prob.solution(p, SolveStatus::NotConverged, 0, trace))
        }
    }
}

/// Damped Newton on `R(u) = c(-Lap u) - alpha u - f(x, u+)` over the free
/// vertices. Returns the point, the iteration count and the residual history.
fn newton_iterate(
    prob: &Problem<'_>,
    mut u: Vec<f64>,
    tol: f64,
    grad_tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, usize, Vec<f64>), NlsError> {
    let g = prob.g;
    let free = prob.mode.free(g.len());
    let pos: Vec<Option<usize>> = {
        let mut p = vec![None; g.len()];
        for (i, &x) in free.iter().enumerate() {
            p[x] = Some(i);
        }
        p
    };
    let c = prob.convention.factor();
    let done = |r: &[f64]| sup_norm(r) < tol && mu_norm(g, r) < grad_tol;

    let mut r = prob.gradient(&u);
    let mut history = vec![sup_norm(&r)];
    if done(&r) {
        return Ok((u, 0, history));
    }
    let mut polish = 0;
    for it in 1..=max_iters {
        let k = free.len();
        let mut jac = DMatrix::zeros(k, k);
        for (i, &x) in free.iter().enumerate() {
            jac[(i, i)] = c - prob.alpha - prob.f.derivative(x, u[x]);
            for &(y, w) in g.neighbors(x) {
                if let Some(j) = pos[y] {
                    jac[(i, j)] -= c * w / g.mu(x);
                }
            }
        }
        let sv = jac.clone().singular_values();
        let sigma_min = sv.min();
        let solved = if sigma_min <= 1e-13 * sv.max().max(1.0) {
            None
        } else {
            let rhs = DVector::from_iterator(k, free.iter().map(|&x| -r[x]));
            jac.lu().solve(&rhs)
        };
        let Some(delta) = solved else {
            if polish > 0 {
                return Ok((u, it - 1, history));
            }
            return Err(NlsError::DegenerateCriticalPoint { sigma_min });
        };
        let trial = |lambda: f64| {
            let mut cand = u.clone();
            for (i, &x) in free.iter().enumerate() {
                cand[x] += lambda * delta[i];
            }
            let rc = prob.gradient(&cand);
            (sup_norm(&rc), cand, rc)
        };

        let r0 = sup_norm(&r);
        let mut next = None;
        let mut lambda = 1.0;
        while lambda > 1e-10 {
            let t = trial(lambda);
            if t.0 < (1.0 - 1e-4 * lambda) * r0 || (polish > 0 && lambda == 1.0) {
                next = Some(t);
                break;
            }
            lambda *= 0.5;
        }
        match next {
            Some((rn, cand, rc)) if polish == 0 || rn < r0 => {
                u = cand;
                r = rc;
                history.push(rn);
            }
            _ if polish > 0 => return Ok((u, it - 1, history)),
            _ => {
                return Err(NlsError::NotConverged {
                    iterations: it,
                    residual: r0,
                })
            }
        }
        if done(&r) {
            // keep going while the residual drops, a few steps at most
            polish += 1;
            if polish > 8 || sup_norm(&r) == 0.0 {
                return Ok((u, it, history));
            }
        }
    }
    if done(&r) {
        return Ok((u, max_iters, history));
    }
    Err(NlsError::NotConverged {
        iterations: max_iters,
        residual: sup_norm(&r),
    })
}

/// Damped Newton refinement of a candidate critical point.
pub fn newton_refine(
    g: &WeightedGraph,
    u_init: &[f64],
    alpha: f64,
    f: &dyn Nonlinearity,
    mode: &Mode,
    convention: EnergyConvention,
    tol: f64,
    grad_tol: f64,
    max_iters: usize,
) -> Result<Solution, NlsError> {
    if u_init.iter().any(|v| !v.is_finite()) {
        return Err(NlsError::InvalidParameter(
            "start has non-finite values".into(),
        ));
    }
    mode.check(g, u_init)?;
    let prob = Problem {
        g,
        alpha,
        f,
        mode,
        convention,
    };
    let (u, iters, residuals) = newton_iterate(&prob, u_init.to_vec(), tol, grad_tol, max_iters)?;
    let trace = SolverTrace {
        newton_residuals: residuals,
        ..Default::default()
    };
    Ok(prob.solution(u, SolveStatus::Converged, iters, trace))
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantTest {
    /// `-alpha int u dmu`
    pub lhs: f64,
    /// `int f(x, u+) dmu`
    pub rhs: f64,
    pub consistent: bool,
    /// Whether the identity allows a nonnegative nontrivial solution at
    /// this sign of `alpha`.
    pub admits_nonnegative_solution: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verification {
    pub residual: f64,
    pub sign_report: SignReport,
    /// `c int u- (-Lap u) dmu - alpha int (u-)^2 dmu - int u- f(x,u+) dmu`
    pub u_minus_test: f64,
    pub u_minus_test_vanishes: bool,
    /// Whole mode only: testing the equation against constants.
    pub constant_test: Option<ConstantTest>,
}

/// Diagnostics for a candidate solution.
pub fn verify_solution(
    g: &WeightedGraph,
    u: &[f64],
    alpha: f64,
    f: &dyn Nonlinearity,
    mode: &Mode,
    convention: EnergyConvention,
) -> Verification {
    let c = convention.factor();
    let grad = gradient(g, u, alpha, f, mode, convention);
    let lap = calculus::laplacian(g, u);
    let mut u_minus = 0.0;
    let mut scale = 0.0;
    for x in (0..g.len()).filter(|&x| mode.is_free(x)) {
        let um = u[x].min(0.0);
        let terms = [c * um * -lap[x], -alpha * um * um, -um * f.f(x, u[x])];
        u_minus += g.mu(x) * terms.iter().sum::<f64>();
        scale += g.mu(x) * terms.iter().map(|t| t.abs()).sum::<f64>();
    }
    let constant_test = match mode {
        Mode::Whole => {
            let lhs = -alpha * calculus::integrate(g, u);
            let rhs: f64 = (0..g.len()).map(|x| g.mu(x) * f.f(x, u[x])).sum();
            let f_vanishes = (0..g.len()).all(|x| f.f(x, 1.0) == 0.0);
            Some(ConstantTest {
                lhs,
                rhs,
                consistent: (lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0),
                admits_nonnegative_solution: alpha < 0.0 || (alpha == 0.0 && f_vanishes),
            })
        }
        Mode::Dirichlet(_) => None,
    };
    Verification {
        residual: sup_norm(&grad),
        sign_report: sign_report(u, mode),
        u_minus_test: u_minus,
        u_minus_test_vanishes: u_minus.abs() <= 1e-9 * scale.max(1.0),
        constant_test,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HypothesisStatus {
    Holds,
    Fails,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckMethod {
    Symbolic,
    Exact,
    SpotChecked,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub status: HypothesisStatus,
    pub method: CheckMethod,
    pub witness: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub p: f64,
    pub q: f64,
    pub ar_exponent: f64,
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn get(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn all_hold(&self) -> bool {
        self.checks
            .iter()
            .all(|c| c.status == HypothesisStatus::Holds)
    }
}

fn status(ok: bool) -> HypothesisStatus {
    if ok {
        HypothesisStatus::Holds
    } else {
        HypothesisStatus::Fails
    }
}

/// Checks H1–H5 for the power family at Sobolev exponent `p`.
pub fn check_hypotheses(f: &PowerNonlinearity, p: f64) -> Result<HypothesisReport, NlsError> {
    if !(p > 2.0) {
        return Err(NlsError::InvalidParameter(format!("need p > 2, got {p}")));
    }
    let q = f.q;
    let n = f.coef.len();
    let mut checks = Vec::with_capacity(5);

    checks.push(HypothesisCheck {
        name: "H1",
        status: HypothesisStatus::Holds,
        method: CheckMethod::Symbolic,
        witness: format!("a(x) (t+)^{} is continuous since q - 1 > 1", q - 1.0),
    });
    checks.push(HypothesisCheck {
        name: "H2",
        status: HypothesisStatus::Holds,
        method: CheckMethod::Symbolic,
        witness: "a >= 0 gives f >= 0 on [0, inf) and f(x, 0) = 0".to_string(),
    });

    // H3: log(f / exp(beta t^r)) must fall towards -inf along t = 10^k
    let r = p / (p - 1.0);
    let large: Vec<f64> = (1..=6).map(|k| 10f64.powi(k)).collect();
    let mut h3 = true;
    let mut worst = f64::NEG_INFINITY;
    for beta in [1.0, 2.0] {
        for x in 0..n {
            if f.coef[x] == 0.0 {
                continue;
            }
            let logs: Vec<f64> = large
                .iter()
                .map(|&t| f.coef[x].ln() + (q - 1.0) * t.ln() - beta * t.powf(r))
                .collect();
            let decreasing = logs.windows(2).all(|w| w[1] < w[0]);
            let last = *logs.last().unwrap();
            worst = worst.max(last);
            h3 &= decreasing && last < -30.0;
        }
    }
    checks.push(HypothesisCheck {
        name: "H3",
        status: status(h3),
        method: CheckMethod::SpotChecked,
        witness: format!("max log-ratio at t = 1e6 over beta in {{1, 2}}: {worst:.3e}"),
    });

    // H4: f / t^(p-1) -> 0 as t -> 0+, judged by the log-log slope
    let small: Vec<f64> = (1..=6).map(|k| 10f64.powi(-k)).collect();
    let mut slope_min = f64::INFINITY;
    for x in 0..n {
        if f.coef[x] == 0.0 {
            continue;
        }
        let ratio: Vec<f64> = small.iter().map(|&t| f.f(x, t) / t.powf(p - 1.0)).collect();
        let slope = (ratio[0].ln() - ratio[5].ln()) / (small[0].ln() - small[5].ln());
        slope_min = slope_min.min(slope);
    }
    let h4 = slope_min > 1e-9;
    checks.push(HypothesisCheck {
        name: "H4",
        status: status(h4),
        method: CheckMethod::SpotChecked,
        witness: format!("log-log slope of f/t^(p-1) on t in [1e-6, 1e-1]: {slope_min:.6}"),
    });

    // H5: q' F(x,s) = (q'/q) a s^q < a s^q = f(x,s) s for s > 0, a > 0
    let qa = f.ar_exponent;
    let zero_coef = (0..n).find(|&x| f.coef[x] == 0.0);
    let (h5, witness) = if !(qa > p) {
        (false, format!("AR exponent q' = {qa} must exceed p = {p}"))
    } else if !(qa < q) {
        (
            false,
            format!("boundary: q' F = f s holds with equality at q' = q = {q}; strict inequality requires q' < q"),
        )
    } else if let Some(x) = zero_coef {
        (false, format!("a(x) = 0 at vertex #{x}, so q' F = 0 there"))
    } else {
        (
            true,
            format!("q' F = ({qa}/{q}) f s < f s for every s > 0 (equality only at q' = q)"),
        )
    };
    checks.push(HypothesisCheck {
        name: "H5",
        status: status(h5),
        method: CheckMethod::Exact,
        witness,
    });

    Ok(HypothesisReport {
        p,
        q,
        ar_exponent: qa,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn k2() -> WeightedGraph {
        WeightedGraph::new(&["a", "b"], &[("a", "b", 1.0)]).unwrap()
    }

    fn p3() -> WeightedGraph {
        WeightedGraph::new(&["a", "b", "c"], &[("a", "b", 1.0), ("b", "c", 1.0)]).unwrap()
    }

    #[test]
    fn energy_examples() {
        let g = k2();
        let f = PowerNonlinearity::uniform(&g, 4.0, 1.0).unwrap();
        let conv = EnergyConvention::DirichletEnergy;
        assert_eq!(
            functional_j(&g, &[0.0, 0.0], -1.0, &f, &Mode::Whole, conv).unwrap(),
            0.0
        );
        assert_eq!(
            functional_j(&g, &[1.0, 1.0], -1.0, &f, &Mode::Whole, conv).unwrap(),
            0.5
        );
        assert!(gradient_j(&g, &[0.0, 0.0], -1.0, &f, &Mode::Whole, conv)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn dirichlet_mode_rejects_boundary_values() {
        let g = p3();
        let mode = Mode::Dirichlet(VertexSubsetProblem::from_labels(&g, &["b"]).unwrap());
        let f = PowerNonlinearity::uniform(&g, 4.0, 1.0).unwrap();
        let err = functional_j(
            &g,
            &[0.1, 1.0, 0.0],
            0.0,
            &f,
            &mode,
            EnergyConvention::DirichletEnergy,
        )
        .unwrap_err();
        assert!(matches!(err, NlsError::NotAdmissible { ref vertex, .. } if vertex == "a"));
    }

    #[test]
    fn endpoint_examples() {
        let g = k2();
        let f = PowerNonlinearity::uniform(&g, 4.0, 1.0).unwrap();
        let conv = EnergyConvention::DirichletEnergy;
        // J(t 1) = t^2 - t^4 / 2
        let (t, e) = find_endpoint(&g, &[1.0, 1.0], -1.0, &f, &Mode::Whole, conv).unwrap();
        assert_eq!(t, 2.0);
        assert!(functional_j(&g, &e, -1.0, &f, &Mode::Whole, conv).unwrap() < 0.0);

        let zero = PowerNonlinearity::uniform(&g, 4.0, 0.0).unwrap();
        assert!(matches!(
            find_endpoint(&g, &[1.0, 1.0], -1.0, &zero, &Mode::Whole, conv),
            Err(NlsError::NoDescentEndpoint { .. })
        ));
        assert!(matches!(
            find_endpoint(&g, &[1.0, -1.0], -1.0, &f, &Mode::Whole, conv),
            Err(NlsError::InvalidStart)
        ));

        let g = p3();
        let mode = Mode::Dirichlet(VertexSubsetProblem::from_labels(&g, &["b"]).unwrap());
        let f = PowerNonlinearity::uniform(&g, 4.0, 1.0).unwrap();
        let (t, _) = find_endpoint(&g, &[0.0, 1.0, 0.0], 0.0, &f, &mode, conv).unwrap();
        assert_eq!(t, 2.0);
    }

    #[test]
    fn sign_reports() {
        let m = Mode::Whole;
        assert_eq!(sign_report(&[1.0, 2.0], &m), SignReport::Positive);
        assert_eq!(sign_report(&[1.0, 0.0], &m), SignReport::Nonnegative);
        assert_eq!(sign_report(&[1.0, -1.0], &m), SignReport::SignChanging);
        assert_eq!(sign_report(&[-1.0, 0.0], &m), SignReport::Nonpositive);
        assert_eq!(sign_report(&[1e-12, -1e-12], &m), SignReport::Trivial);
    }

    #[test]
    fn newton_on_path_center() {
        let g = p3();
        let mode = Mode::Dirichlet(VertexSubsetProblem::from_labels(&g, &["b"]).unwrap());
        let f = PowerNonlinearity::uniform(&g, 4.0, 1.0).unwrap();
        let conv = EnergyConvention::DirichletEnergy;
        let sol =
            newton_refine(&g, &[0.0, 0.9, 0.0], 0.0, &f, &mode, conv, 1e-10, 1e-8, 50).unwrap();
        assert_abs_diff_eq!(sol.u[1], 1.0, epsilon = 1e-12);
        assert!(sol.newton_iterations <= 6, "{}", sol.newton_iterations);

        let exact =
            newton_refine(&g, &[0.0, 1.0, 0.0], 0.0, &f, &mode, conv, 1e-10, 1e-8, 50).unwrap();
        assert_eq!(exact.newton_iterations, 0);
        assert_eq!(exact.u[1], 1.0);

        let zero = newton_refine(&g, &[0.0; 3], 0.0, &f, &mode, conv, 1e-10, 1e-8, 50).unwrap();
        assert_eq!(zero.sign_report, SignReport::Trivial);
        assert_eq!(zero.newton_iterations, 0);
    }

    #[test]
    fn newton_reports_degenerate_jacobian() {
        // f = 0, alpha = 0: the Jacobian c(-Lap) annihilates constants
        let g = k2();
        let f = PowerNonlinearity::uniform(&g, 4.0, 0.0).unwrap();
        let err = newton_refine(
            &g,
            &[1.0, 0.0],
            0.0,
            &f,
            &Mode::Whole,
            EnergyConvention::DirichletEnergy,
            1e-10,
            1e-8,
            50,
        );
        assert!(matches!(err, Err(NlsError::DegenerateCriticalPoint { .. })));
    }

    #[test]
    fn hypotheses_examples() {
        let f = PowerNonlinearity::new(4.0, vec![1.0, 1.0]).unwrap();
        let r = check_hypotheses(&f, 3.0).unwrap();
        assert!(r.all_hold(), "{r:?}");
        assert_eq!(r.ar_exponent, 3.5);

        let r = check_hypotheses(&f, 5.0).unwrap();
        assert_eq!(r.get("H4").unwrap().status, HypothesisStatus::Fails);

        let f = PowerNonlinearity::with_ar_exponent(3.0, vec![1.0; 3], 2.8).unwrap();
        let r = check_hypotheses(&f, 2.5).unwrap();
        assert_eq!(r.get("H5").unwrap().status, HypothesisStatus::Holds);

        let f = PowerNonlinearity::with_ar_exponent(4.0, vec![1.0], 4.0).unwrap();
        let r = check_hypotheses(&f, 3.0).unwrap();
        assert_eq!(r.get("H5").unwrap().status, HypothesisStatus::Fails);
        assert!(r.get("H5").unwrap().witness.contains("boundary"));

        assert!(check_hypotheses(&f, 2.0).is_err());
        assert!(PowerNonlinearity::new(2.0, vec![1.0]).is_err());
        assert!(PowerNonlinearity::new(3.0, vec![-1.0]).is_err());
    }
}
