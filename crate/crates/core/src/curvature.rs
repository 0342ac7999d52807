//! Curvature-dimension certificates.
//!
//! The condition `CD(m, xi)` asks that at every vertex
//!
//! ```text
//! Gamma2(u,u)(x) >= (1/m) (Lap u(x))^2 + xi Gamma(u,u)(x)    for every u.
//! ```
//!
//! The difference of the two sides is a quadratic form in the values of `u`
//! on the 2-ball around `x`, so the quantifier over `u` is discharged exactly
//! by checking that this local form is positive semidefinite.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::graph::WeightedGraph;
use crate::par;

/// A local form counts as PSD when its smallest eigenvalue is at least `-PSD_TOL`.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum CurvatureError {
    #[error("dimension parameter must satisfy m > 1, got {0}")]
    InvalidDimension(f64),
    #[error("curvature parameter must be finite, got {0}")]
    InvalidCurvature(f64),
}

fn check_m(m: f64) -> Result<(), CurvatureError> {
    if m > 1.0 && !m.is_nan() {
        Ok(())
    } else {
        Err(CurvatureError::InvalidDimension(m))
    }
}

/// `(m, xi)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CdParams {
    pub m: f64,
    pub xi: f64,
}

/// The three quadratic forms at one vertex, on its 2-ball.
#[derive(Debug, Clone)]
pub struct LocalParts {
    pub center: usize,
    /// Vertices at distance <= 2 from `center`, canonical order.
    pub ball: Vec<usize>,
    /// `u -> Gamma2(u,u)(x)`
    pub gamma2: DMatrix<f64>,
    /// `u -> Gamma(u,u)(x)`
    pub gamma: DMatrix<f64>,
    /// `u -> Lap u(x)` as a row vector.
    pub lap: DVector<f64>,
}

impl LocalParts {
    pub fn new(g: &WeightedGraph, x: usize) -> Self {
        let ball = g.ball(x, 2);
        let pos: HashMap<usize, usize> = ball.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let k = ball.len();
        let mut gamma2 = DMatrix::zeros(k, k);
        let mut gamma = DMatrix::zeros(k, k);
        let mut lap = DVector::zeros(k);

        let px = pos[&x];
        let mu_x = g.mu(x);
        for &(y, wxy) in g.neighbors(x) {
            let py = pos[&y];
            for &(z, wyz) in g.neighbors(y) {
                let pz = pos[&z];
                let c = 0.25 * wxy * wyz / (g.mu(y) * mu_x);
                add_outer(&mut gamma2, &[(px, 1.0), (py, -2.0), (pz, 1.0)], c);
            }
            add_outer(&mut gamma2, &[(px, 1.0), (py, -1.0)], -0.5 * wxy / mu_x);
            add_outer(&mut gamma, &[(px, 1.0), (py, -1.0)], 0.5 * wxy / mu_x);
            lap[py] += wxy / mu_x;
            lap[px] -= wxy / mu_x;
        }
        gamma2 += &lap * lap.transpose() * 0.5;

        Self {
            center: x,
            ball,
            gamma2,
            gamma,
            lap,
        }
    }

    /// `Q = Gamma2 - (1/m) lap lap^T - xi Gamma`.
    pub fn form(&self, m: f64, xi: f64) -> DMatrix<f64> {
        &self.gamma2 - &self.lap * self.lap.transpose() * (1.0 / m) - &self.gamma * xi
    }
}

/// Adds `scale * v v^T` where `v` is given sparsely; repeated indices add up.
fn add_outer(mat: &mut DMatrix<f64>, v: &[(usize, f64)], scale: f64) {
    let mut dense: Vec<(usize, f64)> = Vec::with_capacity(v.len());
    for &(i, c) in v {
        match dense.iter_mut().find(|(j, _)| *j == i) {
            Some((_, acc)) => *acc += c,
            None => dense.push((i, c)),
        }
    }
    for &(i, ci) in &dense {
        for &(j, cj) in &dense {
            mat[(i, j)] += scale * ci * cj;
        }
    }
}

/// The local CD quadratic form at one vertex.
#[derive(Debug, Clone)]
pub struct LocalCdForm {
    pub center: usize,
    pub ball: Vec<usize>,
    pub matrix: DMatrix<f64>,
}

impl LocalCdForm {
    /// `u^T Q u` for a function given on the whole graph.
    pub fn evaluate(&self, u: &[f64]) -> f64 {
        let v = DVector::from_iterator(self.ball.len(), self.ball.iter().map(|&y| u[y]));
        (v.transpose() * &self.matrix * &v)[(0, 0)]
    }

    /// The form as an `n x n` matrix, zero outside the ball.
    pub fn embed(&self, n: usize) -> DMatrix<f64> {
        let mut full = DMatrix::zeros(n, n);
        for (i, &a) in self.ball.iter().enumerate() {
            for (j, &b) in self.ball.iter().enumerate() {
                full[(a, b)] = self.matrix[(i, j)];
            }
        }
        full
    }
}

pub fn local_cd_form(
    g: &WeightedGraph,
    x: usize,
    m: f64,
    xi: f64,
) -> Result<LocalCdForm, CurvatureError> {
    check_m(m)?;
    let parts = LocalParts::new(g, x);
    Ok(LocalCdForm {
        center: x,
        matrix: parts.form(m, xi),
        ball: parts.ball,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub vertex: String,
    pub min_eig: f64,
    /// Minimizing direction of the local form, keyed by vertex label.
    pub function: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CdCertificate {
    pub m: f64,
    pub xi: f64,
    pub per_vertex_min_eig: serde_json::Map<String, serde_json::Value>,
    pub holds: bool,
    pub witness: Option<Witness>,
}

/// Local forms for every vertex, assembled once and reused across `(m, xi)`.
#[derive(Debug, Clone)]
pub struct CdForms {
    parts: Vec<LocalParts>,
}

impl CdForms {
    pub fn new(g: &WeightedGraph) -> Self {
        Self {
            parts: par::map_range(g.len(), |x| LocalParts::new(g, x)),
        }
    }

    pub fn parts(&self) -> &[LocalParts] {
        &self.parts
    }

    fn eigen(&self, m: f64, xi: f64) -> Vec<SymmetricEigen<f64, nalgebra::Dyn>> {
        par::map(&self.parts, |p| SymmetricEigen::new(p.form(m, xi)))
    }

    /// Smallest eigenvalue of each local form.
    pub fn min_eigs(&self, m: f64, xi: f64) -> Vec<f64> {
        par::map(&self.parts, |p| {
            SymmetricEigen::new(p.form(m, xi)).eigenvalues.min()
        })
    }

    pub fn holds(&self, m: f64, xi: f64) -> bool {
        self.min_eigs(m, xi).iter().all(|&e| e >= -PSD_TOL)
    }

    pub fn certificate(&self, g: &WeightedGraph, m: f64, xi: f64) -> CdCertificate {
        let eigs = self.eigen(m, xi);
        let mins: Vec<f64> = eigs.iter().map(|e| e.eigenvalues.min()).collect();
        let holds = mins.iter().all(|&e| e >= -PSD_TOL);
        let per_vertex_min_eig = mins
            .iter()
            .enumerate()
            .map(|(x, &v)| (g.label(x).to_string(), serde_json::Value::from(v)))
            .collect();
        let witness = if holds {
            None
        } else {
            // most negative vertex; first one on ties
            let x = (0..mins.len()).fold(0, |best, x| if mins[x] < mins[best] { x } else { best });
            let eig = &eigs[x];
            let col = eig.eigenvalues.imin();
            let function = self.parts[x]
                .ball
                .iter()
                .enumerate()
                .map(|(i, &y)| {
                    (
                        g.label(y).to_string(),
                        serde_json::Value::from(eig.eigenvectors[(i, col)]),
                    )
                })
                .collect();
            Some(Witness {
                vertex: g.label(x).to_string(),
                min_eig: mins[x],
                function,
            })
        };
        CdCertificate {
            m,
            xi,
            per_vertex_min_eig,
            holds,
            witness,
        }
    }

    /// Largest `xi` for which `CD(m, xi)` holds, by bisection.
    pub fn best_xi(&self, m: f64) -> f64 {
        let lambda_max = par::map(&self.parts, |p| {
            SymmetricEigen::new(p.form(m, 0.0)).eigenvalues.max()
        })
        .into_iter()
        .fold(0.0, f64::max);
        let mut lo = -(2.0 * lambda_max + 1.0);
        let mut step = lo.abs().max(1.0);
        let mut tries = 0;
        while !self.holds(m, lo) && tries < 64 {
            step *= 2.0;
            lo -= step;
            tries += 1;
        }
        let mut hi = 10.0;
        let mut step = 10.0;
        while self.holds(m, hi) {
            lo = hi;
            step *= 2.0;
            hi += step;
        }
        // bracket narrower than the 1e-8 contract so that the returned value
        // sits on the holding side of the threshold
        for _ in 0..200 {
            if hi - lo <= 1e-12 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.holds(m, mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

pub fn verify_cd(g: &WeightedGraph, m: f64, xi: f64) -> Result<CdCertificate, CurvatureError> {
    check_m(m)?;
    if !xi.is_finite() {
        return Err(CurvatureError::InvalidCurvature(xi));
    }
    Ok(CdForms::new(g).certificate(g, m, xi))
}

pub fn best_xi(g: &WeightedGraph, m: f64) -> Result<f64, CurvatureError> {
    check_m(m)?;
    Ok(CdForms::new(g).best_xi(m))
}

/// The universal pair `(2, 2/d - 1)` with `d` the sup degree ratio.
pub fn lin_yau_certificate(g: &WeightedGraph) -> CdParams {
    CdParams {
        m: 2.0,
        xi: 2.0 / g.sup_degree_ratio() - 1.0,
    }
}
