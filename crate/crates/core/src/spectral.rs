//! Spectrum of `-Lap` on a weighted graph.
//!
//! `-Lap` is self-adjoint for the `mu`-weighted inner product, so its
//! eigenproblem is the generalized symmetric problem `L u = lambda M u` with
//! `L = diag(mu) - W` and `M = diag(mu)`. We solve the equivalent standard
//! problem for `M^{-1/2} L M^{-1/2}` with a dense symmetric eigensolver and
//! map eigenvectors back with `u = M^{-1/2} phi`, which makes them
//! `mu`-orthonormal.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::calculus::{self, EnergyConvention};
use crate::graph::{VertexFunction, VertexSubsetProblem, WeightedGraph};

/// Eigenvalues closer than this are grouped into one cluster.
pub const CLUSTER_GAP: f64 = 1e-9;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITERS: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum SpectralError {
    #[error("eigensolver did not converge within {iterations} iterations (achieved residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("rayleigh quotient needs a nonzero function")]
    ZeroFunction,
    #[error("rayleigh quotient needs a mean-zero function (int u dmu = {mean:e})")]
    NotMeanZero { mean: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenPair {
    pub lambda: f64,
    /// `mu`-normalized eigenfunction.
    pub u: VertexFunction,
    /// `max_x |-Lap u(x) - lambda u(x)|`
    pub residual: f64,
    /// Index of the numerically degenerate cluster this pair belongs to.
    pub cluster: usize,
}

/// `L` with diagonal `mu(x)` and off-diagonal `-w_xy`.
pub fn stiffness_matrix(g: &WeightedGraph) -> DMatrix<f64> {
    let n = g.len();
    let mut l = DMatrix::zeros(n, n);
    for x in 0..n {
        l[(x, x)] = g.mu(x);
    }
    for &(x, y, w) in g.edges() {
        l[(x, y)] -= w;
        l[(y, x)] -= w;
    }
    l
}

/// Solves `L_S u = lambda M_S u` for the principal submatrix on `idx`.
/// Returns ascending eigenvalues and the matching `mu`-orthonormal
/// eigenvectors restricted to `idx`.
fn generalized_eigen(
    g: &WeightedGraph,
    l: &DMatrix<f64>,
    idx: &[usize],
) -> Result<Vec<(f64, Vec<f64>)>, SpectralError> {
    let k = idx.len();
    let inv_sqrt: Vec<f64> = idx.iter().map(|&x| 1.0 / g.mu(x).sqrt()).collect();
    let s = DMatrix::from_fn(k, k, |i, j| l[(idx[i], idx[j])] * inv_sqrt[i] * inv_sqrt[j]);
    // symmetrize against round-off in the scaling
    let s = (&s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(s, EIGEN_EPS, EIGEN_MAX_ITERS).ok_or(
        SpectralError::NoConvergence {
            iterations: EIGEN_MAX_ITERS,
            residual: f64::NAN,
        },
    )?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    Ok(order
        .into_iter()
        .map(|c| {
            let mut v: Vec<f64> = (0..k)
                .map(|i| eig.eigenvectors[(i, c)] * inv_sqrt[i])
                .collect();
            orient(&mut v);
            (eig.eigenvalues[c], v)
        })
        .collect())
}

/// Fixes the sign so that the first entry of largest magnitude is positive.
fn orient(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() * (1.0 + 1e-9) {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn residual(g: &WeightedGraph, u: &[f64], lambda: f64) -> f64 {
    let lap = calculus::laplacian(g, u);
    lap.iter()
        .zip(u)
        .map(|(l, v)| (-l - lambda * v).abs())
        .fold(0.0, f64::max)
}

/// All `n` eigenpairs of `-Lap`, ascending.
pub fn spectrum(g: &WeightedGraph) -> Result<Vec<EigenPair>, SpectralError> {
    let l = stiffness_matrix(g);
    let idx: Vec<usize> = (0..g.len()).collect();
    let raw = generalized_eigen(g, &l, &idx)?;
    let mut pairs = Vec::with_capacity(raw.len());
    let mut cluster = 0usize;
    let mut prev: Option<f64> = None;
    for (i, (mut lambda, v)) in raw.into_iter().enumerate() {
        if i == 0 && lambda.abs() < 1e-12 {
            // the kernel is spanned by constants on a connected graph
            lambda = 0.0;
        }
        if let Some(p) = prev {
            if lambda - p >= CLUSTER_GAP {
                cluster += 1;
            }
        }
        prev = Some(lambda);
        let res = residual(g, &v, lambda);
        pairs.push(EigenPair {
            lambda,
            u: VertexFunction::from_vec(v),
            residual: res,
            cluster,
        });
    }
    Ok(pairs)
}

/// Nonzero eigenpairs only (all but the constant mode).
pub fn nonzero_pairs(pairs: &[EigenPair]) -> impl Iterator<Item = &EigenPair> {
    pairs.iter().skip(1)
}

/// Rayleigh quotient over mean-zero functions. `GradSq` returns
/// `int |grad u|^2 / int u^2`, `DirichletEnergy` returns `E(u) / int u^2`.
/// Only the latter has infimum equal to the operator eigenvalue `lambda_1`;
/// the former is exactly twice as large.
pub fn rayleigh_quotient(
    g: &WeightedGraph,
    u: &[f64],
    convention: EnergyConvention,
) -> Result<f64, SpectralError> {
    let l2 = calculus::l2_sq(g, u);
    if l2 == 0.0 {
        return Err(SpectralError::ZeroFunction);
    }
    let mean = calculus::integrate(g, u);
    let scale: f64 = g.measure().iter().zip(u).map(|(m, v)| m * v.abs()).sum();
    if mean.abs() > 1e-10 * scale {
        return Err(SpectralError::NotMeanZero { mean });
    }
    Ok(convention.factor() * calculus::dirichlet_energy(g, u) / l2)
}

#[derive(Debug, Clone, Serialize)]
pub struct DirichletEigenvalue {
    pub lambda: f64,
    /// Ground state, zero outside the interior.
    pub u: VertexFunction,
    pub warning: Option<String>,
}

/// Smallest eigenvalue of `-Lap` on functions vanishing outside the interior.
pub fn dirichlet_lambda1(
    g: &WeightedGraph,
    prob: &VertexSubsetProblem,
) -> Result<DirichletEigenvalue, SpectralError> {
    let l = stiffness_matrix(g);
    let raw = generalized_eigen(g, &l, prob.interior())?;
    let (mut lambda, v) = raw.into_iter().next().expect("interior is nonempty");
    let mut u = vec![0.0; g.len()];
    for (&x, val) in prob.interior().iter().zip(v) {
        u[x] = val;
    }
    let warning = if prob.covers_all() {
        lambda = 0.0;
        Some("no boundary; Dirichlet = Neumann".to_string())
    } else {
        None
    };
    Ok(DirichletEigenvalue {
        lambda,
        u: VertexFunction::from_vec(u),
        warning,
    })
}
