//! Discrete differential operators on a weighted graph.
//!
//! With `mu(x) = sum_y w_xy`:
//!
//! ```text
//! Lap u(x)      = (1/mu(x)) sum_{y~x} w_xy (u(y) - u(x))
//! Gamma(u,v)(x) = (1/(2 mu(x))) sum_{y~x} w_xy (u(y)-u(x)) (v(y)-v(x))
//! |grad u|^2    = 2 Gamma(u,u)
//! Gamma2(u,u)   = 1/2 { Lap Gamma(u,u) - 2 Gamma(u, Lap u) }
//! ```
//!
//! Two energy conventions are in use and are kept apart explicitly:
//! `E(u) = int Gamma(u,u) dmu` (Dirichlet energy, `E(u) = int u (-Lap u) dmu`)
//! and `int |grad u|^2 dmu = 2 E(u)`. See [`EnergyConvention`].

use serde::{Deserialize, Serialize};

use crate::graph::{VertexFunction, WeightedGraph};

#[derive(Debug, thiserror::Error)]
pub enum CalculusError {
    #[error("alpha-form is indefinite: int(|grad u|^2 - alpha u^2) dmu = {value}")]
    IndefiniteForm { value: f64 },
    #[error("norm exponent must satisfy p >= 1, got {0}")]
    InvalidExponent(f64),
}

/// Which quadratic energy a caller means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyConvention {
    /// `E(u) = int Gamma(u,u) dmu`; critical points of `E/2 - ...` satisfy
    /// `-Lap u = ...`.
    #[default]
    DirichletEnergy,
    /// `int |grad u|^2 dmu = 2 E(u)`.
    GradSq,
}

impl EnergyConvention {
    /// Factor `c` with `energy = c * E(u)`.
    #[inline]
    pub fn factor(self) -> f64 {
        match self {
            EnergyConvention::DirichletEnergy => 1.0,
            EnergyConvention::GradSq => 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "param")]
pub enum NormKind {
    /// `(int |u|^p dmu)^(1/p)`
    Lp(f64),
    /// `(int |grad u|^p dmu)^(1/p)`, which vanishes on constants.
    SobolevSeminorm(f64),
    /// `(int (|grad u|^2 - alpha u^2) dmu)^(1/2)`
    AlphaNorm(f64),
    SupNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gamma2Form {
    /// `1/2 { Lap Gamma(u,u) - 2 Gamma(u, Lap u) }`
    Iterated,
    /// Explicit two-step neighborhood sum.
    Expanded,
}

fn check_len(g: &WeightedGraph, u: &[f64]) {
    assert_eq!(u.len(), g.len(), "vertex function length mismatch");
}

pub fn laplacian(g: &WeightedGraph, u: &[f64]) -> VertexFunction {
    check_len(g, u);
    let out = (0..g.len())
        .map(|x| laplacian_at(g, u, x))
        .collect::<Vec<_>>();
    VertexFunction::from_vec(out)
}

#[inline]
pub fn laplacian_at(g: &WeightedGraph, u: &[f64], x: usize) -> f64 {
    let s: f64 = g.neighbors(x).iter().map(|&(y, w)| w * (u[y] - u[x])).sum();
    s / g.mu(x)
}

pub fn gamma(g: &WeightedGraph, u: &[f64], v: &[f64]) -> VertexFunction {
    check_len(g, u);
    check_len(g, v);
    let out = (0..g.len())
        .map(|x| {
            let s: f64 = g
                .neighbors(x)
                .iter()
                .map(|&(y, w)| w * (u[y] - u[x]) * (v[y] - v[x]))
                .sum();
            s / (2.0 * g.mu(x))
        })
        .collect();
    VertexFunction::from_vec(out)
}

/// `Gamma(u,v)` through the product rule `1/2 { Lap(uv) - u Lap v - v Lap u }`.
pub fn gamma_product_rule(g: &WeightedGraph, u: &[f64], v: &[f64]) -> VertexFunction {
    let uv: Vec<f64> = u.iter().zip(v).map(|(a, b)| a * b).collect();
    let l_uv = laplacian(g, &uv);
    let l_u = laplacian(g, u);
    let l_v = laplacian(g, v);
    let out = (0..g.len())
        .map(|x| 0.5 * (l_uv[x] - u[x] * l_v[x] - v[x] * l_u[x]))
        .collect();
    VertexFunction::from_vec(out)
}

/// `|grad u|^2(x) = (1/mu(x)) sum_y w_xy (u(y)-u(x))^2`.
pub fn grad_norm_sq(g: &WeightedGraph, u: &[f64]) -> VertexFunction {
    check_len(g, u);
    let out = (0..g.len()).map(|x| grad_norm_sq_at(g, u, x)).collect();
    VertexFunction::from_vec(out)
}

#[inline]
pub(crate) fn grad_norm_sq_at(g: &WeightedGraph, u: &[f64], x: usize) -> f64 {
    let s: f64 = g
        .neighbors(x)
        .iter()
        .map(|&(y, w)| {
            let d = u[y] - u[x];
            w * d * d
        })
        .sum();
    s / g.mu(x)
}

pub fn gamma2(g: &WeightedGraph, u: &[f64], form: Gamma2Form) -> VertexFunction {
    check_len(g, u);
    match form {
        Gamma2Form::Iterated => {
            let gamma_uu = gamma(g, u, u);
            let lap_u = laplacian(g, u);
            let lap_gamma = laplacian(g, &gamma_uu);
            let gamma_u_lap = gamma(g, u, &lap_u);
            let out = (0..g.len())
                .map(|x| 0.5 * (lap_gamma[x] - 2.0 * gamma_u_lap[x]))
                .collect();
            VertexFunction::from_vec(out)
        }
        Gamma2Form::Expanded => {
            let out = (0..g.len()).map(|x| gamma2_expanded_at(g, u, x)).collect();
            VertexFunction::from_vec(out)
        }
    }
}

fn gamma2_expanded_at(g: &WeightedGraph, u: &[f64], x: usize) -> f64 {
    let mu_x = g.mu(x);
    let mut two_step = 0.0;
    let mut one_step = 0.0;
    let mut lap = 0.0;
    for &(y, wxy) in g.neighbors(x) {
        let inner: f64 = g
            .neighbors(y)
            .iter()
            .map(|&(z, wyz)| {
                let s = u[x] - 2.0 * u[y] + u[z];
                wyz * s * s
            })
            .sum();
        two_step += wxy / g.mu(y) * inner;
        let d = u[x] - u[y];
        one_step += wxy * d * d;
        lap += wxy * d;
    }
    let lap = lap / mu_x;
    0.25 * two_step / mu_x - 0.5 * one_step / mu_x + 0.5 * lap * lap
}

/// `int u dmu = sum_x mu(x) u(x)`.
pub fn integrate(g: &WeightedGraph, u: &[f64]) -> f64 {
    check_len(g, u);
    g.measure().iter().zip(u).map(|(m, v)| m * v).sum()
}

/// `E(u) = int Gamma(u,u) dmu = sum_{edges} w_xy (u(y) - u(x))^2`.
pub fn dirichlet_energy(g: &WeightedGraph, u: &[f64]) -> f64 {
    check_len(g, u);
    g.edges()
        .iter()
        .map(|&(x, y, w)| {
            let d = u[y] - u[x];
            w * d * d
        })
        .sum()
}

/// `int u^2 dmu`.
pub fn l2_sq(g: &WeightedGraph, u: &[f64]) -> f64 {
    check_len(g, u);
    g.measure().iter().zip(u).map(|(m, v)| m * v * v).sum()
}

/// `int |grad u|^p dmu` for `p > 0`.
pub(crate) fn grad_power_integral(g: &WeightedGraph, u: &[f64], p: f64) -> f64 {
    (0..g.len())
        .map(|x| g.mu(x) * grad_norm_sq_at(g, u, x).powf(0.5 * p))
        .sum()
}

pub fn norm(g: &WeightedGraph, u: &[f64], kind: NormKind) -> Result<f64, CalculusError> {
    check_len(g, u);
    match kind {
        NormKind::Lp(p) => {
            if !(p >= 1.0) {
                return Err(CalculusError::InvalidExponent(p));
            }
            let s: f64 = g
                .measure()
                .iter()
                .zip(u)
                .map(|(m, v)| m * v.abs().powf(p))
                .sum();
            Ok(s.powf(1.0 / p))
        }
        NormKind::SobolevSeminorm(p) => {
            if !(p >= 1.0) {
                return Err(CalculusError::InvalidExponent(p));
            }
            Ok(grad_power_integral(g, u, p).powf(1.0 / p))
        }
        NormKind::AlphaNorm(alpha) => {
            let value = 2.0 * dirichlet_energy(g, u) - alpha * l2_sq(g, u);
            if value < 0.0 {
                return Err(CalculusError::IndefiniteForm { value });
            }
            Ok(value.sqrt())
        }
        NormKind::SupNorm => Ok(u.iter().fold(0.0, |m, v| m.max(v.abs()))),
    }
}

/// Removes the mu-mean: `u - (int u dmu / |V|)`.
pub fn remove_mean(g: &WeightedGraph, u: &mut [f64]) {
    let mean = integrate(g, u) / g.total_volume();
    u.iter_mut().for_each(|v| *v -= mean);
}
