//! Discrete calculus on weighted finite graphs: Laplacian, carré du champ
//! and its iterate, curvature-dimension certificates, eigenvalue and
//! Trudinger–Moser inequalities, and a mountain-pass solver for
//! `-Lap u - alpha u = f(x, u)`.
//!
//! With the default `parallel` feature, per-vertex curvature forms,
//! multistart searches and corpus sweeps run on rayon; without it they run
//! sequentially and produce identical results.

mod ascent;
mod par;

pub mod calculus;
pub mod corpus;
pub mod curvature;
pub mod graph;
pub mod inequality;
pub mod nls;
pub mod spectral;

pub use ascent::AscentOptions;
pub use calculus::{EnergyConvention, Gamma2Form, NormKind};
pub use curvature::{CdCertificate, CdParams};
pub use graph::{GraphError, VertexFunction, VertexSubsetProblem, WeightedGraph};
pub use nls::{Mode, Nonlinearity, PowerNonlinearity, Solution};
pub use spectral::EigenPair;

/// Any error raised by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] graph::GraphError),
    #[error(transparent)]
    Calculus(#[from] calculus::CalculusError),
    #[error(transparent)]
    Spectral(#[from] spectral::SpectralError),
    #[error(transparent)]
    Curvature(#[from] curvature::CurvatureError),
    #[error(transparent)]
    Inequality(#[from] inequality::InequalityError),
    #[error(transparent)]
    Nls(#[from] nls::NlsError),
}
