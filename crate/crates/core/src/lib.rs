// `!(x > 0)` guards double as NaN checks on estimated eigenvalues; the
// suggested `x <= 0` rewrite would wave NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Residual diagnostics and goodness-of-fit tests for stationary marked
//! Gibbs point processes.
//!
//! The pipeline: define an exponential-family local-energy model
//! ([`model`]), simulate patterns by a birth-death chain ([`sampler`]),
//! fit by maximum pseudolikelihood ([`mple`]), compute h-innovations and
//! h-residuals ([`residual`]), estimate the asymptotic covariance
//! ingredients ([`covariance`]) and run the χ² tests T₁, T̃₁, T̃₂
//! ([`gof`]).

pub mod covariance;
pub mod error;
pub mod geometry;
pub mod gof;
pub mod model;
pub mod mple;
pub mod pattern_io;
pub mod quadrature;
pub mod residual;
pub mod sampler;
pub mod stats;
pub mod workspace;

pub use covariance::{matrix_inv_sqrt, sigma1_inv_sqrt, CovarianceEstimate};
pub use error::Error;
pub use geometry::{
    nearest_distance, partition_window, CellGrid, Configuration, Cube, MarkedPoint,
    NeighborIndex, ObservationDomain,
};
pub use gof::{calibrate_null, CalibrationReport, CalibrationSpec, GofParams, GofReport, TestKind};
pub use model::{
    added_disc_area, local_energy, removable_points, AreaInteraction, Model, Poisson,
    TwoTypeStrauss,
};
pub use mple::{estimate_w_hat, FitOptions, FitResult};
pub use quadrature::{integrate, QuadratureSpec};
pub use residual::{ResidualValue, SubdomainResiduals, TestFunction};
pub use sampler::{sample_batch, sample_gibbs, sample_poisson, SamplerConfig};
pub use stats::{chi2_quantile, chi2_sf};
pub use workspace::Workspace;
