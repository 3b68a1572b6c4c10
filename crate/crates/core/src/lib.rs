//! Nonlinear Hodge maps on uniform Cartesian grids.
//!
//! Stationary points and gradient flows of `E(u) = 1/2 ∫ ∫_0^Q rho(s) ds dx`,
//! `Q = |du|^2`, for flat and round-sphere targets, together with the
//! numerical checks that go with them: ellipticity and sonic criticality of
//! the density, sonic-limit continuation in the boundary data, and
//! singularity diagnostics (growth constant, L^p integrability, mean
//! oscillation, Frobenius and rotational residuals).

pub mod cli;
pub mod config;
pub mod continuation;
pub mod density;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod grid;
pub mod output;
pub mod presets;
pub mod state;
pub mod tension;

pub use density::{DensityModel, EllipticityReport};
pub use error::{HodgeError, Result};
pub use flow::{Flow, FlowOutcome, FlowState, FlowTrace, StopCriteria, StopReason};
pub use grid::{Grid, NodeIndex};
pub use state::{MapField, OneFormField, Target};
pub use tension::TensionField;
