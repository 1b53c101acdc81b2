//! Simulation of global stochastic flows for Stratonovich SDEs whose
//! coefficients are only locally Lipschitz.
//!
//! The crate is organised bottom-up:
//!
//! * [`fields`] holds the coefficient vector fields, their brackets, the
//!   Itô drift correction, smooth cutoffs and local Lipschitz profiles.
//! * [`wiener`] samples Brownian paths on a dyadic grid and exposes every
//!   coarser piecewise-linear interpolant.
//! * [`integrate`] solves the regularized (Wong-Zakai) ODEs plus reference
//!   Stratonovich and Itô schemes on the same path.
//! * [`flow`] drives grids of initial points on shared noise.
//! * [`verify`] turns all of this into Monte Carlo estimates and compares
//!   them with closed-form moment bounds.

pub mod error;
pub mod fields;
pub mod flow;
pub mod integrate;
pub mod verify;
pub mod wiener;

pub use error::{Error, Result};
pub use fields::{CutoffFunction, LipschitzProfile, VectorField, VectorFieldSystem};
pub use flow::{FlowGrid, FlowResult, Resolution};
pub use integrate::{SolverConfig, Trajectory};
pub use verify::{BoundConstants, InequalityReport, MomentEstimate};
pub use wiener::DyadicPath;

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
