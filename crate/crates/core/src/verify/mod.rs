//! Monte Carlo estimators, closed-form bounds and convergence measurements.

pub mod bounds;
pub mod convergence;
pub mod estimate;
pub mod holder;
pub mod inequality;

pub use bounds::BoundConstants;
pub use estimate::MomentEstimate;
pub use inequality::InequalityReport;
