//! Value estimation and regime search for threshold-based dynamic treatment
//! regimes.
//!
//! The crate estimates the value (mean outcome had everyone followed a
//! candidate rule) of multi-stage threshold regimes from longitudinal data
//! by inverse-probability weighting, and implements two relaxed-adherence
//! refinements that trade a controlled amount of bias for variance:
//!
//! * **generalized adherence weighting** (`gaw`): non-adherent observations
//!   keep a small compatibility score instead of being zeroed out, with the
//!   relaxation budget shrinking as `c * n^(-k)`;
//! * **bootstrap-selected adherence windows** (`baw`): observations whose
//!   covariate landed within a tolerance band of the threshold count as
//!   compatible with either action, with the band width chosen by a
//!   bootstrap variance/bias criterion.
//!
//! Both come in plain and augmented (doubly robust) variants, with
//! estimating-equation variances, a grid evaluator for locating optimal
//! thresholds, and a reproducible simulation-study driver.

pub mod baw;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod ingest;
pub mod model;
pub mod rng;
pub mod simgen;
pub mod study;
pub mod surface;
pub mod weighting;

pub use error::{EngineError, Result};

/// Version tag carried by every serialized output (JSON results, study
/// manifests); bumped on any breaking layout change.
pub const SCHEMA_VERSION: u32 = 1;
