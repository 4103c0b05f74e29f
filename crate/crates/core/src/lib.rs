//! Sparse transmitter, receiver and pulse selection for colocated MIMO radar
//! driven by the two-target Cramér-Rao bound.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: radar configuration, measurement model and its derivatives.
//! * [`fim`]: per-measurement Fisher information atoms and their assembly.
//! * [`measures`]: scalar design criteria and the frame-potential set function.
//! * [`greedy`]: matroid-constrained greedy and log-determinant pulse removal.
//! * [`convex`]: E-optimal semidefinite relaxation with randomized rounding.
//! * [`oracle`]: exhaustive search, submodularity checks, ambiguity functions
//!   and Monte-Carlo maximum-likelihood benchmarks.
//! * [`verify`]: the self-check suite behind `mimo-placement verify`.
//! * [`scenarios`]: ready-made configurations used by tests and examples.

pub mod convex;
pub mod error;
pub mod fim;
pub mod greedy;
pub mod measures;
pub mod model;
pub mod oracle;
pub mod scenarios;
mod sdp;
pub mod selection;
pub mod verify;

pub use error::{Error, Result};
pub use fim::{DeltaGrid, FimAtom, FimCache};
pub use measures::{Aggregation, Criterion, CriterionKind, MfpNormalization, ParamSet, TargetModel};
pub use model::{ArrayOrigin, DeltaTheta, RadarConfig, TargetParams, TimeOrigin};
pub use selection::{Budgets, Selection};
