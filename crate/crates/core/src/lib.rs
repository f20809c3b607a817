//! Data-driven sensor selection for discrete-time LTI systems.
//!
//! The crate estimates, from input-output data alone, how much output energy
//! each candidate sensor collects (discounted infinite-horizon or
//! finite-horizon H2-type metrics, or their log-det volumetric variants) and
//! picks the best subset. A model-based [`oracle`] computes the same
//! quantities from the system matrices for validation.
//!
//! Pipeline:
//!
//! 1. [`lti`]: simulate the plant under an exciting input and record the
//!    seed-sensor outputs `ŷ` and the evaluated-sensor outputs `ỹ`.
//! 2. [`regressors`]: build history stacks `z(t)` and the quadratic regressor
//!    matrices from the recorded data.
//! 3. [`estimator`]: solve the least-squares Lyapunov-like equations for the
//!    lifted Gramian and read off the `m x m` cost block.
//! 4. [`selector`]: rank sensors, run greedy log-det selection, and verify
//!    observability of the chosen set from data.

pub mod error;
pub mod estimator;
pub mod lti;
pub mod metric;
pub mod oracle;
pub mod regressors;
pub mod selector;
pub mod serde_float;
pub mod tensor_ops;

pub use error::{Error, Result};
pub use estimator::{GramianEstimate, GramianSequence};
pub use lti::{ExcitationConfig, ExcitationKind, LtiSystem, SelectionIndex, Trajectory};
pub use metric::{Horizon, Metric, MetricKind};
pub use regressors::{FiniteRegressorBundle, ObsDataMatrices, RegressorBundle};
pub use selector::{ObservabilityVerdict, SelectionResult};
pub use tensor_ops::{PinvResult, SymMatrix, TolPolicy};
