//! Batch (offline) reinforcement learning built around the upper envelope of
//! a dataset's Monte Carlo returns.
//!
//! The pipeline: compute per-transition returns, fit a value network that
//! lies on or above every return (a K-weighted asymmetric penalty loss with
//! validation-based early stopping), select the state-action pairs whose
//! returns come closest to that envelope, and clone them into a policy by
//! plain regression. Progressive training interleaves all three; vanilla
//! behavior cloning, top-return selection, and symmetric-regression values
//! are included as baselines and ablations.
//!
//! The numeric core ([`numcore`]) is generic over its scalar type; everything
//! above it pins [`Real`] (`f64`) for the headroom that gradient checks and
//! the envelope limit checks need. Deterministic toy environments
//! ([`envs`]), dataset plumbing ([`dataset`]), and an experiment harness
//! ([`harness`]) make runs reproducible end to end: identical configurations
//! produce identical outputs, bit for bit.

pub mod dataset;
pub mod envelope;
pub mod envs;
pub mod error;
pub mod harness;
pub mod imitation;
pub mod numcore;
pub mod seeding;
pub mod selection;

pub use error::{Error, Result};

/// Scalar used by everything above the numeric core.
pub type Real = f64;

/// Network parameters at the crate's working precision.
pub type Mlp = numcore::MlpParams<Real>;

/// Dense matrix at the crate's working precision.
pub type RealMatrix = numcore::Matrix<Real>;

/// Selection outcome at the crate's working precision.
pub type Selection = selection::SelectionResult<Real>;
