//! Distributional random network distillation (DRND).
//!
//! Building blocks:
//! - [`nn`]: dense networks with deterministic init, manual reverse-mode
//!   gradients, and Adam.
//! - [`bonus`]: the DRND engine (frozen target ensemble, distillation,
//!   moments, the two-term bonus, reward/observation normalizers).
//! - [`estimator`]: network-free verification of the underlying statistics
//!   (unbiasedness and variance of the pseudo-count estimator, the
//!   linear-model MSE identity).
//! - [`inconsistency`]: bonus-inconsistency experiments on one-hot and 2-D
//!   grid datasets, with KL metrics against uniform and inverse-sqrt-count
//!   references.
//! - [`online`]: PPO with DRND intrinsic rewards on toy hard-exploration
//!   environments.
//! - [`offline`]: SAC with the DRND bonus as an anti-exploration penalty on
//!   a synthetic continuous task.
//! - [`checkpoint`]: versioned JSON serialization for ensembles/predictors.

pub mod bonus;
pub mod checkpoint;
pub mod envs;
pub mod error;
pub mod estimator;
pub mod inconsistency;
pub mod nn;
pub mod offline;
pub mod online;
pub mod rng;

pub use bonus::{BonusConfig, MomentSet, PredictorState, TargetEnsemble, TargetMode};
pub use error::{DrndError, Result};
pub use nn::{Activation, AdamState, MlpParams, MlpSpec};
pub use rng::Rng64;
