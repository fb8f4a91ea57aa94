//! Safe regret-optimal output-feedback control of partially observed
//! linear time-varying systems.
//!
//! The crate builds finite-horizon LTV models in a lifted block-operator
//! form, parameterizes output-feedback controllers through their
//! closed-loop response, and synthesizes controllers by semidefinite
//! programming: a worst-case-regret controller with robust polytopic
//! safety constraints, plus safe H2 / H-infinity baselines and the
//! noncausal clairvoyant benchmark. An evaluation layer provides noise
//! sampling, closed-loop rollouts, regret metrics, and exact safety
//! verification for box noise sets.

// Force linkage of the system BLAS/LAPACK used by the solver backends.
extern crate openblas_src;

mod error;
pub(crate) mod linalg;

pub mod conic;
pub mod evaluation;
pub mod ltv;
pub mod sls;
pub mod synthesis;

pub use error::{Error, Result};
pub use evaluation::{NoiseKind, NoiseModel, NoiseRealization, RolloutResult};
pub use ltv::{CostOperator, Dims, LiftedSystem, LtvSystem, NoiseBounds, Polytope, SafetySpec};
pub use sls::{ControlGains, ResponseMatrix};
pub use synthesis::{ClairvoyantResponse, SynthesisResult};
