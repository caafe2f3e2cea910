//! Simulation and verification laboratory for EPR-Bohm experiments under
//! local hidden-variable models.
//!
//! * [`geometry`]: settings, outcomes, source values and the row identities.
//! * [`models`]: hidden-variable model families and the anticorrelation check.
//! * [`simulate`]: seeded Monte Carlo runs, correlation estimates, CHSH and
//!   Bell statistics.
//! * [`tables`]: reordering of trial logs into outcome tables.
//! * [`oracle`]: exact sums over finite models, strategy enumeration and the
//!   singlet reference.
//!
//! Geometry and the oracle are generic over the scalar type; the aliases
//! below fix the `f64` instances used by the simulator.

pub mod error;
pub mod geometry;
pub mod log_io;
pub mod models;
pub mod oracle;
pub mod rng;
pub mod scalar;
pub mod simulate;
pub mod tables;

pub use error::{LabError, Result};
pub use geometry::{row_identity, row_sum, Outcome, TimeTag, CHSH_SIGNS};
pub use models::{HiddenVariableModel, InstrumentParam, ModelKind, ModelSpec, SourceDistribution};
pub use scalar::Scalar;
pub use simulate::{ChshStatistic, CorrelationEstimate, TrialLog, TrialRecord};

pub type Setting = geometry::Setting<f64>;
pub type SettingQuad = geometry::SettingQuad<f64>;
pub type ChshPair = geometry::ChshPair<f64>;
pub type HiddenVariable = geometry::HiddenVariable<f64>;
pub type FiniteModel = oracle::FiniteModel<f64>;
/// Finite model with exact rational weights.
pub type ExactFiniteModel = oracle::FiniteModel<num_rational::BigRational>;

/// Hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
