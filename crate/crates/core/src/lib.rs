//! Mixing coefficients, exact moment recursions, inequality verification and
//! Monte-Carlo CLT experiments for triangular arrays of finite-state
//! non-homogeneous Markov chains.

pub mod chain;
pub mod clt;
pub mod checks;
pub mod coefficients;
pub mod error;
pub mod families;
pub mod linalg;
pub mod moments;
pub mod rng;
pub mod suite;

pub use chain::{ChainSpec, JointLaw, MarginalLaws};
pub use checks::{CheckOutcome, CheckStatus, Tolerances};
pub use coefficients::CoefficientReport;
pub use error::{Error, Result};
pub use moments::{MomentReport, TailConditional};
