//! Monte Carlo lab and deterministic oracles for branching random walks
//! whose steps have stretched-exponential tails.

pub mod engine;
pub mod error;
pub mod lab;
pub mod limit_laws;
pub mod offspring;
pub mod oracle;
pub mod quad;
pub mod rng;
pub mod stats;
pub mod steplaw;

pub use engine::{ClassifierConfig, ReplicateSummary, RunSpec};
pub use error::{Error, Result};
pub use offspring::{GwPath, OffspringKind, OffspringLaw, WPool};
pub use oracle::{GridDistribution, GridOptions, TailBracket};
pub use steplaw::{Constants, FamilyTag, StepLaw};
