//! Deterministic numerical oracle for the `n`-step random walk.

mod checks;
mod grid;

pub use checks::*;
pub use grid::{GridDistribution, GridOptions, TailBracket, Window};
