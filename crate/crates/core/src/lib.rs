//! Tabular average-reward Markov potential games.
//!
//! This crate holds everything that is pure computation: the game model and
//! the objects a joint policy induces on it, exact oracles for stationary
//! distributions, gains, differential value functions and Nash gaps, the
//! structural constants that drive learning-rate selection, the oracle-driven
//! policy updates (projected gradient, proximal-Q, natural policy gradient),
//! the single-trajectory estimators and their sample-based training loops,
//! game generators, and a property-check suite.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and the
//! experiment harness live in the companion `ampg` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod algorithms;
pub mod constants;
mod error;
pub mod game;
pub mod generators;
pub mod linalg;
pub mod oracle;
pub mod random;
pub mod sampling;
pub mod table;
pub mod verification;

pub use error::{Error, Result};
pub use game::{JointPolicy, MarkovGame, Policy, StructureTags};
pub use nalgebra;
pub use table::Table;

/// Probability rows must sum to one within this tolerance.
pub const PROB_TOL: f64 = 1e-12;
