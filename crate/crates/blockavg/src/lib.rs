//! Simulation and analysis toolkit for the repeated block average process
//! on the n-simplex: a mass vector evolves by repeatedly replacing the
//! coordinates in a random block by their average, and the questions of
//! interest are how fast, and in what shape, it approaches the uniform
//! vector.
//!
//! The crate provides the mass dynamics itself ([`engine`]), the block-size
//! law and its derived timescales ([`sizespec`]), the dual random walk of a
//! tagged unit of mass ([`dualwalk`]), the pile refinement that powers the
//! sharp total-variation analysis ([`piles`]), closed-form limit profiles
//! ([`profiles`]), exact small-instance oracles ([`oracle`]), and the
//! experiment layer that ties them together behind a CLI ([`experiment`],
//! [`config`], [`validate`]).

pub mod config;
pub mod dualwalk;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod oracle;
pub mod piles;
pub mod profiles;
pub mod rng;
pub mod sizespec;
pub mod stats;
pub mod validate;

pub use error::{Error, Result};
