//! egosym learns a portable symbolic vocabulary and probabilistic operators
//! from option-execution data gathered in continuous simulated tasks. The
//! vocabulary lives in the agent's egocentric observation space, so it
//! transfers across tasks; grounding it in a particular task only requires
//! problem-space partition labels and count-based linking functions. The
//! grounded operators can be emitted as PPDDL and drive a best-first
//! probabilistic planner, validated against a Monte-Carlo simulation oracle.

pub mod data;
pub mod domains;
pub mod classifier;
pub mod env;
pub mod error;
pub mod ground;
pub mod kde;
pub mod math;
pub mod partition;
pub mod plan;
pub mod ppddl;
pub mod symbols;

pub use data::{collect, load, save, Dataset, Transition};
pub use env::{Environment, ExecOutcome, OptionDescriptor};
pub use error::{Error, Result};
