//! Consensus networks with faulty and malicious agents: structural resilience bounds,
//! zero-dynamics analysis, geometric residual generators and identification procedures.
//!
//! Agents are 0-based throughout the library; file formats and the CLI use 1-based ids.

pub mod consensus;
pub mod detect;
pub mod error;
pub mod fdi;
pub mod fixtures;
pub mod graph;
pub mod numerics;
pub mod serde_util;
pub mod sysan;

pub use error::{Error, Result};
