//! Markovian open dynamics of coupled bosonic-mode and qubit networks.
//!
//! The crate builds GKSL generators for two probe models (a multi-mode
//! cavity coupled to two bacterial exciton modes, and a transmon qubit
//! coupled to a tardigrade mode through a cavity), propagates density
//! matrices under them, and evaluates purity, negativity and two-qubit
//! discord along the way.

pub mod cli;
pub mod correlations;
pub mod error;
pub mod lindblad;
pub mod models;
pub mod scenarios;
pub mod sparse;
pub mod tensorspace;

pub use num_complex::Complex64;
