//! Quantum-trajectory simulation of atomic-state teleportation between two
//! distant atom–cavity systems, with and without a compensation stage.
#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN-rejecting guards

pub mod analytic;
pub mod calibrate;
pub mod config;
pub mod error;
pub mod experiment;
pub mod hilbert;
pub mod linalg;
pub mod model;
pub mod protocol;
pub mod search;
pub mod trajectory;

pub use error::{Error, Result};
