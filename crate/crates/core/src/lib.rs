//! Radial distribution feeder modelling and day-ahead control.
//!
//! The crate covers a single-branch feeder in per-unit ([`feeder`]), daily
//! demand and solar profiles ([`profiles`]), branch-flow evaluation
//! ([`distflow`]), a sparse convex QP solver ([`qp`]), loss-minimizing
//! battery and inverter controllers ([`controllers`]), performance metrics
//! ([`metrics`]) and parameter sweeps ([`experiments`]).

pub mod config;
pub mod controllers;
pub mod distflow;
pub mod error;
pub mod experiments;
pub mod feeder;
pub mod metrics;
pub mod profiles;
pub mod qp;

pub use error::{Error, Result};
