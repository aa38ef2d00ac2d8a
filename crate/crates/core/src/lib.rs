//! Filtering, retrofiltering and smoothing of a monitored qubit.

pub mod error;
pub mod fpe;
pub mod lindblad;
mod lm;
pub mod output;
pub mod pre_solver;
pub mod qubit;
pub mod retrofilter;
pub mod scenarios;
pub mod smoother;
pub mod trajectories;
pub mod validation;

pub use error::{Error, Result};
