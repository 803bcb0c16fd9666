//! Core library of the solvency laboratory: a multi-year nested-simulation
//! engine for a stylized participating savings book, with polynomial proxy
//! calibration (curve fitting and least-squares Monte-Carlo), standard-formula
//! capital aggregation, required-capital constraints, and the sampling-theory
//! experiments that compare proxy efficiency.
//!
//! Module map:
//! - [`esg`] — economic scenario generation (real-world primaries, risk-neutral
//!   secondaries, instantaneous node shocks, elementary risk factors).
//! - [`alm`] — asset/liability projection producing per-period profits and the
//!   net present value of margins.
//! - [`nested`] — the nested-simulation engine producing joint NAV sample paths.
//! - [`stdformula`] — stand-alone capitals and square-root correlation
//!   aggregation into SCR and solvency-ratio paths.
//! - [`proxy`] — polynomial proxy calibration, selection, and validation.
//! - [`solvency`] — required capital under the SC0–SC5 constraint family.
//! - [`theory`] — variance decompositions and proxy-efficiency experiments.

pub mod alm;
pub mod error;
pub mod esg;
pub mod nested;
pub mod proxy;
pub mod rng;
pub mod solvency;
pub mod stats;
pub mod stdformula;
pub mod theory;

pub use error::{Error, Result};
