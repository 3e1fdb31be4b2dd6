//! Maximal quantum Fisher information matrices of parameterized channels.
//!
//! The pipeline runs from Kraus channels ([`channels`]) through the
//! minimum fidelity between two channels, posed as a small semidefinite
//! program ([`chandist`], [`sdp`]), to the maximal QFIM read off the
//! second-order expansion of `1 − f_min` ([`maxqfim`]). [`scaling`] holds
//! the bounds for `N` parallel uses, and [`qfim`] the probe-level QFIM,
//! fidelity and Cramér–Rao quantities used to cross-check them.
//!
//! ```no_run
//! use qfim_core::channels::DephasingPhase;
//! use qfim_core::maxqfim::{extract_maxqfim, DEFAULT_STEP};
//!
//! let report = extract_maxqfim(&DephasingPhase, &[0.3, 0.5], DEFAULT_STEP, true)?;
//! println!("{}", report.jmax);
//! # Ok::<(), qfim_core::Error>(())
//! ```

pub mod chandist;
pub mod cli;
pub mod channels;
pub mod error;
pub mod linalg;
pub mod maxqfim;
pub mod qfim;
pub mod sampling;
pub mod scaling;
pub mod sdp;

pub use error::{Error, Result};
