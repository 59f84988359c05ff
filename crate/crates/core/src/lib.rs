// SPDX-License-Identifier: Apache-2.0

//! Robust piecewise-constant quantum control.
//!
//! Pulses are optimized so the realized unitary (or state) matches a target
//! while the time-averaged perturbation superoperator `M₀`, projected away
//! from the classes of errors that are tolerated, has small norm. The
//! `verify` module checks the achieved robustness against perturbed
//! dynamics independently of the superoperator machinery.

pub mod docs;
pub mod error;
pub mod functionals;
pub mod grad;
pub mod models;
pub mod optimize;
pub mod qcore;
pub mod superop;
pub mod verify;

pub use error::{Error, Result};
