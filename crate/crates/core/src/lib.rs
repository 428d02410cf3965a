//! Derivative-free data-driven stabilization of continuous-time LTI systems.
//!
//! Input/state (or input/output) data are passed through low-pass filters
//! whose states and exact derivatives feed linear matrix inequalities; the
//! solution yields a dynamic filter-based controller. Plants are simulated
//! exactly so that every identity along the way can be checked to roundoff.

// `!(x <= tol)` is deliberate: NaN must fail every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batching;
pub mod error;
pub mod lmi;
pub mod lti_sim;
pub mod numkit;
pub mod pipeline;
pub mod realization;

pub use error::{Error, Result};
