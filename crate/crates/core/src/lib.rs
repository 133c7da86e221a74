//! Monte-Carlo simulation of default contagion in interbank networks where
//! creditor banks insure their loans with credit default swaps.
//!
//! Pipeline per sample: grow a scale-free loan network ([`netgen`]), build
//! balance sheets and optionally apply risk transfer ([`balance`]), assign
//! protection sellers ([`cds`]), shock the external assets ([`market`]) and
//! run the contagion ([`cascade`]). [`metrics`] turns failure counts into
//! severity curves and the systemic capital buffer ratio; [`harness`] runs
//! sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod balance;
pub mod cascade;
pub mod cds;
pub mod error;
pub mod harness;
pub mod market;
pub mod metrics;
pub mod netgen;

pub use error::{Error, Result};
