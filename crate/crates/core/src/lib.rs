//! Simulator for a multiuser indoor optical wireless downlink: ceiling
//! access points steer narrow infrared beams at users and share them with
//! power-domain NOMA and successive interference cancellation.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ber;
pub mod channel;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod io;
pub mod noise;
pub mod noma;
pub mod rng;

pub use error::{Error, Result};
