//! Unlimited one-bit (UNO) sampling.
//!
//! A signal is folded by a self-reset ADC into `[-λ, λ)`, compared against
//! `m` random threshold sequences, and recovered from the resulting sign bits
//! with a randomized Kaczmarz solver followed by higher-order-difference
//! unfolding. The [`noisy`] module extends this to linear-model parameter
//! recovery with plug-and-play ADMM, and [`harness`] drives the Monte-Carlo
//! experiments.

// `!(x > 0.0)` style checks deliberately reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod modulo;
pub mod noisy;
pub mod onebit;
pub mod rng;
pub mod signals;
pub mod uno;

pub use error::{Error, Result};
