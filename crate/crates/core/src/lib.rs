//! Cache-aided multi-cell massive MIMO downlink: system model, cache
//! placement, MMSE channel estimation, MRT/ZF/RZF precoding, closed-form
//! ECDR expressions and a deterministic Monte Carlo harness.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod cache;
pub mod config;
pub mod error;
pub mod estimation;
pub mod oracles;
pub mod precoding;
pub mod rates;
pub mod rng;
pub mod sim;
pub mod system_model;

pub use error::{Error, Result};
