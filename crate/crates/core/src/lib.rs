// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod game;
pub mod hilbert;
pub mod hinf;
pub mod io;
pub mod linalg;
pub mod lq;
pub mod random;
pub mod riccati;
pub mod scenarios;
mod serde_rows;
pub mod sim;
pub mod system;

pub use error::{Error, Result};
