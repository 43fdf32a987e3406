#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alternating;
pub mod baselines;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod hq;
pub mod io;
pub mod losses;
pub mod matrix;
pub mod rng;
pub mod suite;
pub mod wnls;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use rng::Rng;
