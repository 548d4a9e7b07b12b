//! Random grid neural processes: physics-informed variational emulators for
//! parametric PDEs trained on randomly sampled collocation grids.

// `!(x > 0.0)` style guards deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod domain;
pub mod emulator;
pub mod engine;
pub mod error;
pub mod evalcli;
pub mod gauss;
pub mod objective;
pub mod parallel;
pub mod pde;
pub mod reference;
pub mod rng;

pub use error::{Error, Result};
