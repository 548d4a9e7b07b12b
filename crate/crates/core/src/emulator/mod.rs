//! Forward (alpha) and inverse (beta) emulators.

pub mod alpha;
pub mod conv;
pub mod gicnet;
pub mod nw;

pub use alpha::{AlphaConfig, AlphaNet, FieldHeads, FieldJets};
pub use gicnet::{canonical_order, diag_logpdf_tape, GicConfig, GicNet};
pub use nw::{nw_interpolate, KernelFamily};
