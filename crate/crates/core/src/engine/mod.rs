//! Differentiable network engine: reverse-mode tape, second-order spatial
//! jets, dense swish networks and Adam.

pub mod adam;
pub mod dual;
pub mod jet;
pub mod mlp;
pub mod params;
pub mod scalar;
pub mod tape;

pub use adam::{AdamState, LrSchedule};
pub use dual::{Dual, Real};
pub use jet::{BatchJet, JetSpec, TapeJet};
pub use mlp::Mlp;
pub use params::{ParamGrads, ParamId, ParamStore};
pub use scalar::{sigma_t, sigmoid, softplus, swish, ExpLinearBounds, ScalarFn};
pub use tape::{Adjoints, CustomOp, Mat, Tape, Var};
