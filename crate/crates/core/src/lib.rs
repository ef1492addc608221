//! Classical numerical methods written as small constrained networks whose
//! weights are learned from data, plus the solvers that verify them.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod calculus;
pub mod chidenn;
pub mod error;
pub mod linalg;
pub mod optim;
pub mod sca;
pub mod stfem;

pub use error::{Error, Result};
