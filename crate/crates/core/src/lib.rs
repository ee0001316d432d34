// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bubbles;
pub mod cli;
pub mod conditions;
pub mod constants;
pub mod error;
pub mod functionals;
pub mod pohozaev;
pub mod ode;
pub mod quad;
pub mod radial;
pub mod solvers;
pub mod verify;

pub use error::{Error, Result};
