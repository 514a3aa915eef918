#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod control;
pub mod dp;
pub mod error;
pub mod model;
pub mod policies;
pub mod quadrature;
pub mod trial;

pub use error::{Error, Result};
