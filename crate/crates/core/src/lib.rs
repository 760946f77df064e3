#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod curvature;
pub mod error;
pub mod fft;
pub mod fit;
pub mod gluelab;
pub mod jets;
pub mod masolver;
pub mod models;
pub mod quad;
pub mod regmax;
pub mod series;

pub use error::{Error, Result};
