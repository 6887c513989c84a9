// Parameter checks use `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod config;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod image;
pub mod pipeline;
pub mod primitives;
pub mod refine;
pub mod superpixel;
pub mod synth;
pub mod viz;

pub use error::{Error, Result};
