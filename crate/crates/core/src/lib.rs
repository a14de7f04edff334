//! Layer-wise probing of speech representation models.

pub mod cca;
pub mod clustering;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod segments;
pub mod selftest;
pub mod synthetic;
pub mod tensor_io;

pub use error::{Error, Result, Warning};
