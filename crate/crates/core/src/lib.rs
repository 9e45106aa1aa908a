//! Module-based neural networks with hand-written backward passes.

pub mod conv;
pub mod criteria;
pub mod data;
pub mod error;
pub mod experiments;
mod gemm;
pub mod nn;
pub mod parity;
pub mod report;
pub mod rng;
pub mod training;
pub mod tensor;

pub use error::{Error, Result};
pub use nn::{Module, Sequential};
pub use rng::Rng;
pub use tensor::{Reduce, Tensor};
