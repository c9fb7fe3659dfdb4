pub mod analysis;
pub mod channel;
pub mod codec;
pub mod dsss;
pub mod error;
pub mod fec;
pub mod nn;
pub mod montecarlo;
pub mod rng;
pub mod sync;

pub use error::{Error, Result};
