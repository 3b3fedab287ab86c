pub mod error;
pub mod harness;
pub mod imaging;
pub mod metrics;
pub mod network;
pub mod stabilizers;

pub use error::{Error, Result};
