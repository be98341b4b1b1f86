pub mod error;
pub mod numkernel;
pub mod dynsys;
pub mod sets;
pub mod real;
pub mod invariance;
pub mod thresholds;
pub mod oracle;

pub use error::{Error, Result};
