pub mod error;
pub mod exterior;
pub mod geometry;
pub mod jets;
pub mod matrix;
pub mod oracle;
pub mod phase;
pub mod scalars;
pub mod stationary;
pub mod szego;

pub use error::{Error, Result};
