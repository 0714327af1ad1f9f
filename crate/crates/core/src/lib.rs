pub mod data;
pub mod error;
pub mod eval;
pub mod init;
pub mod model;
pub mod numeric;
pub mod scaling;
pub mod train;

pub use error::{Error, Result};
