pub mod axes;
pub mod error;
pub mod eval;
pub mod evolution;
pub mod generator;
pub mod latent;
pub mod session;

pub use error::{Error, Result};
