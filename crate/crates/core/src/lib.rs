pub mod classical;
pub mod closure;
pub mod config;
pub mod error;
pub mod montecarlo;
pub mod numerics;
pub mod symbolic;

pub use error::{Error, Result};
pub use nalgebra;
