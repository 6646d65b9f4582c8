pub mod apex;
pub mod biwoof;
pub mod cli;
pub mod cnn;
pub mod derivatives;
pub mod error;
pub mod eval;
pub mod flow;
pub mod gan;
pub mod imaging;
pub mod numerics;
pub mod rng;

pub use error::{Error, Result};
