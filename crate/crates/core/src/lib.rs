pub mod channel;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod fading;
pub mod infotheory;
pub mod numerics;
pub mod trials;
pub mod zd;

pub use error::{Error, Result};
