pub mod error;
pub mod estimator;
pub mod excitation;
pub mod harness;
pub mod mlp;
pub mod plant;
pub mod pod;

pub use error::{Result, RomError};
