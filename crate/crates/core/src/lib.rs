pub mod error;
pub mod hilbert;
pub mod lang;
pub mod coupling;
pub mod estimators;
pub mod pointer;
pub mod scenarios;
pub mod systems;
pub mod tsvf;

pub use error::{Error, Result};
