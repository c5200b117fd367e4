pub mod audiofeat;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numcore;
pub mod probes;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
