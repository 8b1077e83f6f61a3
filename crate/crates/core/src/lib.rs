pub mod cli;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod experiment;
pub mod mast;
pub mod nn;
pub mod policy;
pub mod rng;
pub mod wind;

pub use error::{Error, Result};
