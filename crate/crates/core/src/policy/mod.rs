//! Residual policy and its Soft Actor-Critic trainer.

mod actor;
mod obs;
mod replay;
mod sac;
mod train;

pub use actor::*;
pub use obs::*;
pub use replay::*;
pub use sac::*;
pub use train::*;
