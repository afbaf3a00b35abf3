pub mod envs;
pub mod error;
pub mod harness;
pub mod nn;
pub mod ot;
pub mod rl;
pub mod rnd;
pub mod sipp;

pub use error::{Error, Result};
