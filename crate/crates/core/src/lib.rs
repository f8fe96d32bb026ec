pub mod calib;
pub mod config;
pub mod constants;
pub mod dsp;
pub mod error;
pub mod junction;
pub mod kernels;
pub mod modes;
pub mod pipeline;
pub mod quantum;
pub mod special;
pub mod synth;

pub use error::{Error, Result};
