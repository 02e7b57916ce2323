//! Contrastive-feature multi-user channel estimation for massive MIMO.

pub mod adaptive_pipeline;
pub mod baselines;
pub mod channel_sim;
pub mod clnet;
pub mod dnet;
pub mod error;
pub mod experiment;
pub mod numerics;
pub mod storage;

pub use error::{Error, Result};
pub use num_complex::Complex64;
