//! Robust iterative waterfilling for competitive rate-maximization in
//! frequency-selective Gaussian interference channels with bounded channel
//! uncertainty.

pub mod conditions;
pub mod csv;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod rates;
pub mod solver;
pub mod twouser;
pub mod waterfill;

pub use error::{Error, Result};
pub use model::{ChannelSet, GameConfig, PowerProfile};
