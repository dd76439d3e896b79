//! Networked hashtag-coordination experiments: topologies, the trial
//! protocol, simulated agents, measurements, regression models and causal
//! claim extraction.

pub mod agents;
pub mod causal;
pub mod engine;
pub mod error;
pub mod glm;
pub mod metrics;
pub mod session;
pub mod topology;

pub use error::{Error, Result};
