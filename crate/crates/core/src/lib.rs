//! Emergent-communication laboratory for cooperative gridworld navigation.
//!
//! A sender observing the goal location emits discrete symbols; a receiver
//! navigates a 5x5 gridworld conditioned on its position and the received
//! symbols. Both learn from the shared terminal reward alone: the sender as a
//! contextual bandit, the receiver by Q-learning, on a small hand-rolled
//! feed-forward network trained with RMSProp. Exact graph oracles
//! (shortest-path counts, minimal path covers, theoretical-maximum return)
//! and post-hoc probes (message maps, flow maps, capacity curves, dominance
//! scrambling) characterize the protocol that emerges.

pub mod agents;
pub mod analysis;
pub mod cli;
pub mod config;
pub mod env;
pub mod nn;
pub mod scalar;
pub mod store;
pub mod training;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad layout name, out-of-range parameter, ...).
    #[error("configuration error: {0}")]
    Config(String),
    /// API misuse (stepping a done episode, mismatched dimensions, ...).
    #[error("usage error: {0}")]
    Usage(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    /// Runtime failure that is neither a config nor a usage problem.
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl Error {
    /// Stable process exit code: 1 for config/usage errors, 2 for failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

// Concrete aliases for the scalar-generic network types. Training and the
// CLI run on f64; f32 remains available for experiments trading precision
// for footprint.
pub type DenseNet64 = nn::DenseNet<f64>;
pub type DenseNet32 = nn::DenseNet<f32>;
pub type GradientSet64 = nn::GradientSet<f64>;
pub type GradientSet32 = nn::GradientSet<f32>;
pub type RmsProp64 = nn::RmsProp<f64>;
pub type RmsProp32 = nn::RmsProp<f32>;
pub type SenderAgent64 = agents::SenderAgent<f64>;
pub type SenderAgent32 = agents::SenderAgent<f32>;
pub type ReceiverAgent64 = agents::ReceiverAgent<f64>;
pub type ReceiverAgent32 = agents::ReceiverAgent<f32>;
