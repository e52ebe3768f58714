//! The federation controller, learners, and driver: task scheduling, model
//! store, weighted aggregation, the three communication protocols
//! (synchronous, asynchronous, semi-synchronous), secure summation, and
//! federated evaluation.
//!
//! The default execution mode is a deterministic single-threaded simulation
//! driven by a virtual clock (learner speed modeled as steps/second); a
//! threaded mode runs each learner on its own thread exchanging
//! length-prefixed binary messages with the controller over in-process
//! channels. The run log schema is identical in both modes.

mod aggregate;
mod config;
mod runtime;
mod secure;
mod seed;
mod wire;

pub use aggregate::{aggregate_weighted, AggregateError, ModelStore, ModelStoreEntry};
pub use config::{
    ExecutionMode, FederationConfig, LearnerEval, LearnerHandle, LearnerRoundRecord, ProtocolSpec,
    RoundRecord, RunLog,
};
pub use runtime::{evaluate_community, run_federation, RunFailure};
pub use secure::{SecureError, SecureSumSession, FIXED_POINT_SCALE};
pub use seed::derive_seed;
pub use wire::{decode_message, encode_message, Message, WireError};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FedError {
    #[error("invalid federation config: {0}")]
    Config(String),
    #[error("learner '{0}' failed: {1}")]
    LearnerFailure(String, String),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Secure(#[from] SecureError),
    #[error(transparent)]
    Model(#[from] fed_model::ModelError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
