//! Attention convolution with edge features, the GCN baseline, and full
//! network assembly.

mod checkpoint;
mod config;
mod gatv2;
mod gcn;
mod network;
mod params;

pub use checkpoint::Checkpoint;
pub use config::{ConvKind, NetworkConfig};
pub use gatv2::{gatv2_attention, gatv2_forward, gatv2_scores, Activation};
pub use gcn::gcn_forward;
pub use network::forward_network;
pub use params::{ConvIds, ConvParams, Gatv2Head, HeadIds, LinearIds, LinearParams, ModelIds, ModelParams};

use std::fmt;

use crate::numerics::NumericsError;

/// Errors from configuration validation and the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    Config(String),
    Numerics(NumericsError),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::Config(msg) => write!(f, "model config: {msg}"),
            ModelError::Numerics(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ModelError {}

impl From<NumericsError> for ModelError {
    fn from(e: NumericsError) -> Self {
        ModelError::Numerics(e)
    }
}
