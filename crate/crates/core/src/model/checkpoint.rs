use serde::{Deserialize, Serialize};

use crate::dggr::DGConfig;
use crate::molio::TargetScaler;

use super::{ModelParams, NetworkConfig};

/// A complete inference bundle: every configuration and learned value needed
/// to reproduce predictions, in one JSON document. Round-trips bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub network: NetworkConfig,
    pub dg: DGConfig,
    pub target: String,
    pub element_vocab: Vec<u32>,
    pub scaler: TargetScaler,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialization")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let mut checkpoint: Checkpoint = serde_json::from_str(text)?;
        checkpoint.params.mark_trainable();
        Ok(checkpoint)
    }
}
