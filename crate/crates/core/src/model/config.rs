use serde::{Deserialize, Serialize};

use super::ModelError;

/// Which convolution the network stacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvKind {
    /// Attention convolution over all distance-geometric edges.
    Gatv2,
    /// Symmetric-normalized convolution over bond edges only, distances
    /// ignored: the 2D baseline.
    Gcn,
}

/// Network shape: embedding width, convolution stack, attention heads, and
/// the regression head.
///
/// Multi-head layers concatenate heads on hidden layers and average them on
/// the last convolution, so every layer outputs `conv_dim` features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub conv: ConvKind,
    pub embed_dim: usize,
    pub conv_layers: usize,
    pub conv_dim: usize,
    pub heads: usize,
    pub head_hidden: Vec<usize>,
    pub leaky_slope: f64,
    /// Skip the nonlinearity after the last convolution.
    pub final_conv_identity: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            conv: ConvKind::Gatv2,
            embed_dim: 64,
            conv_layers: 3,
            conv_dim: 64,
            heads: 4,
            head_hidden: vec![32],
            leaky_slope: 0.2,
            final_conv_identity: false,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("conv_layers", self.conv_layers),
            ("conv_dim", self.conv_dim),
            ("heads", self.heads),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if self.head_hidden.iter().any(|&w| w == 0) {
            return Err(ModelError::Config("head_hidden widths must be positive".into()));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(ModelError::Config(format!(
                "leaky_slope must lie in (0, 1), got {}",
                self.leaky_slope
            )));
        }
        if self.conv == ConvKind::Gatv2 && self.conv_layers > 1 && self.conv_dim % self.heads != 0 {
            return Err(ModelError::Config(format!(
                "conv_dim {} must be divisible by heads {} for concatenated hidden layers",
                self.conv_dim, self.heads
            )));
        }
        Ok(())
    }

    /// Heads on the last convolution are averaged; hidden ones concatenate.
    pub fn concat_at(&self, layer: usize) -> bool {
        layer + 1 < self.conv_layers
    }

    pub fn conv_input_width(&self, layer: usize) -> usize {
        if layer == 0 {
            self.embed_dim
        } else {
            self.conv_dim
        }
    }

    /// Per-head output width keeping every layer's combined output at
    /// `conv_dim`.
    pub fn per_head_out(&self, layer: usize) -> usize {
        if self.concat_at(layer) {
            self.conv_dim / self.heads
        } else {
            self.conv_dim
        }
    }
}
