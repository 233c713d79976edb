use crate::dggr::DGGraph;
use crate::numerics::{Tape, TensorId};

use super::gatv2::{apply_activation, gatv2_forward, Activation};
use super::gcn::gcn_forward;
use super::params::{ConvIds, ModelIds};
use super::{ModelError, NetworkConfig};

/// Full forward pass for one molecule graph: node one-hots, linear
/// embedding, the convolution stack with ELU between layers, mean readout
/// over nodes, and the regression head. Returns a `[1]` scalar prediction.
pub fn forward_network(
    tape: &mut Tape,
    graph: &DGGraph,
    cfg: &NetworkConfig,
    ids: &ModelIds,
) -> Result<TensorId, ModelError> {
    let x0 = tape.leaf(graph.node_features.clone());
    let edge_feats = tape.leaf(graph.edge_feature_matrix());

    let embedded = tape.matmul(x0, ids.embed.weight)?;
    let mut h = tape.add_bias(embedded, ids.embed.bias)?;

    let last = ids.convs.len().saturating_sub(1);
    for (layer, conv) in ids.convs.iter().enumerate() {
        let activation = if layer == last && cfg.final_conv_identity {
            Activation::Identity
        } else {
            Activation::Elu
        };
        h = match conv {
            ConvIds::Gatv2 { heads, concat } => gatv2_forward(
                tape,
                h,
                graph,
                heads,
                *concat,
                cfg.leaky_slope,
                edge_feats,
                activation,
            )?,
            ConvIds::Gcn { weight } => {
                let out = gcn_forward(tape, h, graph, *weight)?;
                apply_activation(tape, out, activation)
            }
        };
    }

    let everyone: Vec<usize> = (0..graph.n_nodes).collect();
    let mut y = tape.mean_rows(h, &[everyone])?;
    for (k, lin) in ids.head.iter().enumerate() {
        let z = tape.matmul(y, lin.weight)?;
        y = tape.add_bias(z, lin.bias)?;
        if k + 1 < ids.head.len() {
            y = tape.elu(y);
        }
    }
    Ok(tape.reshape(y, vec![1])?)
}
