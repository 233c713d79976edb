use crate::dggr::DGGraph;
use crate::numerics::{Tape, TensorId};

use super::params::HeadIds;
use super::ModelError;

/// Nonlinearity applied after a convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Identity,
}

pub fn apply_activation(tape: &mut Tape, x: TensorId, activation: Activation) -> TensorId {
    match activation {
        Activation::Elu => tape.elu(x),
        Activation::Identity => x,
    }
}

/// Per-edge attention score for one head: for each directed edge `j -> i`,
/// `attn^T leaky_relu(W_dst x_i + W_src x_j + W_edge e_ij)`. Self-loops are
/// scored like any other edge, with their own edge features.
pub fn gatv2_scores(
    tape: &mut Tape,
    x: TensorId,
    graph: &DGGraph,
    head: &HeadIds,
    leaky_slope: f64,
    edge_feats: TensorId,
) -> Result<TensorId, ModelError> {
    let projected_dst = tape.matmul(x, head.w_score_dst)?;
    let projected_src = tape.matmul(x, head.w_score_src)?;
    let z_dst = tape.gather_rows(projected_dst, &graph.dst_indices())?;
    let z_src = tape.gather_rows(projected_src, &graph.src_indices())?;
    let z_edge = tape.matmul(edge_feats, head.w_score_edge)?;
    let pre = tape.add(z_dst, z_src)?;
    let pre = tape.add(pre, z_edge)?;
    let activated = tape.leaky_relu(pre, leaky_slope);
    let scores = tape.matmul(activated, head.attn)?;
    Ok(tape.reshape(scores, vec![graph.edges.len()])?)
}

/// Attention coefficients for one head: scores soft-maxed over each node's
/// incoming edges, self-loop included in the same normalization.
pub fn gatv2_attention(
    tape: &mut Tape,
    x: TensorId,
    graph: &DGGraph,
    head: &HeadIds,
    leaky_slope: f64,
    edge_feats: TensorId,
) -> Result<TensorId, ModelError> {
    let scores = gatv2_scores(tape, x, graph, head, leaky_slope, edge_feats)?;
    Ok(tape.segment_softmax(scores, &graph.dst_indices())?)
}

/// One attention convolution: per head, attention-weighted sum of
/// transformed source features over each node's incoming edges; heads
/// concatenated or averaged, then the activation.
pub fn gatv2_forward(
    tape: &mut Tape,
    x: TensorId,
    graph: &DGGraph,
    heads: &[HeadIds],
    concat: bool,
    leaky_slope: f64,
    edge_feats: TensorId,
    activation: Activation,
) -> Result<TensorId, ModelError> {
    let src = graph.src_indices();
    let dst = graph.dst_indices();
    let mut per_head = Vec::with_capacity(heads.len());
    for head in heads {
        let alpha = gatv2_attention(tape, x, graph, head, leaky_slope, edge_feats)?;
        let values = tape.matmul(x, head.w_value)?;
        let gathered = tape.gather_rows(values, &src)?;
        let aggregated = tape.segment_weighted_sum(alpha, gathered, &dst, graph.n_nodes)?;
        per_head.push(aggregated);
    }
    let combined = if concat {
        tape.concat_cols(&per_head)?
    } else {
        let mut acc = per_head[0];
        for &h in &per_head[1..] {
            acc = tape.add(acc, h)?;
        }
        tape.scale(acc, 1.0 / per_head.len() as f64)
    };
    Ok(apply_activation(tape, combined, activation))
}
