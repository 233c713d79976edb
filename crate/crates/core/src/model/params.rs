use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{Tape, Tensor, TensorId};

use super::{ConvKind, ModelError, NetworkConfig};

/// Weight matrix plus bias vector of one affine layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// One attention head. The score projection is stored as three blocks
/// (destination, source, edge) whose gathered rows are summed; that equals
/// one matrix applied to the concatenation of the three inputs, without
/// materializing it. `attn` is the score vector, kept as a column matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gatv2Head {
    pub w_score_dst: Tensor,
    pub w_score_src: Tensor,
    pub w_score_edge: Tensor,
    pub attn: Tensor,
    pub w_value: Tensor,
}

/// Parameters of one convolution layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConvParams {
    Gatv2 { heads: Vec<Gatv2Head>, concat: bool },
    Gcn { weight: Tensor },
}

/// All learned tensors of a network, in a stable walk order shared by the
/// optimizer, tape registration, and gradient extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub embed: LinearParams,
    pub convs: Vec<ConvParams>,
    pub head: Vec<LinearParams>,
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::matrix(rows, cols, data).with_grad()
}

impl ModelParams {
    /// Deterministic Xavier-uniform initialization (zero biases) for the
    /// given node feature and edge feature widths.
    pub fn init(
        cfg: &NetworkConfig,
        in_dim: usize,
        edge_dim: usize,
        seed: u64,
    ) -> Result<Self, ModelError> {
        cfg.validate()?;
        if in_dim == 0 || edge_dim == 0 {
            return Err(ModelError::Config("input and edge widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let embed = LinearParams {
            weight: xavier(&mut rng, in_dim, cfg.embed_dim),
            bias: Tensor::zeros(vec![cfg.embed_dim]).with_grad(),
        };

        let mut convs = Vec::with_capacity(cfg.conv_layers);
        for layer in 0..cfg.conv_layers {
            let f_in = cfg.conv_input_width(layer);
            match cfg.conv {
                ConvKind::Gcn => {
                    convs.push(ConvParams::Gcn { weight: xavier(&mut rng, f_in, cfg.conv_dim) });
                }
                ConvKind::Gatv2 => {
                    let f_out = cfg.per_head_out(layer);
                    let heads = (0..cfg.heads)
                        .map(|_| Gatv2Head {
                            w_score_dst: xavier(&mut rng, f_in, f_out),
                            w_score_src: xavier(&mut rng, f_in, f_out),
                            w_score_edge: xavier(&mut rng, edge_dim, f_out),
                            attn: xavier(&mut rng, f_out, 1),
                            w_value: xavier(&mut rng, f_in, f_out),
                        })
                        .collect();
                    convs.push(ConvParams::Gatv2 { heads, concat: cfg.concat_at(layer) });
                }
            }
        }

        let mut head = Vec::new();
        let mut width = cfg.conv_dim;
        for &next in &cfg.head_hidden {
            head.push(LinearParams {
                weight: xavier(&mut rng, width, next),
                bias: Tensor::zeros(vec![next]).with_grad(),
            });
            width = next;
        }
        head.push(LinearParams {
            weight: xavier(&mut rng, width, 1),
            bias: Tensor::zeros(vec![1]).with_grad(),
        });

        Ok(ModelParams { embed, convs, head })
    }

    /// Every tensor in canonical walk order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.embed.weight, &self.embed.bias];
        for conv in &self.convs {
            match conv {
                ConvParams::Gcn { weight } => out.push(weight),
                ConvParams::Gatv2 { heads, .. } => {
                    for h in heads {
                        out.extend([&h.w_score_dst, &h.w_score_src, &h.w_score_edge, &h.attn, &h.w_value]);
                    }
                }
            }
        }
        for lin in &self.head {
            out.extend([&lin.weight, &lin.bias]);
        }
        out
    }

    /// Mutable view in the same order as [`Self::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embed.weight, &mut self.embed.bias];
        for conv in &mut self.convs {
            match conv {
                ConvParams::Gcn { weight } => out.push(weight),
                ConvParams::Gatv2 { heads, .. } => {
                    for h in heads {
                        out.extend([
                            &mut h.w_score_dst,
                            &mut h.w_score_src,
                            &mut h.w_score_edge,
                            &mut h.attn,
                            &mut h.w_value,
                        ]);
                    }
                }
            }
        }
        for lin in &mut self.head {
            out.extend([&mut lin.weight, &mut lin.bias]);
        }
        out
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    /// Restores `requires_grad` after deserialization (serialization keeps
    /// values only).
    pub fn mark_trainable(&mut self) {
        for t in self.tensors_mut() {
            t.requires_grad = true;
        }
    }

    pub fn zero_grads(&mut self) {
        for t in self.tensors_mut() {
            t.zero_grad();
        }
    }

    /// Releases the grad buffers entirely, leaving pure values (what a
    /// checkpoint stores).
    pub fn drop_grads(&mut self) {
        for t in self.tensors_mut() {
            t.grad = None;
        }
    }

    /// Copies every parameter onto the tape as a leaf, preserving structure.
    pub fn register(&self, tape: &mut Tape) -> ModelIds {
        let reg = |tape: &mut Tape, t: &Tensor| {
            tape.leaf(Tensor {
                shape: t.shape.clone(),
                data: t.data.clone(),
                grad: None,
                requires_grad: t.requires_grad,
            })
        };
        let embed = LinearIds {
            weight: reg(tape, &self.embed.weight),
            bias: reg(tape, &self.embed.bias),
        };
        let convs = self
            .convs
            .iter()
            .map(|conv| match conv {
                ConvParams::Gcn { weight } => ConvIds::Gcn { weight: reg(tape, weight) },
                ConvParams::Gatv2 { heads, concat } => ConvIds::Gatv2 {
                    heads: heads
                        .iter()
                        .map(|h| HeadIds {
                            w_score_dst: reg(tape, &h.w_score_dst),
                            w_score_src: reg(tape, &h.w_score_src),
                            w_score_edge: reg(tape, &h.w_score_edge),
                            attn: reg(tape, &h.attn),
                            w_value: reg(tape, &h.w_value),
                        })
                        .collect(),
                    concat: *concat,
                },
            })
            .collect();
        let head = self
            .head
            .iter()
            .map(|lin| LinearIds { weight: reg(tape, &lin.weight), bias: reg(tape, &lin.bias) })
            .collect();
        ModelIds { embed, convs, head }
    }

    /// Adds the tape's gradients into the persistent grad buffers, pairing
    /// parameters with ids by walk order.
    pub fn accumulate_grads(&mut self, tape: &Tape, ids: &ModelIds) {
        for (param, id) in self.tensors_mut().into_iter().zip(ids.flat()) {
            if let Some(grad) = tape.grad(id) {
                param.accumulate_grad(grad);
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LinearIds {
    pub weight: TensorId,
    pub bias: TensorId,
}

#[derive(Debug, Clone, Copy)]
pub struct HeadIds {
    pub w_score_dst: TensorId,
    pub w_score_src: TensorId,
    pub w_score_edge: TensorId,
    pub attn: TensorId,
    pub w_value: TensorId,
}

#[derive(Debug, Clone)]
pub enum ConvIds {
    Gatv2 { heads: Vec<HeadIds>, concat: bool },
    Gcn { weight: TensorId },
}

/// Tape handles mirroring [`ModelParams`] for one registration.
#[derive(Debug, Clone)]
pub struct ModelIds {
    pub embed: LinearIds,
    pub convs: Vec<ConvIds>,
    pub head: Vec<LinearIds>,
}

impl ModelIds {
    /// Ids flattened in the canonical walk order.
    pub fn flat(&self) -> Vec<TensorId> {
        let mut out = vec![self.embed.weight, self.embed.bias];
        for conv in &self.convs {
            match conv {
                ConvIds::Gcn { weight } => out.push(*weight),
                ConvIds::Gatv2 { heads, .. } => {
                    for h in heads {
                        out.extend([h.w_score_dst, h.w_score_src, h.w_score_edge, h.attn, h.w_value]);
                    }
                }
            }
        }
        for lin in &self.head {
            out.extend([lin.weight, lin.bias]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let cfg = NetworkConfig::default();
        let a = ModelParams::init(&cfg, 4, 4, 11).unwrap();
        let b = ModelParams::init(&cfg, 4, 4, 11).unwrap();
        assert_eq!(a, b);
        let c = ModelParams::init(&cfg, 4, 4, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn walk_order_matches_ids() {
        let cfg = NetworkConfig { conv_layers: 2, conv_dim: 8, heads: 2, ..NetworkConfig::default() };
        let params = ModelParams::init(&cfg, 3, 4, 0).unwrap();
        let mut tape = Tape::new();
        let ids = params.register(&mut tape);
        let flat = ids.flat();
        assert_eq!(flat.len(), params.tensors().len());
        for (t, id) in params.tensors().iter().zip(&flat) {
            assert_eq!(t.data, tape.data(*id));
        }
    }

    #[test]
    fn gcn_has_one_weight_per_layer() {
        let cfg = NetworkConfig { conv: ConvKind::Gcn, conv_layers: 2, ..NetworkConfig::default() };
        let params = ModelParams::init(&cfg, 3, 4, 0).unwrap();
        // embed (2) + 2 conv weights + head 2x(2)
        assert_eq!(params.tensors().len(), 2 + 2 + 4);
    }
}
