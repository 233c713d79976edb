//! Distance-geometric graph attention for molecular property regression.
//!
//! The pipeline runs from 3D molecular ingestion ([`molio`]), through
//! distance-geometric graph construction with 1st/2nd/3rd-order neighbor
//! edges ([`dggr`]), to attention-based message passing and a 2D GCN
//! baseline ([`model`]) trained with Adam on a reverse-mode tape
//! ([`numerics`], [`train`]).

pub mod dggr;
pub mod model;
pub mod molio;
pub mod numerics;
pub mod train;

pub use dggr::{DGConfig, DGEdge, DGGraph, DggrError};
pub use model::{Checkpoint, ConvKind, ModelError, ModelParams, NetworkConfig};
pub use molio::{Dataset, Molecule, MolioError, SplitSpec, TargetScaler};
pub use train::{RunConfig, RunReport, SyntheticSpec, TrainError};
pub use numerics::{AdamConfig, AdamState, NumericsError, Tape, Tensor, TensorId};
