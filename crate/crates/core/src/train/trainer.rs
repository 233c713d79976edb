use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dggr::{build_dg_graph, DGGraph, DggrError};
use crate::model::{forward_network, Checkpoint, ModelError, ModelParams};
use crate::molio::{
    featurize_nodes, fit_scaler, split_dataset, Dataset, MolioError, SplitSpec, TargetScaler,
};
use crate::numerics::{AdamState, NumericsError, Tape, Tensor};

use super::{ConfigPurpose, RunConfig, SplitSource};

/// Errors from the training and evaluation pipeline.
#[derive(Debug)]
pub enum TrainError {
    Config(String),
    Data(MolioError),
    Graph(DggrError),
    Model(ModelError),
    Numerics(NumericsError),
    /// The loss left the finite range; carries the 1-based epoch.
    Diverged { epoch: usize },
    VocabMismatch { missing: Vec<u32> },
    Io(std::io::Error),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Config(msg) => write!(f, "config: {msg}"),
            TrainError::Data(e) => write!(f, "data: {e}"),
            TrainError::Graph(e) => write!(f, "graph: {e}"),
            TrainError::Model(e) => write!(f, "model: {e}"),
            TrainError::Numerics(e) => write!(f, "numerics: {e}"),
            TrainError::Diverged { epoch } => {
                write!(f, "training diverged: non-finite loss at epoch {epoch}")
            }
            TrainError::VocabMismatch { missing } => {
                write!(f, "dataset contains elements outside the checkpoint vocabulary: {missing:?}")
            }
            TrainError::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl std::error::Error for TrainError {}

impl From<MolioError> for TrainError {
    fn from(e: MolioError) -> Self {
        TrainError::Data(e)
    }
}
impl From<DggrError> for TrainError {
    fn from(e: DggrError) -> Self {
        TrainError::Graph(e)
    }
}
impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        TrainError::Model(e)
    }
}
impl From<NumericsError> for TrainError {
    fn from(e: NumericsError) -> Self {
        TrainError::Numerics(e)
    }
}
impl From<std::io::Error> for TrainError {
    fn from(e: std::io::Error) -> Self {
        TrainError::Io(e)
    }
}

/// Train/validation RMSE of one epoch, in original target units. The train
/// figure is the running batch average of that epoch; validation is a full
/// pass at epoch end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_rmse: f64,
    pub val_rmse: f64,
}

/// The metrics artifact of one run. Serialization is fully determined by
/// `(config, seed)`; wall time is kept out of it so reports from identical
/// runs stay byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    /// Test RMSE of the best-validation checkpoint, in original units,
    /// computed exactly once.
    pub test_rmse: f64,
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Resolves the configured split: cut by sizes and seed, or load the
/// explicit JSON file. Validates against the dataset either way.
pub fn resolve_split(cfg: &RunConfig, dataset: &Dataset) -> Result<SplitSpec, TrainError> {
    let split = match cfg.split.as_ref() {
        Some(SplitSource::Sizes([train, test, val])) => {
            split_dataset(dataset, (*train, *test, *val), cfg.seed_value())?
        }
        Some(SplitSource::File(path)) => {
            let text = std::fs::read_to_string(path)?;
            let split: SplitSpec = serde_json::from_str(&text)
                .map_err(|e| TrainError::Config(format!("split file {path}: {e}")))?;
            split
        }
        None => return Err(TrainError::Config("split: missing".into())),
    };
    split.validate(dataset.len())?;
    Ok(split)
}

struct Prepared {
    graphs: Vec<DGGraph>,
    raw_targets: Vec<f64>,
}

fn prepare_graphs(
    dataset: &Dataset,
    vocab: &[u32],
    cfg: &RunConfig,
    target: &str,
) -> Result<Prepared, TrainError> {
    let mut graphs = Vec::with_capacity(dataset.len());
    let mut raw_targets = Vec::with_capacity(dataset.len());
    for m in &dataset.molecules {
        let features = featurize_nodes(m, vocab)?;
        graphs.push(build_dg_graph(m, features, &cfg.dg)?);
        raw_targets.push(m.targets[target]);
    }
    Ok(Prepared { graphs, raw_targets })
}

/// RMSE in original units over the given indices, forwarding each graph
/// through the network and inverting the scaler.
fn rmse_over(
    params: &ModelParams,
    cfg: &RunConfig,
    prepared: &Prepared,
    indices: &[usize],
    scaler: &TargetScaler,
) -> Result<f64, TrainError> {
    let mut tape = Tape::new();
    let ids = params.register(&mut tape);
    let mut sse = 0.0;
    for &idx in indices {
        let pred = forward_network(&mut tape, &prepared.graphs[idx], &cfg.network, &ids)?;
        let y_hat = scaler.inverse(tape.scalar_value(pred));
        let residual = y_hat - prepared.raw_targets[idx];
        sse += residual * residual;
    }
    Ok((sse / indices.len() as f64).sqrt())
}

/// Trains per the config: Adam on the mean squared error of standardized
/// targets, molecules batched by list, early stopping on validation RMSE,
/// best checkpoint restored, test RMSE computed once at the end. Everything
/// is pinned by `(config, seed)`.
pub fn train_model(cfg: &RunConfig, dataset: &Dataset) -> Result<(Checkpoint, RunReport), TrainError> {
    let started = Instant::now();
    if let Err(violations) = cfg.validate(ConfigPurpose::Train) {
        // the dataset arrives as an argument here; where it came from
        // (dataset/target sections) is checked by the caller
        let hard: Vec<String> = violations
            .into_iter()
            .filter(|v| !(v.starts_with("dataset") || v.starts_with("target")))
            .collect();
        if !hard.is_empty() {
            return Err(TrainError::Config(hard.join("; ")));
        }
    }
    let target = cfg.target_name().to_string();
    if !dataset.has_target(&target) {
        return Err(TrainError::Config(format!("target '{target}' not present in dataset")));
    }

    let split = resolve_split(cfg, dataset)?;
    let scaler = fit_scaler(dataset, &split.train, &target)?;
    let prepared = prepare_graphs(dataset, &dataset.element_vocab, cfg, &target)?;

    let mut params = ModelParams::init(
        &cfg.network,
        dataset.element_vocab.len(),
        cfg.dg.edge_feature_width(),
        cfg.seed_value(),
    )?;
    let mut adam = AdamState::new(cfg.optimizer);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed_value() ^ 0x9E37_79B9_7F4A_7C15);

    let mut epochs = Vec::with_capacity(cfg.max_epochs);
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_params = params.clone();
    let mut stale = 0usize;
    let mut tape = Tape::new();

    for epoch in 1..=cfg.max_epochs {
        let mut order = split.train.clone();
        order.shuffle(&mut shuffle_rng);

        let mut train_sse = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            tape.reset();
            let ids = params.register(&mut tape);
            let mut preds = Vec::with_capacity(batch.len());
            let mut targets = Vec::with_capacity(batch.len());
            for &idx in batch {
                preds.push(forward_network(&mut tape, &prepared.graphs[idx], &cfg.network, &ids)?);
                targets.push(scaler.transform(prepared.raw_targets[idx]));
            }
            let pred_vec = tape.stack_scalars(&preds)?;
            let target_vec = tape.leaf(Tensor::vector(targets));
            let loss = tape.mse_loss(pred_vec, target_vec)?;
            let loss_value = tape.scalar_value(loss);
            if !loss_value.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            train_sse += loss_value * batch.len() as f64;

            tape.backward(loss)?;
            params.accumulate_grads(&tape, &ids);
            adam.step(&mut params.tensors_mut())?;
            params.zero_grads();
        }

        let train_rmse = (train_sse / split.train.len() as f64).sqrt() * scaler.std;
        let val_rmse = rmse_over(&params, cfg, &prepared, &split.validation, &scaler)?;
        epochs.push(EpochStats { epoch, train_rmse, val_rmse });

        if val_rmse < best_val {
            best_val = val_rmse;
            best_epoch = epoch;
            best_params = params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let test_rmse = rmse_over(&best_params, cfg, &prepared, &split.test, &scaler)?;
    best_params.drop_grads();
    let checkpoint = Checkpoint {
        network: cfg.network.clone(),
        dg: cfg.dg,
        target,
        element_vocab: dataset.element_vocab.clone(),
        scaler,
        params: best_params,
    };
    let report = RunReport {
        config: cfg.clone(),
        epochs,
        best_epoch,
        test_rmse,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok((checkpoint, report))
}

/// RMSE of a trained checkpoint over the given indices, in original target
/// units. The dataset may only contain elements the checkpoint was trained
/// on.
pub fn evaluate(
    checkpoint: &Checkpoint,
    dataset: &Dataset,
    indices: &[usize],
) -> Result<f64, TrainError> {
    if indices.is_empty() {
        return Err(TrainError::Config("cannot evaluate on an empty index list".into()));
    }
    let missing: Vec<u32> = dataset
        .element_vocab
        .iter()
        .copied()
        .filter(|z| !checkpoint.element_vocab.contains(z))
        .collect();
    if !missing.is_empty() {
        return Err(TrainError::VocabMismatch { missing });
    }
    if !dataset.has_target(&checkpoint.target) {
        return Err(TrainError::Config(format!(
            "target '{}' not present in dataset",
            checkpoint.target
        )));
    }

    let mut tape = Tape::new();
    let ids = checkpoint.params.register(&mut tape);
    let mut sse = 0.0;
    for &idx in indices {
        let m = &dataset.molecules[idx];
        let features = featurize_nodes(m, &checkpoint.element_vocab)?;
        let graph = build_dg_graph(m, features, &checkpoint.dg)?;
        let pred = forward_network(&mut tape, &graph, &checkpoint.network, &ids)?;
        let y_hat = checkpoint.scaler.inverse(tape.scalar_value(pred));
        let residual = y_hat - m.targets[&checkpoint.target];
        sse += residual * residual;
    }
    Ok((sse / indices.len() as f64).sqrt())
}
