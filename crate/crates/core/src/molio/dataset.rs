use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Molecule, MolioError};

/// An ordered collection of molecules sharing a target vocabulary and an
/// element vocabulary covering every atom.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub molecules: Vec<Molecule>,
    pub target_names: Vec<String>,
    pub element_vocab: Vec<u32>,
}

impl Dataset {
    /// Builds a dataset, requiring every molecule to carry the same target
    /// names. The element vocabulary is the sorted set of atomic numbers
    /// seen anywhere in the input.
    pub fn from_molecules(molecules: Vec<Molecule>) -> Result<Self, MolioError> {
        if molecules.is_empty() {
            return Err(MolioError::NoRecords);
        }
        for (idx, m) in molecules.iter().enumerate() {
            m.validate()
                .map_err(|msg| MolioError::Contract(format!("record {}: {msg}", idx + 1)))?;
        }
        let target_names: Vec<String> = molecules[0].targets.keys().cloned().collect();
        for (idx, m) in molecules.iter().enumerate().skip(1) {
            let names: Vec<&String> = m.targets.keys().collect();
            if names.len() != target_names.len()
                || names.iter().zip(&target_names).any(|(a, b)| *a != b)
            {
                return Err(MolioError::Contract(format!(
                    "record {}: targets {:?} differ from record 1 targets {:?}",
                    idx + 1,
                    names,
                    target_names
                )));
            }
        }
        let element_vocab: Vec<u32> = molecules
            .iter()
            .flat_map(|m| m.atoms.iter().map(|a| a.z))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Ok(Dataset { molecules, target_names, element_vocab })
    }

    pub fn len(&self) -> usize {
        self.molecules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.molecules.is_empty()
    }

    pub fn has_target(&self, name: &str) -> bool {
        self.target_names.iter().any(|t| t == name)
    }

    /// Target value of molecule `idx`; the name must exist (dataset invariant).
    pub fn target(&self, idx: usize, name: &str) -> f64 {
        self.molecules[idx].targets[name]
    }
}

/// Disjoint train/test/validation index lists into a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub validation: Vec<usize>,
}

impl SplitSpec {
    /// Checks disjointness, bounds, and nonemptiness against a dataset size.
    pub fn validate(&self, dataset_len: usize) -> Result<(), MolioError> {
        let parts: [(&str, &[usize]); 3] = [
            ("train", &self.train),
            ("test", &self.test),
            ("validation", &self.validation),
        ];
        let mut seen = BTreeSet::new();
        for (name, indices) in parts {
            if indices.is_empty() {
                return Err(MolioError::Contract(format!("{name} split is empty")));
            }
            for &idx in indices {
                if idx >= dataset_len {
                    return Err(MolioError::Contract(format!(
                        "{name} split index {idx} out of range for {dataset_len} records"
                    )));
                }
                if !seen.insert(idx) {
                    return Err(MolioError::Contract(format!(
                        "index {idx} appears in more than one split"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Shuffles `0..len` deterministically by seed and cuts train/test/validation
/// partitions of the requested sizes, in that order.
pub fn split_dataset(
    dataset: &Dataset,
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<SplitSpec, MolioError> {
    let (n_train, n_test, n_val) = sizes;
    let total = n_train + n_test + n_val;
    if total > dataset.len() {
        return Err(MolioError::Contract(format!(
            "split sizes {n_train}+{n_test}+{n_val} exceed dataset size {}",
            dataset.len()
        )));
    }
    if n_train == 0 || n_test == 0 || n_val == 0 {
        return Err(MolioError::Contract("every split must be nonempty".into()));
    }
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let train = indices[..n_train].to_vec();
    let test = indices[n_train..n_train + n_test].to_vec();
    let validation = indices[n_train + n_test..total].to_vec();
    Ok(SplitSpec { train, test, validation })
}

/// Mean/std standardization for one target, fitted on training data only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: f64,
    pub std: f64,
}

impl TargetScaler {
    pub fn transform(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn inverse(&self, y: f64) -> f64 {
        y * self.std + self.mean
    }
}

/// Fits a scaler from the training indices only, using the population
/// (biased) standard deviation. A near-constant target is an error.
pub fn fit_scaler(
    dataset: &Dataset,
    train_indices: &[usize],
    target: &str,
) -> Result<TargetScaler, MolioError> {
    if train_indices.is_empty() {
        return Err(MolioError::Contract("cannot fit scaler on an empty split".into()));
    }
    if !dataset.has_target(target) {
        return Err(MolioError::Contract(format!("unknown target '{target}'")));
    }
    let values: Vec<f64> = train_indices.iter().map(|&i| dataset.target(i, target)).collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        return Err(MolioError::Contract(format!(
            "target '{target}' is constant on the training split (std {std:e})"
        )));
    }
    Ok(TargetScaler { mean, std })
}
