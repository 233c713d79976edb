use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::numerics::Tensor;

use super::MolioError;

/// One atom: atomic number plus Cartesian position in angstrom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub z: u32,
    pub pos: [f64; 3],
}

/// Covalent bond between two atom indices; serialized as `[i, j, order]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(usize, usize, u8)", into = "(usize, usize, u8)")]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub order: u8,
}

impl From<(usize, usize, u8)> for Bond {
    fn from((i, j, order): (usize, usize, u8)) -> Self {
        Bond { i, j, order }
    }
}

impl From<Bond> for (usize, usize, u8) {
    fn from(b: Bond) -> Self {
        (b.i, b.j, b.order)
    }
}

/// A 3D molecule: atoms with positions, a bond list, and named regression
/// targets. Field order matches the JSONL schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Molecule {
    pub id: String,
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    pub targets: BTreeMap<String, f64>,
}

impl Molecule {
    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    /// Bond list as index pairs, for graph construction.
    pub fn bond_pairs(&self) -> Vec<(usize, usize)> {
        self.bonds.iter().map(|b| (b.i, b.j)).collect()
    }

    /// Structural invariants: at least one atom, finite coordinates, valid
    /// atomic numbers and bond orders, in-range non-self non-duplicate bonds.
    pub fn validate(&self) -> Result<(), String> {
        if self.atoms.is_empty() {
            return Err("molecule has no atoms".into());
        }
        for (idx, atom) in self.atoms.iter().enumerate() {
            if atom.z < 1 {
                return Err(format!("atom {idx} has atomic number 0"));
            }
            if atom.pos.iter().any(|v| !v.is_finite()) {
                return Err(format!("atom {idx} has non-finite position"));
            }
        }
        let n = self.atoms.len();
        let mut seen = BTreeSet::new();
        for (idx, bond) in self.bonds.iter().enumerate() {
            if bond.i >= n || bond.j >= n {
                return Err(format!(
                    "bond {idx} index ({}, {}) out of range for {n} atoms",
                    bond.i, bond.j
                ));
            }
            if bond.i == bond.j {
                return Err(format!("bond {idx} connects atom {} to itself", bond.i));
            }
            if !(1..=4).contains(&bond.order) {
                return Err(format!("bond {idx} has order {}, expected 1..=4", bond.order));
            }
            let key = (bond.i.min(bond.j), bond.i.max(bond.j));
            if !seen.insert(key) {
                return Err(format!("duplicate bond between atoms {} and {}", key.0, key.1));
            }
        }
        Ok(())
    }
}

/// One-hot node feature matrix `[n_atoms x vocab_len]`: row `i` marks atom
/// `i`'s position in the element vocabulary.
pub fn featurize_nodes(molecule: &Molecule, vocab: &[u32]) -> Result<Tensor, MolioError> {
    let width = vocab.len();
    let mut data = vec![0.0; molecule.n_atoms() * width];
    for (row, atom) in molecule.atoms.iter().enumerate() {
        let col = vocab
            .iter()
            .position(|&z| z == atom.z)
            .ok_or(MolioError::Featurize { atomic_number: atom.z })?;
        data[row * width + col] = 1.0;
    }
    Ok(Tensor::matrix(molecule.n_atoms(), width, data))
}
