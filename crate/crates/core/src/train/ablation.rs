use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::ConvKind;
use crate::molio::Dataset;

use super::{train_model, RunConfig, TrainError};

/// One model row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub model: String,
    pub max_order: u8,
    pub rmse_by_seed: Vec<f64>,
    pub median_rmse: f64,
}

/// GCN baseline plus the three neighbor-order variants of the attention
/// model, trained under one protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite RMSE"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Trains every `(model, seed)` cell — GCN, then the attention model at
/// neighbor orders 1, 2, 3 — with seeds `seed, seed+1, ...`, and reports the
/// per-cell median test RMSE. Cells are independent and run in parallel;
/// the table order is fixed regardless of scheduling.
pub fn run_ablation(cfg: &RunConfig, dataset: &Dataset) -> Result<AblationTable, TrainError> {
    let cells: [(&str, ConvKind, u8); 4] = [
        ("GCN", ConvKind::Gcn, 1),
        ("DG-GAT (1st Nbrs)", ConvKind::Gatv2, 1),
        ("DG-GAT (2nd Nbrs)", ConvKind::Gatv2, 2),
        ("DG-GAT (3rd Nbrs)", ConvKind::Gatv2, 3),
    ];
    let base_seed = cfg.seed_value();

    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|cell| (0..cfg.seeds as u64).map(move |s| (cell, s)))
        .collect();
    let rmses: Vec<f64> = jobs
        .par_iter()
        .map(|&(cell, seed_offset)| {
            let (_, kind, max_order) = cells[cell];
            let mut cell_cfg = cfg.clone();
            cell_cfg.network.conv = kind;
            cell_cfg.dg.max_order = max_order;
            cell_cfg.seed = Some(base_seed + seed_offset);
            let (_, report) = train_model(&cell_cfg, dataset)?;
            Ok(report.test_rmse)
        })
        .collect::<Result<_, TrainError>>()?;

    let rows = cells
        .iter()
        .enumerate()
        .map(|(idx, (label, _, max_order))| {
            let rmse_by_seed = rmses[idx * cfg.seeds..(idx + 1) * cfg.seeds].to_vec();
            AblationRow {
                model: (*label).to_string(),
                max_order: *max_order,
                median_rmse: median(&rmse_by_seed),
                rmse_by_seed,
            }
        })
        .collect();
    Ok(AblationTable { rows })
}

impl AblationTable {
    /// Aligned plain-text rendering of the comparison rows.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let width = self
            .rows
            .iter()
            .map(|r| r.model.len())
            .max()
            .unwrap_or(5)
            .max("Model".len())
            + 2;
        out.push_str(&format!("{:<width$}{:<7}{}\n", "Model", "Order", "RMSE"));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<width$}{:<7}{:.6}\n",
                row.model, row.max_order, row.median_rmse
            ));
        }
        out
    }

    pub fn row(&self, model: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.model == model)
    }
}
