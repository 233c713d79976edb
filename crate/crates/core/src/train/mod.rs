//! Training loop, evaluation, the ablation runner, and the synthetic
//! geometry-sensitive benchmark generator.

mod ablation;
mod config;
mod synthetic;
mod trainer;

pub use ablation::{run_ablation, AblationRow, AblationTable};
pub use config::{ConfigPurpose, DataFormat, DataSource, RunConfig, SplitSource};
pub use synthetic::{gen_synthetic, synthetic_target, SyntheticSpec, SYNTHETIC_CUTOFF};
pub use trainer::{evaluate, resolve_split, train_model, EpochStats, RunReport, TrainError};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConvKind, ModelParams, NetworkConfig};
    use crate::molio::TargetScaler;
    use crate::{Checkpoint, DGConfig};

    fn quick_config(n: usize) -> (RunConfig, crate::molio::Dataset) {
        let dataset = gen_synthetic(&SyntheticSpec {
            n_molecules: n,
            atoms_min: 4,
            atoms_max: 7,
            seed: 3,
        });
        let cfg = RunConfig {
            target: Some("y".into()),
            network: NetworkConfig {
                embed_dim: 8,
                conv_layers: 2,
                conv_dim: 8,
                heads: 2,
                head_hidden: vec![4],
                ..NetworkConfig::default()
            },
            batch_size: 8,
            max_epochs: 6,
            patience: 30,
            seed: Some(11),
            split: Some(SplitSource::Sizes([n - 8, 4, 4])),
            ..RunConfig::default()
        };
        (cfg, dataset)
    }

    #[test]
    fn same_seed_gives_byte_identical_reports_and_checkpoints() {
        let (cfg, dataset) = quick_config(24);
        let (ck_a, rep_a) = train_model(&cfg, &dataset).unwrap();
        let (ck_b, rep_b) = train_model(&cfg, &dataset).unwrap();
        assert_eq!(
            serde_json::to_string(&rep_a).unwrap(),
            serde_json::to_string(&rep_b).unwrap()
        );
        assert_eq!(ck_a.to_json(), ck_b.to_json());
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let (mut cfg, dataset) = quick_config(24);
        cfg.optimizer.lr = 0.0;
        cfg.max_epochs = 4;
        let initial = ModelParams::init(
            &cfg.network,
            dataset.element_vocab.len(),
            cfg.dg.edge_feature_width(),
            cfg.seed_value(),
        )
        .unwrap();
        let (checkpoint, report) = train_model(&cfg, &dataset).unwrap();
        assert_eq!(checkpoint.params, initial);
        let first = &report.epochs[0];
        for e in &report.epochs {
            assert_eq!(e.train_rmse, first.train_rmse);
            assert_eq!(e.val_rmse, first.val_rmse);
        }
    }

    #[test]
    fn training_reduces_training_error() {
        let (mut cfg, dataset) = quick_config(24);
        cfg.max_epochs = 40;
        let (_, report) = train_model(&cfg, &dataset).unwrap();
        let first = report.epochs.first().unwrap().train_rmse;
        let last = report.epochs.last().unwrap().train_rmse;
        assert!(last < 0.8 * first, "train RMSE {first} -> {last} did not fall");
    }

    #[test]
    fn best_epoch_has_minimal_validation_rmse() {
        let (mut cfg, dataset) = quick_config(24);
        cfg.max_epochs = 15;
        cfg.patience = 3;
        let (_, report) = train_model(&cfg, &dataset).unwrap();
        let best = report
            .epochs
            .iter()
            .find(|e| e.epoch == report.best_epoch)
            .unwrap()
            .val_rmse;
        for e in &report.epochs {
            assert!(best <= e.val_rmse);
        }
        assert!(report.epochs.len() <= cfg.max_epochs);
    }

    #[test]
    fn huge_learning_rate_diverges_with_epoch_number() {
        let (mut cfg, dataset) = quick_config(24);
        cfg.optimizer.lr = 1e160;
        cfg.max_epochs = 10;
        match train_model(&cfg, &dataset) {
            Err(TrainError::Diverged { epoch }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    fn constant_checkpoint(vocab: Vec<u32>, scaler: TargetScaler) -> Checkpoint {
        let network = NetworkConfig {
            embed_dim: 4,
            conv_layers: 1,
            conv_dim: 4,
            heads: 1,
            head_hidden: vec![],
            ..NetworkConfig::default()
        };
        let mut params = ModelParams::init(&network, vocab.len(), 4, 0).unwrap();
        for t in params.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        Checkpoint {
            network,
            dg: DGConfig::default(),
            target: "y".into(),
            element_vocab: vocab,
            scaler,
            params,
        }
    }

    #[test]
    fn constant_predictor_at_mean_scores_population_std() {
        let dataset = gen_synthetic(&SyntheticSpec {
            n_molecules: 12,
            atoms_min: 4,
            atoms_max: 6,
            seed: 21,
        });
        let indices: Vec<usize> = (0..dataset.len()).collect();
        let ys: Vec<f64> = indices.iter().map(|&i| dataset.target(i, "y")).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let std = (ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / ys.len() as f64).sqrt();

        let checkpoint = constant_checkpoint(dataset.element_vocab.clone(), TargetScaler { mean, std: 1.0 });
        let rmse = evaluate(&checkpoint, &dataset, &indices).unwrap();
        assert!((rmse - std).abs() < 1e-12);
    }

    #[test]
    fn perfect_constant_predictor_scores_zero() {
        let mut dataset = gen_synthetic(&SyntheticSpec {
            n_molecules: 5,
            atoms_min: 4,
            atoms_max: 6,
            seed: 2,
        });
        for m in &mut dataset.molecules {
            m.targets.insert("y".into(), 1.75);
        }
        let checkpoint =
            constant_checkpoint(dataset.element_vocab.clone(), TargetScaler { mean: 1.75, std: 1.0 });
        let rmse = evaluate(&checkpoint, &dataset, &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(rmse, 0.0);
    }

    #[test]
    fn rmse_matches_hand_arithmetic() {
        // constant predictor 2.0 against targets 1, 2, 4
        let mut dataset = gen_synthetic(&SyntheticSpec {
            n_molecules: 3,
            atoms_min: 4,
            atoms_max: 5,
            seed: 6,
        });
        for (m, y) in dataset.molecules.iter_mut().zip([1.0, 2.0, 4.0]) {
            m.targets.insert("y".into(), y);
        }
        let checkpoint =
            constant_checkpoint(dataset.element_vocab.clone(), TargetScaler { mean: 2.0, std: 1.0 });
        let rmse = evaluate(&checkpoint, &dataset, &[0, 1, 2]).unwrap();
        let expected = ((1.0 + 0.0 + 4.0) / 3.0f64).sqrt();
        assert!((rmse - expected).abs() < 1e-15);
    }

    #[test]
    fn evaluation_rejects_unknown_elements() {
        let dataset = gen_synthetic(&SyntheticSpec {
            n_molecules: 5,
            atoms_min: 4,
            atoms_max: 6,
            seed: 13,
        });
        let checkpoint = constant_checkpoint(vec![6], TargetScaler { mean: 0.0, std: 1.0 });
        match evaluate(&checkpoint, &dataset, &[0]) {
            Err(TrainError::VocabMismatch { missing }) => assert!(!missing.is_empty()),
            other => panic!("expected vocab mismatch, got {other:?}"),
        }
    }

    #[test]
    fn rmse_scales_linearly_with_target_units() {
        let dataset = gen_synthetic(&SyntheticSpec {
            n_molecules: 10,
            atoms_min: 4,
            atoms_max: 7,
            seed: 31,
        });
        let indices: Vec<usize> = (0..10).collect();
        let scaler = TargetScaler { mean: 0.4, std: 2.3 };
        let mut checkpoint = constant_checkpoint(dataset.element_vocab.clone(), scaler);
        // a non-constant frozen model: random params
        checkpoint.params =
            ModelParams::init(&checkpoint.network, dataset.element_vocab.len(), 4, 50).unwrap();
        let base = evaluate(&checkpoint, &dataset, &indices).unwrap();

        let k = 3.5;
        let mut scaled = dataset.clone();
        for m in &mut scaled.molecules {
            let y = m.targets["y"];
            m.targets.insert("y".into(), k * y);
        }
        checkpoint.scaler = TargetScaler { mean: k * 0.4, std: k * 2.3 };
        let scaled_rmse = evaluate(&checkpoint, &scaled, &indices).unwrap();
        assert!((scaled_rmse - k * base).abs() / (k * base) < 1e-12);
    }

    #[test]
    fn split_file_roundtrip() {
        let dataset = gen_synthetic(&SyntheticSpec {
            n_molecules: 10,
            atoms_min: 4,
            atoms_max: 6,
            seed: 77,
        });
        let split = crate::molio::SplitSpec {
            train: vec![0, 1, 2, 3, 4, 5],
            test: vec![6, 7],
            validation: vec![8, 9],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.json");
        std::fs::write(&path, serde_json::to_string(&split).unwrap()).unwrap();

        let cfg = RunConfig {
            split: Some(SplitSource::File(path.to_string_lossy().into_owned())),
            seed: Some(0),
            ..RunConfig::default()
        };
        let resolved = resolve_split(&cfg, &dataset).unwrap();
        assert_eq!(resolved, split);
    }

    #[test]
    fn ablation_emits_four_rows_in_order() {
        let (mut cfg, dataset) = quick_config(20);
        cfg.max_epochs = 2;
        cfg.seeds = 2;
        let table = run_ablation(&cfg, &dataset).unwrap();
        let labels: Vec<&str> = table.rows.iter().map(|r| r.model.as_str()).collect();
        assert_eq!(
            labels,
            vec!["GCN", "DG-GAT (1st Nbrs)", "DG-GAT (2nd Nbrs)", "DG-GAT (3rd Nbrs)"]
        );
        assert_eq!(table.rows[0].max_order, 1);
        assert_eq!(table.rows[3].max_order, 3);
        for row in &table.rows {
            assert_eq!(row.rmse_by_seed.len(), 2);
            assert!(row.median_rmse.is_finite());
        }
        // GCN row must not depend on the conv kind of the base config
        let mut gcn_base = cfg.clone();
        gcn_base.network.conv = ConvKind::Gcn;
        let table2 = run_ablation(&gcn_base, &dataset).unwrap();
        assert_eq!(table.rows[0], table2.rows[0]);
    }
}
