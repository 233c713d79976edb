// scratch calibration harness (removed before finalizing)
use dggat_core::model::{ConvKind, NetworkConfig};
use dggat_core::train::*;
use std::time::Instant;

fn run(dataset: &dggat_core::Dataset, kind: ConvKind, order: u8, net: NetworkConfig, batch: usize, epochs: usize, patience: usize, seed: u64) -> f64 {
    let mut cfg = RunConfig {
        target: Some("y".into()),
        optimizer: dggat_core::AdamConfig { lr: 1e-3, ..Default::default() },
        network: net,
        batch_size: batch,
        max_epochs: epochs,
        patience,
        seed: Some(seed),
        split: Some(SplitSource::Sizes([200, 50, 50])),
        ..RunConfig::default()
    };
    cfg.network.conv = kind;
    cfg.dg.max_order = order;
    let (_, report) = train_model(&cfg, dataset).unwrap();
    report.test_rmse
}

fn main() {
    let dataset = gen_synthetic(&SyntheticSpec { n_molecules: 300, atoms_min: 9, atoms_max: 9, seed: 7 });
    let archs = [
        ("64x3h4", NetworkConfig { embed_dim: 64, conv_layers: 3, conv_dim: 64, heads: 4, head_hidden: vec![32], ..Default::default() }),
        ("32x2h4", NetworkConfig { embed_dim: 32, conv_layers: 2, conv_dim: 32, heads: 4, head_hidden: vec![16], ..Default::default() }),
        ("32x3h2", NetworkConfig { embed_dim: 32, conv_layers: 3, conv_dim: 32, heads: 2, head_hidden: vec![16], ..Default::default() }),
    ];
    for (name, net) in archs {
        for batch in [8usize, 16] {
            let t0 = Instant::now();
            let mut gat: Vec<f64> = [1u64, 2, 3].iter().map(|&s| run(&dataset, ConvKind::Gatv2, 3, net.clone(), batch, 400, 80, s)).collect();
            let mut gcn: Vec<f64> = [1u64, 2, 3].iter().map(|&s| run(&dataset, ConvKind::Gcn, 1, net.clone(), batch, 400, 80, s)).collect();
            gat.sort_by(|a, b| a.partial_cmp(b).unwrap());
            gcn.sort_by(|a, b| a.partial_cmp(b).unwrap());
            println!(
                "{name} b={batch}: GAT median={:.3} {:?} | GCN median={:.3} | margin={:.1}% wall={:.0}s",
                gat[1],
                gat.iter().map(|v| (v * 1e3).round() / 1e3).collect::<Vec<_>>(),
                gcn[1],
                100.0 * (1.0 - gat[1] / gcn[1]),
                t0.elapsed().as_secs_f64()
            );
        }
    }
}
