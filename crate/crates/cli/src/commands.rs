use std::path::Path;

use dggat_core::dggr::{build_dg_graph, DGConfig};
use dggat_core::molio::{featurize_nodes, parse_jsonl, parse_sdf_v2000, write_jsonl, Dataset};
use dggat_core::train::{
    evaluate, gen_synthetic, resolve_split, run_ablation, train_model, ConfigPurpose, DataFormat,
    RunConfig, TrainError,
};
use dggat_core::Checkpoint;

use crate::{CliError, FormatArg};

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn load_dataset(path: &Path, format: DataFormat) -> Result<Dataset, CliError> {
    let text = read_file(path)?;
    let dataset = match format {
        DataFormat::Jsonl => parse_jsonl(&text),
        DataFormat::Sdf => parse_sdf_v2000(&text).and_then(Dataset::from_molecules),
    };
    dataset.map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn load_config(path: &Path, purpose: ConfigPurpose) -> Result<RunConfig, CliError> {
    let text = read_file(path)?;
    let cfg = RunConfig::parse(&text)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    cfg.validate(purpose).map_err(|violations| {
        CliError::input(format!(
            "{}: invalid config:\n  {}",
            path.display(),
            violations.join("\n  ")
        ))
    })?;
    Ok(cfg)
}

fn configured_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let source = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| CliError::input("config has no dataset section"))?;
    load_dataset(Path::new(&source.path), source.format)
}

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::Diverged { .. } | TrainError::Numerics(_) | TrainError::Model(_) => {
            CliError::numeric(e.to_string())
        }
        other => CliError::input(other.to_string()),
    }
}

pub fn prepare(input: &Path, format: FormatArg, out: &Path) -> Result<(), CliError> {
    let format = match format {
        FormatArg::Jsonl => DataFormat::Jsonl,
        FormatArg::Sdf => DataFormat::Sdf,
    };
    let dataset = load_dataset(input, format)?;
    std::fs::write(out, write_jsonl(&dataset))
        .map_err(|e| CliError::input(format!("{}: {e}", out.display())))?;
    println!("{} molecules", dataset.len());
    let elements: Vec<String> = dataset.element_vocab.iter().map(u32::to_string).collect();
    println!("elements: {}", elements.join(" "));
    Ok(())
}

pub fn inspect(input: &Path, id: &str, max_order: u8, cutoff: f64) -> Result<(), CliError> {
    let dataset = load_dataset(input, DataFormat::Jsonl)?;
    let molecule = dataset
        .molecules
        .iter()
        .find(|m| m.id == id)
        .ok_or_else(|| CliError::input(format!("unknown molecule id '{id}'")))?;

    let dg = DGConfig { max_order, d_cutoff: cutoff, ..DGConfig::default() };
    let features = featurize_nodes(molecule, &dataset.element_vocab)
        .map_err(|e| CliError::input(e.to_string()))?;
    let graph = build_dg_graph(molecule, features, &dg)
        .map_err(|e| CliError::input(e.to_string()))?;

    for edge in &graph.edges {
        println!("{}", serde_json::to_string(edge).expect("edge serialization"));
    }
    let (o1, o2, o3) = graph.pair_counts();
    println!("pairs: order1={o1} order2={o2} order3={o3}");
    Ok(())
}

pub fn train(config: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(config, ConfigPurpose::Train)?;
    let dataset = configured_dataset(&cfg)?;
    let (checkpoint, report) = train_model(&cfg, &dataset).map_err(train_error)?;

    std::fs::create_dir_all(out)
        .map_err(|e| CliError::input(format!("{}: {e}", out.display())))?;
    let checkpoint_path = out.join("checkpoint.json");
    let report_path = out.join("report.json");
    std::fs::write(&checkpoint_path, checkpoint.to_json())
        .map_err(|e| CliError::input(format!("{}: {e}", checkpoint_path.display())))?;
    let report_json = serde_json::to_string_pretty(&report).expect("report serialization");
    std::fs::write(&report_path, report_json)
        .map_err(|e| CliError::input(format!("{}: {e}", report_path.display())))?;

    eprintln!(
        "trained {} epochs (best {}) in {:.1}s",
        report.epochs.len(),
        report.best_epoch,
        report.wall_time_s
    );
    println!("test_rmse {:.12}", report.test_rmse);
    println!("checkpoint {}", checkpoint_path.display());
    println!("report {}", report_path.display());
    Ok(())
}

pub fn eval(config: &Path) -> Result<(), CliError> {
    let cfg = load_config(config, ConfigPurpose::Eval)?;
    let checkpoint_path = cfg.checkpoint.as_deref().expect("validated");
    let checkpoint = Checkpoint::from_json(&read_file(Path::new(checkpoint_path))?)
        .map_err(|e| CliError::input(format!("{checkpoint_path}: {e}")))?;
    let dataset = configured_dataset(&cfg)?;
    let split = resolve_split(&cfg, &dataset).map_err(train_error)?;
    let rmse = evaluate(&checkpoint, &dataset, &split.test).map_err(train_error)?;
    println!("rmse {rmse:.12}");
    Ok(())
}

fn emit_table(cfg: &RunConfig, dataset: &Dataset, out: Option<&Path>) -> Result<(), CliError> {
    let table = run_ablation(cfg, dataset).map_err(train_error)?;
    print!("{}", table.to_text());
    if let Some(path) = out {
        let json = serde_json::to_string_pretty(&table).expect("table serialization");
        std::fs::write(path, json)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        eprintln!("table written to {}", path.display());
    }
    Ok(())
}

pub fn bench(config: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = load_config(config, ConfigPurpose::Bench)?;
    let spec = cfg.synthetic.as_ref().expect("validated");
    let dataset = gen_synthetic(spec);
    eprintln!("generated {} molecules (seed {})", dataset.len(), spec.seed);
    emit_table(&cfg, &dataset, out)
}

pub fn ablate(config: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = load_config(config, ConfigPurpose::Ablate)?;
    let dataset = configured_dataset(&cfg)?;
    emit_table(&cfg, &dataset, out)
}
