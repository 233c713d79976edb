use serde::{Deserialize, Serialize};

use crate::dggr::DGConfig;
use crate::model::NetworkConfig;
use crate::numerics::AdamConfig;

use super::SyntheticSpec;

/// Where the molecules come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSource {
    pub path: String,
    pub format: DataFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Jsonl,
    Sdf,
}

/// Either sizes to cut deterministically by seed, or a JSON file holding an
/// explicit [`crate::molio::SplitSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSource {
    /// `[train, test, validation]` sizes.
    Sizes([usize; 3]),
    File(String),
}

fn default_batch_size() -> usize {
    32
}
fn default_max_epochs() -> usize {
    300
}
fn default_patience() -> usize {
    30
}
fn default_seeds() -> usize {
    3
}

/// Full experiment configuration. Optional sections select the command they
/// serve: `dataset` feeds train/eval/ablate, `synthetic` feeds bench,
/// `checkpoint` feeds eval. Everything that steers a run is here, so one
/// `(config, seed)` pair pins the whole outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub dataset: Option<DataSource>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default)]
    pub dg: DGConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub optimizer: AdamConfig,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Seeds per ablation/bench cell; medians are reported.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub split: Option<SplitSource>,
    #[serde(default)]
    pub checkpoint: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            synthetic: None,
            target: None,
            dg: DGConfig::default(),
            network: NetworkConfig::default(),
            optimizer: AdamConfig::default(),
            batch_size: default_batch_size(),
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            seed: None,
            seeds: default_seeds(),
            split: None,
            checkpoint: None,
        }
    }
}

/// Which command the config must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigPurpose {
    Train,
    Eval,
    Bench,
    Ablate,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Collects every violated field instead of stopping at the first.
    pub fn validate(&self, purpose: ConfigPurpose) -> Result<(), Vec<String>> {
        let mut violations = Vec::new();
        let needs_dataset = matches!(
            purpose,
            ConfigPurpose::Train | ConfigPurpose::Eval | ConfigPurpose::Ablate
        );

        if needs_dataset {
            match &self.dataset {
                None => violations.push("dataset: missing".into()),
                Some(src) if src.path.is_empty() => violations.push("dataset.path: empty".into()),
                _ => {}
            }
            if self.target.as_deref().map_or(true, str::is_empty) {
                violations.push("target: missing".into());
            }
        }
        if purpose == ConfigPurpose::Bench {
            match &self.synthetic {
                None => violations.push("synthetic: missing".into()),
                Some(spec) => {
                    if let Err(msg) = spec.validate() {
                        violations.push(format!("synthetic: {msg}"));
                    }
                }
            }
        }
        if purpose == ConfigPurpose::Eval && self.checkpoint.as_deref().map_or(true, str::is_empty)
        {
            violations.push("checkpoint: missing".into());
        }
        if self.seed.is_none() {
            violations.push("seed: missing".into());
        }
        match &self.split {
            None => violations.push("split: missing".into()),
            Some(SplitSource::Sizes(sizes)) if sizes.iter().any(|&s| s == 0) => {
                violations.push(format!("split.sizes: every part must be positive, got {sizes:?}"))
            }
            Some(SplitSource::File(path)) if path.is_empty() => {
                violations.push("split.file: empty".into())
            }
            _ => {}
        }
        if self.batch_size == 0 {
            violations.push("batch_size: must be positive".into());
        }
        if self.max_epochs == 0 {
            violations.push("max_epochs: must be positive".into());
        }
        if self.seeds == 0 {
            violations.push("seeds: must be positive".into());
        }
        if let Err(e) = self.dg.validate() {
            violations.push(format!("dg: {e}"));
        }
        if let Err(e) = self.network.validate() {
            violations.push(format!("network: {e}"));
        }
        if !(self.optimizer.lr >= 0.0 && self.optimizer.lr.is_finite()) {
            violations.push(format!("optimizer.lr: must be finite and >= 0, got {}", self.optimizer.lr));
        }
        for (name, beta) in [("beta1", self.optimizer.beta1), ("beta2", self.optimizer.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                violations.push(format!("optimizer.{name}: must lie in [0, 1), got {beta}"));
            }
        }
        if !(self.optimizer.eps > 0.0) {
            violations.push(format!("optimizer.eps: must be positive, got {}", self.optimizer.eps));
        }

        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    /// Target name; valid after [`Self::validate`] for dataset purposes.
    /// Synthetic datasets always regress the generated `y`.
    pub fn target_name(&self) -> &str {
        self.target.as_deref().unwrap_or("y")
    }

    pub fn seed_value(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}
