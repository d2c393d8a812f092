//! Run configuration: one TOML file with a table per concern. Command-line
//! flags override file values, which override defaults.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use sctc_core::builder::{ClusterConfig, FilterConfig, SplitThresholds};
use sctc_core::model::{ModelConfig, TrainConfig};
use sctc_core::synthetic::{ContradictionSpec, DocCorpusSpec, ModularSpec};
use sctc_core::Dataset;
use sctc_extract::{HttpConfig, LinkingConfig, TransportSettings};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every subsystem derives its own stream from it.
    pub seed: u64,
    pub dataset: DatasetSection,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub build: BuildSection,
    pub extract: ExtractSection,
    pub transport: TransportSection,
    pub link: LinkSection,
    pub grid: GridSection,
    pub synth: SynthSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub dir: Option<PathBuf>,
}

/// Training hyperparameters; the seed comes from the root `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            lr: d.lr,
            weight_decay: d.weight_decay,
            epochs: d.epochs,
            patience: d.patience,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Directory holding `model.toml` and `model.ckpt`.
    pub checkpoint: Option<PathBuf>,
    pub split: String,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            checkpoint: None,
            split: "test".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildSection {
    /// `doc_id\tday` lines.
    pub docs: Option<PathBuf>,
    /// Binary embedding matrix, one row per document.
    pub embeddings: Option<PathBuf>,
    /// `doc_id\tsubject\trelation\tobject` lines.
    pub events: Option<PathBuf>,
    /// Calendar date of day 0.
    pub epoch: NaiveDate,
    pub cluster: ClusterConfig,
    pub split: SplitThresholds,
    pub filter: FilterConfig,
}

impl Default for BuildSection {
    fn default() -> Self {
        BuildSection {
            docs: None,
            embeddings: None,
            events: None,
            epoch: Dataset::default_epoch(),
            cluster: ClusterConfig::default(),
            split: SplitThresholds::default(),
            filter: FilterConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractSection {
    /// JSON-lines articles `{doc_id, date, title, body}`.
    pub articles: Option<PathBuf>,
    /// Directory with `relation2id.txt` and optional `relation_hierarchy.txt`;
    /// the twenty CAMEO roots when unset.
    pub hierarchy: Option<PathBuf>,
    pub workers: usize,
    /// Calendar date of day 0 for the emitted `docs.tsv`.
    pub epoch: NaiveDate,
}

impl Default for ExtractSection {
    fn default() -> Self {
        ExtractSection {
            articles: None,
            hierarchy: None,
            workers: 4,
            epoch: Dataset::default_epoch(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportSection {
    pub name: String,
    pub path: Option<PathBuf>,
    pub record: Option<PathBuf>,
    pub http: HttpConfig,
}

impl Default for TransportSection {
    fn default() -> Self {
        TransportSection {
            name: "mock".into(),
            path: None,
            record: None,
            http: HttpConfig::default(),
        }
    }
}

impl TransportSection {
    pub fn settings(&self) -> TransportSettings {
        TransportSettings {
            path: self.path.clone(),
            record: self.record.clone(),
            http: self.http.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSection {
    /// Extracted events to link, `doc_id\tsubject\trelation\tobject`.
    pub events: Option<PathBuf>,
    pub k: usize,
    pub rounds: usize,
    pub max_iter: usize,
}

impl Default for LinkSection {
    fn default() -> Self {
        let d = LinkingConfig::default();
        LinkSection {
            events: None,
            k: d.k,
            rounds: d.rounds,
            max_iter: d.max_iter,
        }
    }
}

/// Candidate values per hyperparameter. An empty list keeps the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub lr: Vec<f64>,
    pub weight_decay: Vec<f64>,
    /// History length, applied to both contexts.
    pub history: Vec<usize>,
    /// Propagation layers, applied to both contexts.
    pub layers: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    /// `modular`, `contradiction` or `documents`.
    pub kind: String,
    pub modular: ModularSpec,
    pub contradiction: ContradictionSpec,
    pub documents: DocCorpusSpec,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            kind: "modular".into(),
            modular: ModularSpec::default(),
            contradiction: ContradictionSpec::default(),
            documents: DocCorpusSpec::default(),
        }
    }
}

/// Values given on the command line.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub variant: Option<String>,
    pub transport: Option<String>,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub split: Option<String>,
    pub kind: Option<String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config {
            field: String::new(),
            reason: e.message().to_string(),
        })?;
        serde_path_to_error::deserialize(table).map_err(|e| CliError::Config {
            field: e.path().to_string(),
            reason: e.inner().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Defaults, then the file if given, then the flags.
    pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match file {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(s) = flags.seed {
            cfg.seed = s;
        }
        if let Some(v) = &flags.variant {
            cfg.model.variant = v.clone();
        }
        if let Some(t) = &flags.transport {
            cfg.transport.name = t.clone();
        }
        if let Some(d) = &flags.dataset {
            cfg.dataset.dir = Some(d.clone());
        }
        if let Some(c) = &flags.checkpoint {
            cfg.eval.checkpoint = Some(c.clone());
        }
        if let Some(s) = &flags.split {
            cfg.eval.split = s.clone();
        }
        if let Some(k) = &flags.kind {
            cfg.synth.kind = k.clone();
        }
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.train.lr,
            weight_decay: self.train.weight_decay,
            epochs: self.train.epochs,
            seed: self.seed,
            patience: self.train.patience,
        }
    }

    pub fn linking_config(&self) -> LinkingConfig {
        LinkingConfig {
            k: self.link.k,
            rounds: self.link.rounds,
            max_iter: self.link.max_iter,
            seed: self.seed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Returns the path behind an optional setting, failing with the setting's
/// name when it is unset or missing on disk.
pub fn existing(field: &str, path: Option<&PathBuf>) -> Result<PathBuf, CliError> {
    let p = path.ok_or_else(|| CliError::Config {
        field: field.into(),
        reason: "required for this command".into(),
    })?;
    if !p.exists() {
        return Err(CliError::Config {
            field: field.into(),
            reason: format!("{} does not exist", p.display()),
        });
    }
    Ok(p.clone())
}

pub fn config_err(field: &str, reason: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.into(),
        reason: reason.into(),
    }
}
