//! Run configuration: a TOML file plus environment overrides.
//!
//! Any key can be overridden with `CHEMCAL_<SECTION>__<KEY>=<value>`, e.g.
//! `CHEMCAL_TRAIN__BETA=0.5` or `CHEMCAL_SEED=7`. Values are parsed as TOML
//! literals and fall back to plain strings.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ablation::AblationSpec;
use crate::calibration::DEFAULT_BINS;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::label::Label;
use crate::selftrain::SelfTrainConfig;
use crate::training::TrainConfig;

pub const ENV_PREFIX: &str = "CHEMCAL_";
const ENV_SEPARATOR: &str = "__";

/// The three ChemProt files of one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChemProtSplit {
    pub abstracts: PathBuf,
    pub entities: PathBuf,
    pub relations: PathBuf,
}

impl ChemProtSplit {
    pub fn paths(&self) -> [&Path; 3] {
        [&self.abstracts, &self.entities, &self.relations]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChemProtSource {
    pub train: ChemProtSplit,
    pub dev: Option<ChemProtSplit>,
    pub test: Option<ChemProtSplit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Raw ChemProt files. When present, the preprocess stage writes the
    /// example files into the output directory and `train`/`dev`/`test` are
    /// ignored.
    pub chemprot: Option<ChemProtSource>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Unlabeled pool for self-training.
    pub pool: Option<PathBuf>,
    pub eval_groups: BTreeSet<Label>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            chemprot: None,
            train: None,
            dev: None,
            test: None,
            pool: None,
            eval_groups: crate::corpus::default_eval_groups(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub candidates: Vec<f64>,
    pub replicates: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            candidates: vec![0.0, 0.1, 0.3, 0.5, 1.0],
            replicates: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. Each stage derives its own seed from it.
    pub seed: u64,
    pub bins: usize,
    pub out_dir: PathBuf,
    /// Reuse stage outputs already present in `out_dir`.
    pub resume: bool,
    pub data: DataConfig,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub selftrain: SelfTrainConfig,
    pub grid: GridConfig,
    pub ablation: AblationSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            bins: DEFAULT_BINS,
            out_dir: PathBuf::from("run"),
            resume: false,
            data: DataConfig::default(),
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            selftrain: SelfTrainConfig::default(),
            grid: GridConfig::default(),
            ablation: AblationSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path` (or starts from defaults) and applies overrides from the
    /// process environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        Self::load_with_env(path, std::env::vars())
    }

    pub fn load_with_env<I>(path: Option<&Path>, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        apply_env_overrides(&mut table, env)?;
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::Config("bins must be >= 1".into()));
        }
        self.train.validate()?;
        self.selftrain.validate()?;
        self.ablation.validate()?;
        if self.encoder.dim == 0 || self.encoder.hidden == 0 || self.encoder.max_len < 2 {
            return Err(Error::Config(
                "encoder needs dim >= 1, hidden >= 1 and max_len >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// Applies `CHEMCAL_A__B=value` pairs to the raw table. Unrelated variables
/// are ignored.
pub fn apply_env_overrides<I>(table: &mut toml::Table, env: I) -> Result<()>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut pairs: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    pairs.sort();
    for (key, raw) in pairs {
        let path: Vec<String> = key[ENV_PREFIX.len()..]
            .split(ENV_SEPARATOR)
            .map(|s| s.to_ascii_lowercase())
            .collect();
        if path.iter().any(|s| s.is_empty()) {
            return Err(Error::Config(format!("malformed override variable {key}")));
        }
        let value = parse_value(&raw);
        let (last, parents) = path.split_last().expect("non-empty path");
        let mut node = &mut *table;
        for segment in parents {
            let entry = node
                .entry(segment.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            node = match entry {
                toml::Value::Table(t) => t,
                _ => {
                    return Err(Error::Config(format!(
                        "{key}: {segment} is not a section"
                    )))
                }
            };
        }
        node.insert(last.clone(), value);
    }
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
