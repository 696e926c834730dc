//! Experiment configuration files and the JSON inputs they point at.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use selfsync_core::{
    build_channel, ml_setup, place_nodes, DebiasMode, DetectorConfig, Digraph, InitialCondition,
    NodeParams, RadioConfig,
};

use crate::error::{CliError, CliResult};
use crate::experiments::{Example2Config, Preset};

/// Everything a subcommand may take from a config file. Every field is
/// optional; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Graph JSON file.
    pub graph: Option<PathBuf>,
    /// Generate the graph from a radio model instead of reading it.
    pub radio: Option<RadioConfig>,
    /// Node parameter JSON file.
    pub params: Option<PathBuf>,
    pub preset: Option<Preset>,
    pub k: Option<f64>,
    pub ts: Option<f64>,
    pub horizon: Option<usize>,
    pub seed: Option<u64>,
    pub initial: Option<InitialCondition>,
    pub detector: Option<DetectorConfig>,
    pub debias_mode: Option<DebiasMode>,
    pub zero_delays: Option<bool>,
    pub mc_runs: Option<usize>,
    pub example2: Option<Example2Config>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let mut cfg: Self = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.graph, &mut cfg.params, &mut cfg.out]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_graph(path: &Path) -> CliResult<Digraph> {
    read_json(path)
}

/// Builds the graph from a radio model, overriding its seed when given.
pub fn generate_graph(radio: &RadioConfig, seed: Option<u64>) -> CliResult<Digraph> {
    let mut radio = radio.clone();
    if let Some(s) = seed {
        radio.seed = s;
    }
    let positions = place_nodes(&radio)?;
    Ok(build_channel(&radio, &positions)?)
}

/// Node parameters as stored on disk: either the statistics directly or the
/// observation model they are derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamsFile {
    MaximumLikelihood {
        a: Vec<f64>,
        sigma2: Vec<f64>,
        y: Vec<f64>,
    },
    /// `c` defaults to all ones.
    Explicit {
        #[serde(default)]
        c: Option<Vec<f64>>,
        u: Vec<f64>,
    },
}

impl ParamsFile {
    pub fn into_params(self) -> CliResult<NodeParams> {
        Ok(match self {
            Self::MaximumLikelihood { a, sigma2, y } => ml_setup(&a, &sigma2, &y)?,
            Self::Explicit { c: Some(c), u } => NodeParams::new(c, u)?,
            Self::Explicit { c: None, u } => NodeParams::new(vec![1.0; u.len()], u)?,
        })
    }
}

pub fn load_params(path: &Path) -> CliResult<NodeParams> {
    read_json::<ParamsFile>(path)?.into_params()
}
