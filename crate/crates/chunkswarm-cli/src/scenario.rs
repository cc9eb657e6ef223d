//! Scenario configuration: one TOML file per run, command-line flags
//! override individual fields.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use chunkswarm::fluid::DensityState;
use chunkswarm::model::ModelConfig;
use chunkswarm::{ChunkLabel, ModelParams, PopulationState};

/// Parsed scenario file. Every section is optional; subcommands pull what
/// they need and error on genuinely missing inputs.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub task: Option<String>,
    pub output: Option<PathBuf>,
    pub model: Option<ModelConfig>,
    /// Initial state as label -> value (densities; counts are rounded).
    pub initial: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub simulate: SimulateCfg,
    #[serde(default)]
    pub integrate: IntegrateCfg,
    #[serde(default, rename = "scale-check")]
    pub scale_check: ScaleCheckCfg,
    #[serde(default)]
    pub equilibrium: EquilibriumCfg,
    #[serde(default)]
    pub settle: SettleCfg,
    #[serde(default)]
    pub compare: CompareCfg,
    #[serde(default)]
    pub little: LittleCfg,
    #[serde(default)]
    pub diffusion: DiffusionCfg,
    #[serde(default, rename = "conjecture-scan")]
    pub conjecture_scan: ConjectureScanCfg,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateCfg {
    pub seed: Option<u64>,
    pub t_max: Option<f64>,
    pub max_events: Option<u64>,
    /// Record on a fixed grid of this spacing instead of every event.
    pub grid_dt: Option<f64>,
    /// "direct" (default) or "time-change".
    pub driver: Option<String>,
    /// Also write per-peer records (JSON lines).
    pub agents: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateCfg {
    pub t_max: Option<f64>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub grid_points: Option<usize>,
    /// Integrate the cardinality-symmetric reduced system instead.
    pub reduced: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleCheckCfg {
    pub n_list: Option<Vec<u64>>,
    pub replicas: Option<usize>,
    pub seed: Option<u64>,
    pub t_max: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumCfg {
    /// Newton start; defaults to the initial state.
    pub guess: Option<BTreeMap<String, f64>>,
    /// Also write a vector-field sample grid (single-chunk models only).
    pub field_grid: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettleCfg {
    /// "case1" (default), "bounds" or "explore".
    pub mode: Option<String>,
    // case1 table
    pub w0: Option<f64>,
    pub epsilon: Option<f64>,
    pub x0_points: Option<usize>,
    pub betas: Option<Vec<f64>>,
    // bounds / explore
    pub r: Option<f64>,
    pub t_max: Option<f64>,
    pub grid_points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareCfg {
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub delta: Option<f64>,
    pub beta_split: Option<f64>,
    pub gamma_split: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LittleCfg {
    pub seed: Option<u64>,
    pub t_max: Option<f64>,
    pub max_events: Option<u64>,
    pub burn_in: Option<f64>,
    pub label: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionCfg {
    pub t_max: Option<f64>,
    pub n_paths: Option<usize>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
    pub grid_points: Option<usize>,
    /// Population scale for the empirical fluctuation comparison (0 = skip).
    pub n_scale: Option<u64>,
    pub replicas: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConjectureScanCfg {
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub delta: Option<f64>,
    pub beta_split: Option<f64>,
    pub gamma_split: Option<f64>,
    pub n_values: Option<Vec<u8>>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read scenario file {}", path.display()))?;
        let scenario: Scenario = toml::from_str(&text)
            .with_context(|| format!("cannot parse scenario file {}", path.display()))?;
        Ok(scenario)
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        let cfg = self
            .model
            .as_ref()
            .context("scenario needs a [model] section (n, beta, gamma, delta, [model.alpha])")?;
        let params = ModelParams::try_from(ModelConfig {
            n: cfg.n,
            beta: cfg.beta,
            gamma: cfg.gamma,
            delta: cfg.delta,
            alpha: cfg.alpha.clone(),
        })?;
        Ok(params)
    }

    pub fn initial_density(&self, params: &ModelParams) -> Result<DensityState> {
        let map = self.initial.as_ref().context("scenario needs an [initial] state table")?;
        density_from_map(params.n(), map)
    }

    pub fn initial_counts(&self, params: &ModelParams) -> Result<PopulationState> {
        let map = self.initial.as_ref().context("scenario needs an [initial] state table")?;
        let mut counts = vec![0u64; params.num_labels()];
        for (key, value) in map {
            let label = parse_label(params.n(), key)?;
            if *value < 0.0 || value.fract() != 0.0 {
                bail!("initial count for {key} must be a nonnegative integer, got {value}");
            }
            counts[label.index()] = *value as u64;
        }
        Ok(PopulationState::new(params.n(), counts)?)
    }
}

pub fn parse_label(n: u8, text: &str) -> Result<ChunkLabel> {
    let parsed: ChunkLabel = text
        .parse()
        .with_context(|| format!("cannot parse label {text:?} (expected e.g. \"{{1,3}}\")"))?;
    Ok(ChunkLabel::from_indices(n, &parsed.indices())?)
}

pub fn density_from_map(n: u8, map: &BTreeMap<String, f64>) -> Result<DensityState> {
    let mut values = vec![0.0; 1usize << n];
    for (key, value) in map {
        let label = parse_label(n, key)?;
        values[label.index()] = *value;
    }
    Ok(DensityState::new(n, values)?)
}
