use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsub::{JordanMode, MeanEstMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    /// Strict saddle at the origin, minima at `+-e_1`; runs start at the saddle.
    PlantedQuartic,
    /// `||x||^2 / 2`; runs start at `e_1`.
    Bowl,
}

impl InstanceKind {
    pub fn name(self) -> &'static str {
        match self {
            InstanceKind::PlantedQuartic => "planted_quartic",
            InstanceKind::Bowl => "bowl",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmId {
    PgdQgc,
    PagdAncf,
    PsgdQme,
    FpsgdQme,
    FirstOrderPgd,
}

impl AlgorithmId {
    pub fn name(self) -> &'static str {
        match self {
            AlgorithmId::PgdQgc => "pgd_qgc",
            AlgorithmId::PagdAncf => "pagd_ancf",
            AlgorithmId::PsgdQme => "psgd_qme",
            AlgorithmId::FpsgdQme => "fpsgd_qme",
            AlgorithmId::FirstOrderPgd => "first_order_pgd",
        }
    }

    /// Whether the reported noise level is the gradient-noise bound.
    pub fn first_order(self) -> bool {
        matches!(self, AlgorithmId::FpsgdQme | AlgorithmId::FirstOrderPgd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub id: AlgorithmId,
    #[serde(default = "default_jordan_mode")]
    pub jordan_mode: JordanMode,
    #[serde(default = "default_mean_mode")]
    pub mean_mode: MeanEstMode,
    /// Field-by-field replacements applied to the algorithm's derived configuration.
    #[serde(default)]
    pub overrides: toml::Table,
}

fn default_jordan_mode() -> JordanMode {
    JordanMode::ContractSim
}

fn default_mean_mode() -> MeanEstMode {
    MeanEstMode::QuantumSim
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    /// Deterministic pseudo-random perturbation of magnitude at most `nu`.
    BoundedRandom,
    /// `nu cos(<a, x> + phi)` with a random frequency vector; has closed-form smoothing.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub model: NoiseKind,
    /// Absolute noise level.
    pub nu: Option<f64>,
    /// Noise level as a fraction of the algorithm's admissible bound.
    pub regime_fraction: Option<f64>,
    #[serde(default = "default_freq")]
    pub freq: f64,
}

fn default_freq() -> f64 {
    1.0
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { model: NoiseKind::None, nu: None, regime_fraction: None, freq: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScalingAxis {
    #[default]
    Dimension,
    InverseEps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QueryMetric {
    Zeroth,
    First,
    Binary,
    #[default]
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScalingSpec {
    #[serde(default)]
    pub axis: ScalingAxis,
    #[serde(default)]
    pub metric: QueryMetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub master_seed: u64,
    pub instance: InstanceKind,
    pub algorithm: AlgorithmSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub dims: Vec<usize>,
    pub eps: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Overall confidence parameter.
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    pub parallelism: Option<usize>,
    pub scaling: Option<ScalingSpec>,
}

fn default_delta() -> f64 {
    0.1
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.eps.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("dims, eps and seeds must be non-empty".into()));
        }
        if self.dims.contains(&0) || self.eps.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::Config("dims must be positive and eps must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.noise.nu.is_some() && self.noise.regime_fraction.is_some() {
            return Err(Error::Config("set at most one of noise.nu and noise.regime_fraction".into()));
        }
        if self.noise.model == NoiseKind::None && (self.noise.nu.is_some() || self.noise.regime_fraction.is_some()) {
            return Err(Error::Config("noise level given for noise model 'none'".into()));
        }
        if self.noise.model == NoiseKind::Cosine && self.instance != InstanceKind::PlantedQuartic {
            return Err(Error::Config("cosine noise is defined over the planted quartic only".into()));
        }
        if self.parallelism == Some(0) {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        Ok(())
    }
}

/// Replace fields of `base` by the entries of `overrides`; keys absent from `base` are errors.
pub fn apply_overrides<T: Serialize + DeserializeOwned>(base: &T, overrides: &toml::Table) -> Result<T> {
    let mut value = toml::Value::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
    merge(&mut value, overrides, "")?;
    value.try_into().map_err(|e| Error::Config(format!("override: {e}")))
}

fn merge(dst: &mut toml::Value, src: &toml::Table, path: &str) -> Result<()> {
    let table = dst
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("override path '{path}' is not a table")))?;
    for (key, val) in src {
        let full = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
        let slot = table.get_mut(key).ok_or_else(|| Error::Config(format!("unknown override key '{full}'")))?;
        match (slot.is_table(), val) {
            (true, toml::Value::Table(sub)) => merge(slot, sub, &full)?,
            (true, _) => return Err(Error::Config(format!("override '{full}' must be a table"))),
            _ => *slot = val.clone(),
        }
    }
    Ok(())
}
