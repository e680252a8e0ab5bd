use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use divseek::{
    ControlParams, DisturbanceSpec, IntegratorSpec, ObjectiveSpec, QuadratureSpec, Scenario, System,
};
use serde::{Deserialize, Serialize};

/// Scenario file consumed by `simulate` and `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub objective: ObjectiveSpec,
    pub params: ControlParams,
    #[serde(default)]
    pub disturbance: DisturbanceSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    /// Initial plant state `x(0)`.
    pub x0: Vec<f64>,
    #[serde(default)]
    pub eta0: f64,
    #[serde(default)]
    pub system: System,
    /// Rule for ball averages in summaries and the averaged flow.
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    /// Trajectory path used when `--out` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.disturbance.validate()?;
        self.integrator.validate()?;
        self.quadrature.validate()?;
        let j = self.objective.build()?;
        if j.dim() != self.params.n {
            return Err(divseek::Error::DimensionMismatch {
                expected: self.params.n,
                actual: j.dim(),
            })
            .context("objective dimension does not match `params.n`");
        }
        if self.x0.len() != self.params.n {
            return Err(divseek::Error::DimensionMismatch {
                expected: self.params.n,
                actual: self.x0.len(),
            })
            .context("`x0` length does not match `params.n`");
        }
        Ok(())
    }

    pub fn scenario(&self, id: &str) -> Scenario {
        Scenario {
            id: id.to_string(),
            objective: self.objective.clone(),
            params: self.params,
            x0: self.x0.clone(),
            eta0: self.eta0,
            integrator: self.integrator.clone(),
        }
    }
}

/// Reads and parses a JSON file; the error names the offending key.
pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = load_json(path)?;
    cfg.validate()?;
    Ok(cfg)
}
