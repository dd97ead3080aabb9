//! Scenario configuration, read from TOML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Observer run with the windowed error and closeness reports.
    Estimate,
    /// Closed-loop tracking with the windowed error and continuity reports.
    Track,
    /// Build-time checks plus the glued Lipschitz estimates.
    Certify,
    /// Bi-Lipschitz and dwell-function estimation.
    Analyze,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Estimate => "estimate",
            Self::Track => "track",
            Self::Certify => "certify",
            Self::Analyze => "analyze",
        }
    }
}

/// Simulation settings; unset fields fall back to the model defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub horizon: Option<f64>,
    pub step: Option<f64>,
    pub x0: Option<Vec<f64>>,
}

/// Tolerances and sample sizes of the pass/fail checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksSection {
    /// Error level of the windowed convergence report.
    pub epsilon: f64,
    /// Level and time window of the graphical closeness report.
    pub closeness_epsilon: f64,
    pub closeness_window: f64,
    /// Ascending grid of distances for the dwell function.
    pub dwell_grid: Vec<f64>,
    /// Trajectories drawn from the invariant set for dwell estimation, and
    /// as many again held out.
    pub dwell_trajectories: usize,
    /// Pairs for the Lipschitz estimators.
    pub lipschitz_pairs: usize,
    /// Width of the neighbourhood of the jump set removed for the
    /// bi-Lipschitz estimate.
    pub jump_margin: f64,
}

impl Default for ChecksSection {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            closeness_epsilon: 0.1,
            closeness_window: 0.1,
            dwell_grid: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.3],
            dwell_trajectories: 5,
            lipschitz_pairs: 10_000,
            jump_margin: 0.1,
        }
    }
}

/// One run: a model, a mode and its settings. A non-empty `sweep` runs the
/// scenario once per entry, each entry's overrides layered over `overrides`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model_id: String,
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub checks: ChecksSection,
    #[serde(default)]
    pub sweep: Vec<BTreeMap<String, f64>>,
}

impl ScenarioConfig {
    /// Config for `mode` on `model_id` with every setting at its default.
    pub fn new(model_id: impl Into<String>, mode: Mode) -> Self {
        Self {
            model_id: model_id.into(),
            mode,
            seed: 0,
            out_dir: None,
            overrides: BTreeMap::new(),
            sim: SimSection::default(),
            checks: ChecksSection::default(),
            sweep: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks the settings that do not depend on the model.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: &str| Err(CliError::Config(msg.to_string()));
        if self.model_id.trim().is_empty() {
            return bad("model_id is empty");
        }
        if let Some(h) = self.sim.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return bad("sim.horizon must be positive");
            }
        }
        if let Some(s) = self.sim.step {
            if !(s > 0.0 && s.is_finite()) {
                return bad("sim.step must be positive");
            }
        }
        let c = &self.checks;
        if !(c.epsilon > 0.0 && c.closeness_epsilon > 0.0 && c.closeness_window > 0.0 && c.jump_margin >= 0.0) {
            return bad("check tolerances must be positive");
        }
        if c.dwell_grid.is_empty()
            || c.dwell_grid.iter().any(|&e| !(e > 0.0))
            || c.dwell_grid.windows(2).any(|w| w[1] <= w[0])
        {
            return bad("checks.dwell_grid must be positive and strictly ascending");
        }
        if c.dwell_trajectories == 0 || c.lipschitz_pairs < 3 {
            return bad("checks need at least one dwell trajectory and three Lipschitz pairs");
        }
        if self.overrides.values().chain(self.sweep.iter().flat_map(|s| s.values())).any(|v| !v.is_finite()) {
            return bad("overrides must be finite");
        }
        Ok(())
    }

    /// Sweep entries as full configs, in order. Without a sweep this is the
    /// config itself.
    pub fn expand(&self) -> Vec<ScenarioConfig> {
        if self.sweep.is_empty() {
            return vec![self.clone()];
        }
        self.sweep
            .iter()
            .map(|entry| {
                let mut c = self.clone();
                c.sweep.clear();
                c.overrides.extend(entry.iter().map(|(k, v)| (k.clone(), *v)));
                c
            })
            .collect()
    }
}

/// Parses `key=value` with a numeric value.
pub fn parse_override(s: &str) -> CliResult<(String, f64)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {s:?} is not key=value")))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("override {s:?} has a non-numeric value")))?;
    Ok((k.trim().to_string(), v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let c = ScenarioConfig::from_toml("model_id = \"ripple\"\nmode = \"certify\"\n").unwrap();
        assert_eq!(c.mode, Mode::Certify);
        assert_eq!(c.checks, ChecksSection::default());
    }

    #[test]
    fn missing_model_is_config_error() {
        let e = ScenarioConfig::from_toml("mode = \"estimate\"\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(ScenarioConfig::from_toml("model_id = \"x\"\nmode = \"track\"\nspeed = 3\n").is_err());
    }

    #[test]
    fn sweep_layers_overrides() {
        let c = ScenarioConfig::from_toml(
            "model_id = \"bouncing_ball\"\nmode = \"estimate\"\n[overrides]\nrho = 2.0\nmass = 3.0\n[[sweep]]\nrho = 1.0\n[[sweep]]\nmass = 1.0\n",
        )
        .unwrap();
        let runs = c.expand();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0].overrides["rho"], 1.0);
        assert_eq!(runs[0].overrides["mass"], 3.0);
        assert_eq!(runs[1].overrides["rho"], 2.0);
    }

    #[test]
    fn override_parsing() {
        assert_eq!(parse_override("rho=2.5").unwrap(), ("rho".into(), 2.5));
        assert!(parse_override("rho").is_err());
        assert!(parse_override("rho=fast").is_err());
    }
}
