//! Scenario documents: parsing, preset expansion and field overrides.

use std::path::Path;

use rydfb_core::observables::{target_state, Observable, TargetKind};
use rydfb_core::params::{ModelTier, PhysicalParams};
use rydfb_core::propagate::TimeGrid;
use rydfb_core::trajectory::TRAJECTORY_TIERS;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{config_err, CliError, Result};
use crate::presets;

/// Starting state of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InitialState {
    /// Every atom in `|g⟩`, cavity in vacuum.
    #[default]
    Ground,
    MaximallyMixed,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Integrator {
    #[default]
    Rk4,
    Adaptive {
        tol: f64,
    },
}

/// One time evolution and what to record from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    pub tier: ModelTier,
    pub params: PhysicalParams,
    #[serde(default)]
    pub initial_state: InitialState,
    pub target: TargetKind,
    pub grid: TimeGrid,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub n_trajectories: Option<usize>,
    #[serde(default)]
    pub master_seed: Option<u64>,
    #[serde(default)]
    pub integrator: Integrator,
    /// Long runs that need `--slow`.
    #[serde(default)]
    pub slow: bool,
}

/// Per-sample state diagnostics that can be written as columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Diagnostic {
    TraceDrift,
    HermiticityDefect,
    MinEigenvalue,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OutputSpec {
    Observable(Observable),
    Diagnostic(Diagnostic),
}

fn parse_target(name: &str) -> Option<TargetKind> {
    match name {
        "bell" => Some(TargetKind::BellAntisym),
        "dfs" => Some(TargetKind::Dfs),
        "w" => Some(TargetKind::W),
        "ground" => Some(TargetKind::Ground),
        _ => None,
    }
}

/// Parses an output column name. `fidelity` and `population` refer to the
/// run's target; `fidelity:<t>` and `pop:<t>` name one of
/// `bell`, `dfs`, `w`, `ground`.
pub fn parse_output(name: &str, target: TargetKind) -> Result<OutputSpec> {
    let obs = |o| Ok(OutputSpec::Observable(o));
    match name {
        "fidelity" => return obs(Observable::Fidelity { target }),
        "population" => return obs(Observable::Population { target }),
        "double_rydberg" => return obs(Observable::DoubleRydberg),
        "photons" => return obs(Observable::Photons),
        "trace_drift" => return Ok(OutputSpec::Diagnostic(Diagnostic::TraceDrift)),
        "herm_defect" => return Ok(OutputSpec::Diagnostic(Diagnostic::HermiticityDefect)),
        "min_eig" => return Ok(OutputSpec::Diagnostic(Diagnostic::MinEigenvalue)),
        _ => {}
    }
    let parsed = name
        .split_once(':')
        .and_then(|(kind, t)| Some((kind, parse_target(t)?)));
    match parsed {
        Some(("fidelity", t)) => obs(Observable::Fidelity { target: t }),
        Some(("pop", t)) => obs(Observable::Population { target: t }),
        _ => Err(config_err(format!("unknown output `{name}`"))),
    }
}

impl ScenarioConfig {
    pub fn output_specs(&self) -> Result<Vec<OutputSpec>> {
        self.outputs
            .iter()
            .map(|o| parse_output(o, self.target))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty()
            || !self
                .id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c))
        {
            return Err(config_err(format!(
                "scenario id `{}` must be a plain file stem",
                self.id
            )));
        }
        self.params.validate()?;
        self.grid.validate()?;
        target_state(self.target, self.params.n_atoms)?;
        let specs = self.output_specs()?;
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.outputs.iter().find(|o| !seen.insert(o.as_str())) {
            return Err(config_err(format!("output `{dup}` listed twice")));
        }
        if let Some(n) = self.n_trajectories {
            if n == 0 {
                return Err(config_err("n_trajectories must be positive"));
            }
            if !TRAJECTORY_TIERS.contains(&self.tier) {
                return Err(config_err(format!(
                    "trajectories are not available for {}",
                    self.tier
                )));
            }
            if specs.iter().any(|s| matches!(s, OutputSpec::Diagnostic(_))) {
                return Err(config_err(
                    "density-matrix diagnostics are not recorded for trajectory ensembles",
                ));
            }
            if self.initial_state != InitialState::Ground {
                return Err(config_err(
                    "trajectory ensembles start from the ground state",
                ));
            }
        }
        if let Integrator::Adaptive { tol } = self.integrator {
            if !(1e-12..=1e-4).contains(&tol) {
                return Err(config_err(format!(
                    "adaptive tolerance {tol:e} outside [1e-12, 1e-4]"
                )));
            }
        }
        Ok(())
    }
}

/// Recursively overlays `patch` onto `base`: objects merge key by key,
/// everything else is replaced.
pub fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, p) => *slot = p.clone(),
    }
}

fn from_value<T: serde::de::DeserializeOwned>(v: Value, what: &str) -> Result<T> {
    serde_json::from_value(v).map_err(|e| config_err(format!("{what}: {e}")))
}

/// Expands a run document: either a full scenario, or `{"preset": name,
/// ...overrides}` applied to every run of the preset.
pub fn resolve_runs(doc: &Value) -> Result<Vec<ScenarioConfig>> {
    let Some(obj) = doc.as_object() else {
        return Err(config_err("configuration must be a JSON object"));
    };
    let runs = match obj.get("preset") {
        Some(name) => {
            let name = name
                .as_str()
                .ok_or_else(|| config_err("`preset` must be a string"))?;
            let base = presets::run_preset(name)
                .ok_or_else(|| config_err(format!("unknown run preset `{name}`")))?;
            let mut patch = doc.clone();
            patch.as_object_mut().unwrap().remove("preset");
            if base.len() > 1 && patch.get("id").is_some() {
                return Err(config_err(format!(
                    "preset `{name}` has several runs; `id` cannot be overridden"
                )));
            }
            base.into_iter()
                .map(|run| {
                    let mut v = serde_json::to_value(run)?;
                    merge(&mut v, &patch);
                    from_value(v, name)
                })
                .collect::<Result<Vec<ScenarioConfig>>>()?
        }
        None => vec![from_value(doc.clone(), "scenario")?],
    };
    for r in &runs {
        r.validate()?;
    }
    Ok(runs)
}

/// Sweep of final fidelities over up to two primitive parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub id: String,
    pub base: ScenarioConfig,
    pub axes: Vec<Axis>,
    pub tiers: Vec<ModelTier>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    /// Name of a `PhysicalParams` field; list fields are set uniformly.
    pub param: String,
    pub values: Vec<f64>,
}

pub fn resolve_sweep(doc: &Value) -> Result<SweepConfig> {
    let Some(obj) = doc.as_object() else {
        return Err(config_err("configuration must be a JSON object"));
    };
    let cfg: SweepConfig = match obj.get("preset") {
        Some(name) => {
            let name = name
                .as_str()
                .ok_or_else(|| config_err("`preset` must be a string"))?;
            let base = presets::sweep_preset(name)
                .ok_or_else(|| config_err(format!("unknown sweep preset `{name}`")))?;
            let mut v = serde_json::to_value(base)?;
            let mut patch = doc.clone();
            patch.as_object_mut().unwrap().remove("preset");
            merge(&mut v, &patch);
            from_value(v, name)?
        }
        None => from_value(doc.clone(), "sweep")?,
    };
    cfg.base.validate()?;
    Ok(cfg)
}

/// Reads `arg` as a preset name or a path to a JSON document.
pub fn load_document(arg: &str) -> Result<Value> {
    let path = Path::new(arg);
    if path.extension().is_some_and(|e| e == "json") || path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.into(),
            source: e,
        })?;
        return serde_json::from_str(&text).map_err(|e| config_err(format!("{arg}: {e}")));
    }
    Ok(serde_json::json!({ "preset": arg }))
}
