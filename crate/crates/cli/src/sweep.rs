//! Final-fidelity grids over one or two primitive parameters.

use std::fmt::Write as _;

use rayon::prelude::*;
use rydfb_core::params::{ModelTier, PhysicalParams};
use serde_json::Value;

use crate::config::SweepConfig;
use crate::error::{config_err, Result};
use crate::run::run_scenario;

/// One grid point: axis values, tier and final target fidelity.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub coords: Vec<f64>,
    pub tier: ModelTier,
    pub fidelity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub axes: Vec<String>,
    pub points: Vec<SweepPoint>,
}

impl SweepTable {
    /// Long format: one row per (point, tier).
    pub fn to_csv(&self) -> String {
        let mut s = self.axes.join(",");
        s.push_str(",tier,fidelity\n");
        for p in &self.points {
            for c in &p.coords {
                write!(s, "{c:.16e},").unwrap();
            }
            writeln!(s, "{},{:.16e}", p.tier, p.fidelity).unwrap();
        }
        s
    }

    pub fn fidelity(&self, coords: &[f64], tier: ModelTier) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.tier == tier && p.coords == coords)
            .map(|p| p.fidelity)
    }
}

/// Sets primitive field `name` of `p`; list fields get `value` on every atom.
pub fn set_param(p: &PhysicalParams, name: &str, value: f64) -> Result<PhysicalParams> {
    let mut v = serde_json::to_value(p)?;
    let slot = v.get_mut(name).ok_or_else(|| {
        config_err(format!(
            "`{name}` is not a primitive parameter and cannot be swept"
        ))
    })?;
    match slot {
        Value::Array(items) => items.iter_mut().for_each(|x| *x = Value::from(value)),
        Value::Number(n) if n.is_u64() => {
            if value.fract() != 0.0 || value < 0.0 {
                return Err(config_err(format!(
                    "`{name}` takes non-negative integers, got {value}"
                )));
            }
            *slot = Value::from(value as u64);
        }
        Value::Number(_) => *slot = Value::from(value),
        _ => {
            return Err(config_err(format!(
                "`{name}` is not numeric and cannot be swept"
            )))
        }
    }
    serde_json::from_value(v).map_err(|e| config_err(format!("sweeping `{name}`: {e}")))
}

fn grid_points(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![vec![]], |acc, values| {
        acc.into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&x| {
                    let mut p = prefix.clone();
                    p.push(x);
                    p
                })
            })
            .collect()
    })
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepTable> {
    if cfg.axes.is_empty() || cfg.axes.len() > 2 {
        return Err(config_err(format!(
            "a sweep takes one or two axes, got {}",
            cfg.axes.len()
        )));
    }
    if cfg.tiers.is_empty() {
        return Err(config_err("a sweep needs at least one tier"));
    }
    if cfg.axes.iter().any(|a| a.values.is_empty()) {
        return Err(config_err("sweep axis without values"));
    }
    let coords = grid_points(
        &cfg.axes
            .iter()
            .map(|a| a.values.clone())
            .collect::<Vec<_>>(),
    );
    let mut jobs = Vec::new();
    for c in &coords {
        let mut p = cfg.base.params.clone();
        for (axis, &x) in cfg.axes.iter().zip(c) {
            p = set_param(&p, &axis.param, x)?;
        }
        for &tier in &cfg.tiers {
            let mut s = cfg.base.clone();
            s.params = p.clone();
            s.tier = tier;
            s.validate()?;
            jobs.push((c.clone(), s));
        }
    }
    let points = jobs
        .into_par_iter()
        .map(|(coords, s)| {
            let out = run_scenario(&s, None)?;
            Ok(SweepPoint {
                coords,
                tier: s.tier,
                fidelity: out.summary.final_fidelity,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        axes: cfg.axes.iter().map(|a| a.param.clone()).collect(),
        points,
    })
}
