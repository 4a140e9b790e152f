//! Steady-state verification over a grid of atom numbers, feedback angles and drives.

use std::f64::consts::PI;

use rydfb_core::steady::{verify_claimed_steady, VerificationCell, VerificationTolerances};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

pub fn default_omegas() -> Vec<f64> {
    vec![0.0, PI / 6.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0, PI]
}

pub fn default_rabis() -> Vec<f64> {
    vec![0.25, 1.0, 5.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub tolerances: VerificationTolerances,
    pub n_cells: usize,
    pub n_passed: usize,
    pub n_degenerate: usize,
    /// Largest closed-form residual over the non-degenerate cells.
    pub max_residual: f64,
    pub pass: bool,
    pub cells: Vec<VerificationCell>,
}

pub fn run_verification(ns: &[usize], omegas: &[f64], rabis: &[f64]) -> Result<VerificationReport> {
    if ns.is_empty() || ns.iter().any(|n| !(2..=8).contains(n)) {
        return Err(config_err(format!(
            "atom numbers must lie in 2..=8, got {ns:?}"
        )));
    }
    let tolerances = VerificationTolerances::default();
    let cells = verify_claimed_steady(ns, omegas, rabis, &tolerances)?;
    let max_residual = cells
        .iter()
        .filter(|c| !c.degenerate_case)
        .map(|c| c.residual_norm)
        .fold(0.0, f64::max);
    Ok(VerificationReport {
        tolerances,
        n_cells: cells.len(),
        n_passed: cells.iter().filter(|c| c.pass).count(),
        n_degenerate: cells.iter().filter(|c| c.degenerate_case).count(),
        max_residual,
        pass: cells.iter().all(|c| c.pass),
        cells,
    })
}

/// Parses `N` or `LO..HI` (inclusive).
pub fn parse_n_range(s: &str) -> Result<Vec<usize>> {
    let bad = || config_err(format!("`{s}` is not an atom number or range like 2..8"));
    let ns: Vec<usize> = match s.split_once("..") {
        Some((a, b)) => {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b
                .trim_start_matches('=')
                .trim()
                .parse()
                .map_err(|_| bad())?;
            (a..=b).collect()
        }
        None => vec![s.trim().parse().map_err(|_| bad())?],
    };
    if ns.is_empty() {
        return Err(bad());
    }
    Ok(ns)
}
