//! Executes one scenario and renders its CSV and JSON artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rydfb_core::liouvillian::assemble;
use rydfb_core::observables::{target_state, Observable, Probe, TargetKind};
use rydfb_core::operator::{CVector, DensityMatrix, C64};
use rydfb_core::propagate::{evolve_adaptive, evolve_rk4};
use rydfb_core::trajectory::TrajectoryEngine;
use serde::{Deserialize, Serialize};

use crate::config::{Diagnostic, InitialState, Integrator, OutputSpec, ScenarioConfig};
use crate::error::{CliError, Result};

/// Fidelity threshold whose first crossing is reported.
pub const CROSSING_THRESHOLD: f64 = 0.95;

/// Sampled columns, `time` first.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl SeriesTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Value of `name` at the sample nearest to `t`.
    pub fn value_at(&self, name: &str, t: f64) -> Option<f64> {
        let j = self.header.iter().position(|h| h == name)?;
        let row = self
            .rows
            .iter()
            .min_by(|a, b| (a[0] - t).abs().total_cmp(&(b[0] - t).abs()))?;
        Some(row[j])
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    s.push(',');
                }
                write!(s, "{v:.16e}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// Parses text produced by [`SeriesTable::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| CliError::Config(format!("csv line {line}: {msg}"));
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| bad(1, "empty".into()))?
            .split(',')
            .map(String::from)
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| bad(i + 2, format!("`{f}`: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != header.len() {
                return Err(bad(
                    i + 2,
                    format!("{} fields, header has {}", row.len(), header.len()),
                ));
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub tier: String,
    pub n_atoms: usize,
    pub target: String,
    pub final_time: f64,
    pub final_fidelity: f64,
    pub final_populations: BTreeMap<String, f64>,
    /// First sampled time with target fidelity ≥ 0.95.
    pub t_cross_95: Option<f64>,
    pub max_trace_drift: Option<f64>,
    pub max_hermiticity_defect: Option<f64>,
    pub min_eigenvalue: Option<f64>,
    pub n_trajectories: Option<usize>,
    pub total_jumps: Option<usize>,
    pub seed: Option<u64>,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub table: SeriesTable,
    pub summary: RunSummary,
}

/// Populations reported in every summary, keyed by target label.
fn summary_targets(n: usize, target: TargetKind) -> Vec<TargetKind> {
    let mut out = vec![target];
    for k in [
        TargetKind::Ground,
        TargetKind::Dfs,
        TargetKind::W,
        TargetKind::BellAntisym,
    ] {
        if !out.contains(&k) && target_state(k, n).is_ok() {
            out.push(k);
        }
    }
    out
}

pub fn run_scenario(cfg: &ScenarioConfig, seed_override: Option<u64>) -> Result<RunOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let specs = cfg.output_specs()?;
    let n = cfg.params.n_atoms;
    let l = assemble(&cfg.params, cfg.tier)?;

    // user observables first, then the summary populations
    let mut observables: Vec<Observable> = specs
        .iter()
        .filter_map(|s| match s {
            OutputSpec::Observable(o) => Some(*o),
            OutputSpec::Diagnostic(_) => None,
        })
        .collect();
    let n_user = observables.len();
    // ensembles average populations; fidelity is the square root of the mean
    let as_fidelity: Vec<bool> = observables
        .iter()
        .map(|o| matches!(o, Observable::Fidelity { .. }))
        .collect();
    if cfg.n_trajectories.is_some() {
        for o in &mut observables {
            if let Observable::Fidelity { target } = *o {
                *o = Observable::Population { target };
            }
        }
    }
    let targets = summary_targets(n, cfg.target);
    observables.extend(
        targets
            .iter()
            .map(|&t| Observable::Population { target: t }),
    );
    let probe = Probe::new(&l, n, &observables)?;

    let mut header = vec!["time".to_string()];
    header.extend(cfg.outputs.iter().cloned());
    let (times, rows, tail, diag_summary, traj) = match cfg.n_trajectories {
        Some(n_traj) => {
            let seed = seed_override.or(cfg.master_seed).unwrap_or(0);
            let mut psi0 = CVector::zeros(l.dim());
            psi0[0] = C64::from(1.0);
            let ens =
                TrajectoryEngine::new(&l, &probe, &cfg.grid)?.ensemble(&psi0, n_traj, seed)?;
            header.extend(cfg.outputs.iter().map(|o| format!("{o}_stderr")));
            let rows: Vec<Vec<f64>> = ens
                .mean
                .iter()
                .zip(&ens.std_err)
                .map(|(m, e)| {
                    let (mut mean, mut err) = (m[..n_user].to_vec(), e[..n_user].to_vec());
                    for j in (0..n_user).filter(|&j| as_fidelity[j]) {
                        mean[j] = mean[j].clamp(0.0, 1.0).sqrt();
                        err[j] = if mean[j] > 0.0 {
                            err[j] / (2.0 * mean[j])
                        } else {
                            0.0
                        };
                    }
                    mean.into_iter().chain(err).collect()
                })
                .collect();
            let tail: Vec<Vec<f64>> = ens.mean.iter().map(|m| m[n_user..].to_vec()).collect();
            (
                ens.times,
                rows,
                tail,
                None,
                Some((n_traj, ens.total_jumps, seed)),
            )
        }
        None => {
            let rho0 = match cfg.initial_state {
                InitialState::Ground => DensityMatrix::ground(l.layout()),
                InitialState::MaximallyMixed => DensityMatrix::maximally_mixed(l.layout()),
            };
            let ts = match cfg.integrator {
                Integrator::Rk4 => evolve_rk4(&l, &rho0, &cfg.grid, &probe)?,
                Integrator::Adaptive { tol } => evolve_adaptive(&l, &rho0, &cfg.grid, tol, &probe)?,
            };
            let rows = ts
                .values
                .iter()
                .zip(&ts.diagnostics)
                .map(|(vals, d)| {
                    let mut next = vals.iter();
                    specs
                        .iter()
                        .map(|s| match s {
                            OutputSpec::Observable(_) => {
                                *next.next().expect("one value per observable")
                            }
                            OutputSpec::Diagnostic(Diagnostic::TraceDrift) => d.trace_drift,
                            OutputSpec::Diagnostic(Diagnostic::HermiticityDefect) => {
                                d.hermiticity_defect
                            }
                            OutputSpec::Diagnostic(Diagnostic::MinEigenvalue) => d.min_eigenvalue,
                        })
                        .collect()
                })
                .collect();
            let tail = ts.values.iter().map(|v| v[n_user..].to_vec()).collect();
            let diag = (
                ts.max_trace_drift(),
                ts.max_hermiticity_defect(),
                ts.min_eigenvalue(),
            );
            (ts.times, rows, tail, Some(diag), None)
        }
    };

    let fidelity: Vec<f64> = tail.iter().map(|p| p[0].clamp(0.0, 1.0).sqrt()).collect();
    let last = tail.last().expect("grid has at least two samples");
    let final_populations = targets
        .iter()
        .zip(last)
        .map(|(t, &p)| (t.label(), p))
        .collect();
    let table = SeriesTable {
        header,
        rows: times
            .iter()
            .zip(rows)
            .map(|(&t, r)| std::iter::once(t).chain(r).collect())
            .collect(),
    };
    let summary = RunSummary {
        scenario: cfg.id.clone(),
        tier: cfg.tier.name().into(),
        n_atoms: n,
        target: cfg.target.label(),
        final_time: *times.last().unwrap(),
        final_fidelity: *fidelity.last().unwrap(),
        final_populations,
        t_cross_95: fidelity
            .iter()
            .position(|&f| f >= CROSSING_THRESHOLD)
            .map(|k| times[k]),
        max_trace_drift: diag_summary.map(|d| d.0),
        max_hermiticity_defect: diag_summary.map(|d| d.1),
        min_eigenvalue: diag_summary.map(|d| d.2),
        n_trajectories: traj.map(|t| t.0),
        total_jumps: traj.map(|t| t.1),
        seed: traj.map(|t| t.2).or(cfg.master_seed),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    log::info!(
        "{}: final fidelity {:.6} in {:.1} s",
        cfg.id,
        summary.final_fidelity,
        summary.wall_time_s
    );
    Ok(RunOutput { table, summary })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::Io {
        path: path.into(),
        source: e,
    })
}

pub fn to_json_text<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes `<id>.csv` and `<id>.summary.json` into `dir`.
pub fn write_run(dir: &Path, out: &RunOutput) -> Result<()> {
    let id = &out.summary.scenario;
    write_file(&dir.join(format!("{id}.csv")), &out.table.to_csv())?;
    write_file(
        &dir.join(format!("{id}.summary.json")),
        &to_json_text(&out.summary)?,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub scenario: String,
    pub error: String,
    /// Integration time at which the run aborted, if it did.
    pub time: Option<f64>,
}

/// Writes `<id>.error.json` describing a failed run.
pub fn write_error(dir: &Path, id: &str, err: &CliError) -> Result<()> {
    let time = match err {
        CliError::Core(rydfb_core::Error::Integration { time, .. }) => Some(*time),
        _ => None,
    };
    let report = ErrorReport {
        scenario: id.into(),
        error: err.to_string(),
        time,
    };
    write_file(
        &dir.join(format!("{id}.error.json")),
        &to_json_text(&report)?,
    )
}
