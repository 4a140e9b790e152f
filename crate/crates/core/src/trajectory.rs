//! Monte-Carlo wavefunction unraveling with feedback on detected jumps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::liouvillian::{assemble, Liouvillian};
use crate::observables::{Observable, Probe};
use crate::operator::{CMatrix, CVector, DensityMatrix, StateDiagnostics, C64};
use crate::params::{ModelTier, PhysicalParams};
use crate::propagate::TimeGrid;

/// Largest jump probability allowed in a single step.
pub const MAX_JUMP_PROBABILITY: f64 = 0.05;
const MAX_RESAMPLES: usize = 16;
const NORM_FLOOR: f64 = 1e-150;

/// Tiers whose jump operators admit an unraveling.
pub const TRAJECTORY_TIERS: [ModelTier; 4] = [
    ModelTier::EffectiveCavity,
    ModelTier::EffectiveCavityEta,
    ModelTier::AtomCollective,
    ModelTier::AtomIdeal,
];

/// Random source of trajectory `index` under `master_seed`.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// One quantum jump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: String,
    /// Whether the jump was detected and followed by the feedback pulse.
    pub fed_back: bool,
    /// Population with every atom in `|g⟩` right after the jump.
    pub ground_population: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub columns: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub diagnostics: Vec<StateDiagnostics>,
    pub final_state: CVector,
    pub events: Vec<JumpEvent>,
}

/// Mean and standard error of observables over many trajectories.
#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    pub columns: Vec<String>,
    pub mean: Vec<Vec<f64>>,
    pub std_err: Vec<Vec<f64>>,
    pub n_trajectories: usize,
    pub total_jumps: usize,
}

impl EnsembleResult {
    pub fn column(&self, name: &str) -> Option<(Vec<f64>, Vec<f64>)> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some((
            self.mean.iter().map(|r| r[j]).collect(),
            self.std_err.iter().map(|r| r[j]).collect(),
        ))
    }
}

/// Integrator shared by every trajectory of one generator.
pub struct TrajectoryEngine<'a> {
    l: &'a Liouvillian,
    probe: &'a Probe,
    grid: TimeGrid,
    branches: Vec<(String, bool)>,
    substeps: usize,
    dt: f64,
    ground_indices: Vec<usize>,
}

impl<'a> TrajectoryEngine<'a> {
    pub fn new(l: &'a Liouvillian, probe: &'a Probe, grid: &TimeGrid) -> Result<Self> {
        if !TRAJECTORY_TIERS.contains(&l.tier()) {
            return Err(input_err(format!(
                "trajectories are not available for {}",
                l.tier()
            )));
        }
        grid.validate()?;
        let d = l.dim();
        let mut rate_op = CMatrix::zeros(d, d);
        let mut branches = Vec::new();
        for ch in l.channels() {
            for (label, fed, op) in ch.branches() {
                rate_op += op.adjoint() * &op;
                branches.push((label, fed));
            }
        }
        let max_rate = rate_op
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0f64, |a, &x| a.max(x));
        let h = grid.step();
        let dt_max = if max_rate > 0.0 {
            MAX_JUMP_PROBABILITY / max_rate
        } else {
            h
        };
        let substeps = (h / dt_max).ceil().max(1.0) as usize;
        let layout = l.layout();
        let ground_indices = if l.reduced_basis().is_some() {
            vec![0]
        } else {
            let atoms = layout.atom_sites();
            (0..d)
                .filter(|&k| {
                    let lv = layout.levels_of(k);
                    atoms.iter().all(|&s| lv[s] == 0)
                })
                .collect()
        };
        Ok(Self {
            l,
            probe,
            grid: *grid,
            branches,
            substeps,
            dt: h / substeps as f64,
            ground_indices,
        })
    }

    /// Integration step actually used.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn drift(&self, t: f64, psi: &[C64], out: &mut [C64]) {
        out.fill(C64::from(0.0));
        self.l.kernel().drift_vec_acc(t, psi, out);
    }

    /// No-jump evolution `dψ/dt = K(t)ψ` over one step (RK4).
    fn drift_step(&self, t: f64, psi: &[C64], out: &mut [C64], k: &mut [Vec<C64>; 5]) {
        let h = self.dt;
        let [k1, k2, k3, k4, tmp] = k;
        self.drift(t, psi, k1);
        for i in 0..psi.len() {
            tmp[i] = psi[i] + k1[i] * (h / 2.0);
        }
        self.drift(t + h / 2.0, tmp, k2);
        for i in 0..psi.len() {
            tmp[i] = psi[i] + k2[i] * (h / 2.0);
        }
        self.drift(t + h / 2.0, tmp, k3);
        for i in 0..psi.len() {
            tmp[i] = psi[i] + k3[i] * h;
        }
        self.drift(t + h, tmp, k4);
        for i in 0..psi.len() {
            out[i] = psi[i] + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
        }
    }

    fn record(&self, psi: &CVector, traj: &mut Trajectory, t: f64) -> Result<()> {
        let rho = psi * psi.adjoint();
        traj.values.push(self.probe.evaluate(&rho)?);
        traj.diagnostics
            .push(DensityMatrix::new_unchecked(self.l.layout().clone(), rho)?.diagnostics());
        traj.times.push(t);
        Ok(())
    }

    /// Runs one trajectory from the normalized state `psi0`.
    pub fn run(&self, psi0: &CVector, rng: &mut ChaCha8Rng) -> Result<Trajectory> {
        let d = self.l.dim();
        if psi0.len() != d {
            return Err(input_err(format!(
                "initial vector of length {} for dim {d}",
                psi0.len()
            )));
        }
        if (psi0.norm() - 1.0).abs() > 1e-10 {
            return Err(input_err("initial vector is not normalized"));
        }
        let jumps = &self.l.kernel().jumps;
        let mut traj = Trajectory {
            times: Vec::new(),
            columns: self.probe.names().to_vec(),
            values: Vec::new(),
            diagnostics: Vec::new(),
            final_state: psi0.clone(),
            events: Vec::new(),
        };
        let mut psi = psi0.clone();
        let mut next = CVector::zeros(d);
        let mut scratch: [Vec<C64>; 5] = std::array::from_fn(|_| vec![C64::from(0.0); d]);
        let mut jumped: Vec<CVector> = vec![CVector::zeros(d); jumps.len()];
        let mut weights = vec![0.0; jumps.len()];
        let samples = self.grid.sample_steps();
        let mut next_sample = samples.iter().peekable();
        let total = self.grid.n_steps() * self.substeps;
        for step in 0..=total {
            let t = self.grid.t0 + step as f64 * self.dt;
            if step % self.substeps == 0 && next_sample.peek() == Some(&&(step / self.substeps)) {
                next_sample.next();
                self.record(&psi, &mut traj, t)?;
            }
            if step == total {
                break;
            }
            for (b, l) in jumps.iter().enumerate() {
                jumped[b].fill(C64::from(0.0));
                l.mul_vec_acc(C64::from(1.0), psi.as_slice(), jumped[b].as_mut_slice());
                weights[b] = jumped[b].norm_squared();
            }
            let total_rate: f64 = weights.iter().sum();
            let mut attempts = 0;
            loop {
                let r: f64 = rng.random();
                if r < total_rate * self.dt {
                    let mut pick: f64 = rng.random::<f64>() * total_rate;
                    let b = weights
                        .iter()
                        .position(|&w| {
                            pick -= w;
                            pick < 0.0
                        })
                        .unwrap_or_else(|| weights.iter().rposition(|&w| w > 0.0).unwrap());
                    psi.copy_from(&jumped[b]);
                    psi.unscale_mut(weights[b].sqrt());
                    let (label, fed) = &self.branches[b];
                    traj.events.push(JumpEvent {
                        time: t + self.dt,
                        channel: label.clone(),
                        fed_back: *fed,
                        ground_population: self
                            .ground_indices
                            .iter()
                            .map(|&k| psi[k].norm_sqr())
                            .sum(),
                    });
                    break;
                }
                self.drift_step(t, psi.as_slice(), next.as_mut_slice(), &mut scratch);
                let norm = next.norm();
                if norm.is_finite() && norm > NORM_FLOOR {
                    psi.copy_from(&next);
                    psi.unscale_mut(norm);
                    break;
                }
                attempts += 1;
                if attempts > MAX_RESAMPLES {
                    return Err(Error::Integration {
                        time: t,
                        reason: "wavefunction norm underflow".into(),
                    });
                }
            }
        }
        traj.final_state = psi;
        Ok(traj)
    }

    /// Averages `n` trajectories seeded from `(master_seed, index)` in parallel.
    pub fn ensemble(&self, psi0: &CVector, n: usize, master_seed: u64) -> Result<EnsembleResult> {
        if n == 0 {
            return Err(input_err("ensemble needs at least one trajectory"));
        }
        let runs: Vec<Trajectory> = (0..n as u64)
            .into_par_iter()
            .map(|i| self.run(psi0, &mut trajectory_rng(master_seed, i)))
            .collect::<Result<_>>()?;
        let first = &runs[0];
        let (rows, cols) = (first.times.len(), first.columns.len());
        let mut mean = vec![vec![0.0; cols]; rows];
        let mut sq = vec![vec![0.0; cols]; rows];
        for run in &runs {
            for (k, row) in run.values.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    mean[k][j] += v;
                    sq[k][j] += v * v;
                }
            }
        }
        let nf = n as f64;
        let std_err = mean
            .iter_mut()
            .zip(&sq)
            .map(|(m, s)| {
                m.iter_mut()
                    .zip(s)
                    .map(|(mj, sj)| {
                        *mj /= nf;
                        let var = if n > 1 {
                            ((sj / nf - *mj * *mj) * nf / (nf - 1.0)).max(0.0)
                        } else {
                            0.0
                        };
                        (var / nf).sqrt()
                    })
                    .collect()
            })
            .collect();
        Ok(EnsembleResult {
            times: first.times.clone(),
            columns: first.columns.clone(),
            mean,
            std_err,
            n_trajectories: n,
            total_jumps: runs.iter().map(|r| r.events.len()).sum(),
        })
    }
}

/// Single trajectory of `tier` built from `p`.
pub fn jump_trajectory(
    p: &PhysicalParams,
    tier: ModelTier,
    psi0: &CVector,
    grid: &TimeGrid,
    seed: u64,
    observables: &[Observable],
) -> Result<Trajectory> {
    let l = assemble(p, tier)?;
    let probe = Probe::new(&l, p.n_atoms, observables)?;
    TrajectoryEngine::new(&l, &probe, grid)?.run(psi0, &mut trajectory_rng(seed, 0))
}
