//! Density-matrix time evolution: fixed-step RK4 and an adaptive
//! Dormand-Prince 4(5) pair.

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::liouvillian::Liouvillian;
use crate::observables::Probe;
use crate::operator::{
    hermiticity_defect, max_abs, min_eigenvalue, CMatrix, DensityMatrix, StateDiagnostics, C64,
};

/// Trace drift corrected without comment.
pub const SILENT_DRIFT: f64 = 1e-12;
/// Trace drift beyond which integration aborts.
pub const ABORT_DRIFT: f64 = 1e-6;
/// Smallest step the adaptive integrator accepts.
pub const MIN_STEP: f64 = 1e-12;

/// Time window, step and output decimation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    #[serde(default = "one")]
    pub sample_every: usize,
}

fn one() -> usize {
    1
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, dt: f64, sample_every: usize) -> Result<Self> {
        let g = Self {
            t0,
            t1,
            dt,
            sample_every,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0.is_finite() && self.t1.is_finite() && self.t1 > self.t0) {
            return Err(input_err(format!(
                "time window [{}, {}] is empty",
                self.t0, self.t1
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(input_err(format!("step {} must be positive", self.dt)));
        }
        if self.sample_every == 0 {
            return Err(input_err("sample_every must be at least 1"));
        }
        Ok(())
    }

    /// Number of equal steps of size at most `dt` covering the window.
    pub fn n_steps(&self) -> usize {
        (((self.t1 - self.t0) / self.dt) * (1.0 - 1e-12))
            .ceil()
            .max(1.0) as usize
    }

    /// Actual step size `(t1 − t0)/n_steps`.
    pub fn step(&self) -> f64 {
        (self.t1 - self.t0) / self.n_steps() as f64
    }

    /// Step indices at which samples are taken; always includes both ends.
    pub fn sample_steps(&self) -> Vec<usize> {
        let n = self.n_steps();
        let mut s: Vec<usize> = (0..=n).step_by(self.sample_every).collect();
        if *s.last().unwrap() != n {
            s.push(n);
        }
        s
    }

    pub fn sample_times(&self) -> Vec<f64> {
        let h = self.step();
        self.sample_steps()
            .iter()
            .map(|&k| self.t0 + k as f64 * h)
            .collect()
    }
}

/// Sampled observables along one evolution.
#[derive(Clone, Debug)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub columns: Vec<String>,
    /// `values[k][j]`: observable `j` at `times[k]`.
    pub values: Vec<Vec<f64>>,
    /// State diagnostics at each sample, taken before re-Hermitization.
    pub diagnostics: Vec<StateDiagnostics>,
    pub final_state: DensityMatrix,
}

impl TimeSeries {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.values.iter().map(|row| row[j]).collect())
    }

    /// Value of `name` at the sample nearest to `t`.
    pub fn value_at(&self, name: &str, t: f64) -> Option<f64> {
        let j = self.columns.iter().position(|c| c == name)?;
        let k = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))?
            .0;
        Some(self.values[k][j])
    }

    pub fn last(&self, name: &str) -> Option<f64> {
        let j = self.columns.iter().position(|c| c == name)?;
        self.values.last().map(|row| row[j])
    }

    /// First sampled time at which `name` reaches `threshold`.
    pub fn first_crossing(&self, name: &str, threshold: f64) -> Option<f64> {
        let col = self.column(name)?;
        col.iter()
            .position(|&v| v >= threshold)
            .map(|k| self.times[k])
    }

    pub fn max_trace_drift(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.trace_drift)
            .fold(0.0, f64::max)
    }

    pub fn max_hermiticity_defect(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.hermiticity_defect)
            .fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }
}

fn check_initial(l: &Liouvillian, rho0: &DensityMatrix) -> Result<()> {
    if rho0.layout() != l.layout() {
        return Err(input_err(format!(
            "initial state of dim {} does not match the {} layout (dim {})",
            rho0.dim(),
            l.tier(),
            l.dim()
        )));
    }
    rho0.validate()
}

/// Largest step accepted for a generator with drive frequencies.
pub fn max_stable_step(l: &Liouvillian) -> Option<f64> {
    l.is_time_dependent()
        .then(|| 2.0 * std::f64::consts::PI / (20.0 * l.max_frequency()))
}

/// Collects samples, applying the renormalization policy.
struct Recorder<'a> {
    probe: &'a Probe,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    diagnostics: Vec<StateDiagnostics>,
}

impl<'a> Recorder<'a> {
    fn new(probe: &'a Probe) -> Self {
        Self {
            probe,
            times: Vec::new(),
            values: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    /// Cleans `rho` in place and records it.
    fn sample(&mut self, t: f64, rho: &mut CMatrix) -> Result<()> {
        if rho.iter().any(|z| !z.is_finite()) {
            return Err(Error::Integration {
                time: t,
                reason: "state is no longer finite".into(),
            });
        }
        let herm = hermiticity_defect(rho);
        *rho = (&*rho + rho.adjoint()).unscale(2.0);
        let trace = rho.trace().re;
        let drift = (trace - 1.0).abs();
        if drift > ABORT_DRIFT {
            return Err(Error::Integration {
                time: t,
                reason: format!(
                    "trace drift {drift:.3e} exceeds {ABORT_DRIFT:.0e}; step too large"
                ),
            });
        }
        if drift > SILENT_DRIFT {
            log::debug!("t = {t}: renormalizing trace drift {drift:.3e}");
            *rho = rho.unscale(trace);
        }
        self.diagnostics.push(StateDiagnostics {
            trace_drift: drift,
            hermiticity_defect: herm,
            min_eigenvalue: min_eigenvalue(rho),
        });
        self.values.push(self.probe.evaluate(rho)?);
        self.times.push(t);
        Ok(())
    }

    fn finish(self, l: &Liouvillian, rho: CMatrix) -> Result<TimeSeries> {
        Ok(TimeSeries {
            times: self.times,
            columns: self.probe.names().to_vec(),
            values: self.values,
            diagnostics: self.diagnostics,
            final_state: DensityMatrix::new_unchecked(l.layout().clone(), rho)?,
        })
    }
}

/// `y += a·x`.
fn axpy(y: &mut CMatrix, a: f64, x: &CMatrix) {
    for (yi, xi) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *yi += xi * a;
    }
}

/// Classic fixed-step fourth-order Runge-Kutta.
pub fn evolve_rk4(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
    probe: &Probe,
) -> Result<TimeSeries> {
    check_initial(l, rho0)?;
    grid.validate()?;
    let h = grid.step();
    if let Some(limit) = max_stable_step(l) {
        if h > limit * (1.0 + 1e-12) {
            return Err(input_err(format!(
                "step {h:.3e} exceeds 2π/(20·{:.4e}) = {limit:.3e} for a time-dependent generator",
                l.max_frequency()
            )));
        }
    }
    let d = l.dim();
    let n = grid.n_steps();
    let samples = grid.sample_steps();
    let mut next_sample = samples.iter().peekable();
    let mut rec = Recorder::new(probe);
    let mut rho = rho0.entries().clone();
    let (mut k1, mut k2, mut k3, mut k4) = (
        CMatrix::zeros(d, d),
        CMatrix::zeros(d, d),
        CMatrix::zeros(d, d),
        CMatrix::zeros(d, d),
    );
    let mut tmp = CMatrix::zeros(d, d);
    let report_every = (n / 10).max(1);
    for step in 0..=n {
        let t = grid.t0 + step as f64 * h;
        if next_sample.peek() == Some(&&step) {
            next_sample.next();
            rec.sample(t, &mut rho)?;
        }
        if step == n {
            break;
        }
        if step > 0 && step % report_every == 0 {
            log::trace!("{}: step {step}/{n}", l.tier());
        }
        l.apply_into(t, &rho, true, &mut k1);
        tmp.copy_from(&rho);
        axpy(&mut tmp, h / 2.0, &k1);
        l.apply_into(t + h / 2.0, &tmp, true, &mut k2);
        tmp.copy_from(&rho);
        axpy(&mut tmp, h / 2.0, &k2);
        l.apply_into(t + h / 2.0, &tmp, true, &mut k3);
        tmp.copy_from(&rho);
        axpy(&mut tmp, h, &k3);
        l.apply_into(t + h, &tmp, true, &mut k4);
        k2 += &k3;
        k1 += &k4;
        axpy(&mut rho, h / 6.0, &k1);
        axpy(&mut rho, h / 3.0, &k2);
        // keep ρ exactly Hermitian so the fast path stays valid
        tmp.copy_from(&rho);
        rho += tmp.adjoint();
        rho.unscale_mut(2.0);
    }
    rec.finish(l, rho)
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [&[f64]; 7] = [
    &[],
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
    ],
    &[
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
    &[
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights minus the embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Adaptive Dormand-Prince 4(5) with mixed absolute/relative error `tol`.
/// Samples are taken at the same instants as [`evolve_rk4`] on `grid`; the
/// grid's `dt` only sets the sample spacing.
pub fn evolve_adaptive(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
    tol: f64,
    probe: &Probe,
) -> Result<TimeSeries> {
    check_initial(l, rho0)?;
    grid.validate()?;
    if !(1e-12..=1e-4).contains(&tol) {
        return Err(input_err(format!(
            "tolerance {tol:.1e} outside [1e-12, 1e-4]"
        )));
    }
    let d = l.dim();
    let mut rec = Recorder::new(probe);
    let mut rho = rho0.entries().clone();
    let mut k: Vec<CMatrix> = (0..7).map(|_| CMatrix::zeros(d, d)).collect();
    let mut stage = CMatrix::zeros(d, d);
    let mut err = CMatrix::zeros(d, d);
    let mut t = grid.t0;
    let mut h = max_stable_step(l)
        .unwrap_or(f64::INFINITY)
        .min((grid.t1 - grid.t0) * 1e-3);
    let mut fsal = false;
    for target in grid.sample_times() {
        while t < target - 1e-14 * target.abs().max(1.0) {
            let hh = h.min(target - t);
            if !fsal {
                l.apply_into(t, &rho, true, &mut k[0]);
            }
            for s in 1..7 {
                stage.copy_from(&rho);
                for (j, a) in A[s].iter().enumerate() {
                    if *a != 0.0 {
                        axpy(&mut stage, hh * a, &k[j]);
                    }
                }
                l.apply_into(t + C[s] * hh, &stage, true, &mut k[s]);
            }
            // `stage` now holds the fifth-order solution
            err.fill(C64::from(0.0));
            for (j, e) in E.iter().enumerate() {
                if *e != 0.0 {
                    axpy(&mut err, hh * e, &k[j]);
                }
            }
            let scale = tol * (1.0 + max_abs(&rho).max(max_abs(&stage)));
            let ratio = max_abs(&err) / scale;
            if !ratio.is_finite() {
                return Err(Error::Integration {
                    time: t,
                    reason: "non-finite error estimate".into(),
                });
            }
            if ratio <= 1.0 {
                t += hh;
                rho.copy_from(&stage);
                let tmp = rho.adjoint();
                rho += tmp;
                rho.unscale_mut(2.0);
                k.swap(0, 6);
                fsal = true;
            } else {
                fsal = false;
            }
            let factor = if ratio == 0.0 {
                5.0
            } else {
                (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
            };
            if hh < h && ratio <= 1.0 {
                // a step shortened to hit a sample time says nothing about h
                h = h.max(hh * factor);
            } else {
                h = hh * factor;
            }
            if let Some(limit) = max_stable_step(l) {
                h = h.min(limit);
            }
            if h < MIN_STEP {
                return Err(Error::Integration {
                    time: t,
                    reason: format!("step size underflow ({h:.3e})"),
                });
            }
        }
        // re-Hermitization and renormalization invalidate the cached derivative
        let before = rho.clone();
        rec.sample(target, &mut rho)?;
        if rho != before {
            fsal = false;
        }
    }
    rec.finish(l, rho)
}
