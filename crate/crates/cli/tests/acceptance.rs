//! End-to-end acceptance criteria. Prints one PASS/FAIL line per criterion.
//!
//! Criteria listed in `EXPECTED_FAILURES` are known not to be met by this
//! model; the target fails if any other criterion fails, or if an expected
//! failure starts passing. Pass substrings as arguments to run a subset.

use std::f64::consts::{FRAC_PI_2, PI};
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::Instant;

use rydfb_core::liouvillian::assemble;
use rydfb_core::observables::{lift_atom_vector, target_state, Observable, Probe, TargetKind};
use rydfb_core::operator::{
    max_abs, CVector, DensityMatrix, C64, DENSITY_HERMITIAN_TOL, DENSITY_MIN_EIGENVALUE,
    DENSITY_TRACE_TOL,
};
use rydfb_core::params::{theta_ratios, ModelTier, PhysicalParams};
use rydfb_core::propagate::{evolve_rk4, TimeGrid};
use rydfb_core::steady::claimed_steady_state;
use rydfb_core::steady::residual_matrix;
use rydfb_core::trajectory::TrajectoryEngine;
use rydfb_scenario::presets::{fig2d_id, run_preset, sweep_preset, w_ratios, FIG2D_THETA_EIGHTHS};
use rydfb_scenario::{
    resolve_sweep, run_scenario, run_sweep, run_verification, RunOutput, RunSummary,
};
use serde_json::json;

const EXPECTED_FAILURES: [&str; 4] = [
    "bipartite_sweep",
    "blockade_speedup",
    "fock_truncation",
    "experimental_parameters",
];

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Summaries of every run so far, for the invariant checks.
static SEEN: Mutex<Vec<RunSummary>> = Mutex::new(Vec::new());

fn run_all(preset: &str) -> Vec<RunOutput> {
    let runs: Vec<RunOutput> = run_preset(preset)
        .unwrap()
        .iter()
        .map(|c| run_scenario(c, None).unwrap_or_else(|e| panic!("{}: {e}", c.id)))
        .collect();
    SEEN.lock()
        .unwrap()
        .extend(runs.iter().map(|r| r.summary.clone()));
    runs
}

fn find<'a>(runs: &'a [RunOutput], id: &str) -> &'a RunOutput {
    runs.iter()
        .find(|r| r.summary.scenario == id)
        .unwrap_or_else(|| panic!("no run {id}"))
}

fn steady_state_verification() -> Outcome {
    let omegas = [PI / 6.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0];
    let rabis = [0.25, 1.0, 5.0];
    let report = run_verification(&(2..=8).collect::<Vec<_>>(), &omegas, &rabis).unwrap();
    // the claimed state must be an exact zero of the closed form
    let strict = report.cells.iter().all(|c| c.residual_norm <= 1e-14);
    let unique = report
        .cells
        .iter()
        .all(|c| c.unique && c.fidelity >= 1.0 - 1e-8);
    let min_f = report.cells.iter().map(|c| c.fidelity).fold(1.0, f64::min);
    outcome(
        report.pass && strict && unique,
        format!(
            "{}/{} cells, max residual {:.2e}, min fidelity 1-{:.1e}",
            report.n_passed,
            report.n_cells,
            report.max_residual,
            1.0 - min_f
        ),
    )
}

fn bipartite_sweep() -> Outcome {
    let cfg = resolve_sweep(&json!({"preset": "fig2a"})).unwrap();
    assert_eq!(cfg.axes[0].values.len() * cfg.axes[1].values.len(), 121);
    let table = run_sweep(&cfg).unwrap();
    let (eff, cav) = (cfg.tiers[0], cfg.tiers[1]);
    let mut max_gap: f64 = 0.0;
    let mut worst_window: f64 = 1.0;
    for w in &cfg.axes[0].values {
        for r in &cfg.axes[1].values {
            let c = [*w, *r];
            let (a, b) = (
                table.fidelity(&c, eff).unwrap(),
                table.fidelity(&c, cav).unwrap(),
            );
            max_gap = max_gap.max((a - b).abs());
            if (0.2 * PI..=0.8 * PI).contains(w) && *r >= 0.25 {
                worst_window = worst_window.min(a.min(b));
            }
        }
    }
    outcome(
        max_gap <= 0.01 && worst_window >= 0.99,
        format!("max |F_eff - F_cav| = {max_gap:.4}, min F in window = {worst_window:.4}"),
    )
}

fn blockade_speedup() -> Outcome {
    let weak = run_all("fig2c");
    let strong = run_all("fig2c-strong");
    let at = |runs: &[RunOutput], id: &str, t: f64| {
        find(runs, id).table.value_at("population", t).unwrap()
    };
    let b9 = at(&weak, "fig2c_blockade", 9.0);
    let n9 = at(&weak, "fig2c_no_blockade", 9.0);
    let b16 = at(&strong, "fig2c_strong_blockade", 16.0);
    let n16 = at(&strong, "fig2c_strong_no_blockade", 16.0);
    let checks = [
        b9 >= 0.99,
        (0.94..=0.98).contains(&n9),
        (b16 - 0.9968).abs() <= 0.005,
        (n16 - 0.8491).abs() <= 0.01,
    ];
    outcome(
        checks.iter().all(|&c| c),
        format!(
            "t=9: blockade {b9:.4} [{}], none {n9:.4} [{}]; t=16 strong: blockade {b16:.4} [{}], none {n16:.4} [{}]",
            mark(checks[0]),
            mark(checks[1]),
            mark(checks[2]),
            mark(checks[3])
        ),
    )
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "miss"
    }
}

fn detector_inefficiency() -> Outcome {
    let runs = run_all("fig2d");
    let mut ok = true;
    let mut parts = Vec::new();
    for k in FIG2D_THETA_EIGHTHS {
        let full: &RunSummary = &find(&runs, &fig2d_id(k, 1.0)).summary;
        let half: &RunSummary = &find(&runs, &fig2d_id(k, 0.5)).summary;
        let diff = (full.final_fidelity - half.final_fidelity).abs();
        let later = matches!((full.t_cross_95, half.t_cross_95), (Some(a), Some(b)) if b > a);
        ok &= diff <= 0.005 && later;
        parts.push(format!(
            "θ={k}π/8: ΔF {diff:.1e}, t95 {:?} vs {:?}",
            full.t_cross_95.map(|t| (t * 10.0).round() / 10.0),
            half.t_cross_95.map(|t| (t * 10.0).round() / 10.0)
        ));
    }
    outcome(ok, parts.join("; "))
}

fn tripartite_switching() -> Outcome {
    let runs = run_all("fig3");
    let dfs = find(&runs, "fig3_dfs")
        .table
        .value_at("population", 30.0)
        .unwrap();
    let w = find(&runs, "fig3_w")
        .table
        .value_at("population", 30.0)
        .unwrap();
    outcome(
        dfs >= 0.98 && w >= 0.98,
        format!("t=30: P(DFS) {dfs:.5}, P(W) {w:.5}"),
    )
}

fn fock_truncation() -> Outcome {
    let runs = run_all("fig4");
    let gap = |kind: &str| {
        let a = find(&runs, &format!("fig4_{kind}_n2"))
            .table
            .column("fidelity")
            .unwrap();
        let b = find(&runs, &format!("fig4_{kind}_n5"))
            .table
            .column("fidelity")
            .unwrap();
        a.iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    let (d, w) = (gap("dfs"), gap("w"));
    outcome(
        d <= 0.01 && w <= 0.01,
        format!("max fidelity gap N=2 vs N=5: DFS {d:.4}, W {w:.4}"),
    )
}

fn experimental_parameters() -> Outcome {
    let runs = run_all("fig5d");
    let f2 = find(&runs, "fig5d_n2")
        .table
        .value_at("fidelity", 20.0)
        .unwrap();
    let f3 = find(&runs, "fig5d_n3")
        .table
        .value_at("fidelity", 20.0)
        .unwrap();
    outcome(
        (f2 - 0.9831).abs() <= 0.005 && (f3 - 0.9857).abs() <= 0.005,
        format!("g_eff t = 20: F(n=2) {f2:.4} (want 0.9831), F(n=3) {f3:.4} (want 0.9857)"),
    )
}

/// Density-matrix invariants over every run made here, cross-tier
/// consistency, dark-state invariance and trajectory agreement.
fn property_suites() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;

    for preset in ["fig2b", "fig2c", "fig5a", "fig5b", "bell-ideal"] {
        run_all(preset);
    }
    let mut worst = (0.0f64, 0.0f64, f64::INFINITY);
    let seen = SEEN.lock().unwrap();
    for s in seen.iter() {
        worst.0 = worst.0.max(s.max_trace_drift.unwrap());
        worst.1 = worst.1.max(s.max_hermiticity_defect.unwrap());
        worst.2 = worst.2.min(s.min_eigenvalue.unwrap());
    }
    let physical = worst.0 <= DENSITY_TRACE_TOL
        && worst.1 <= DENSITY_HERMITIAN_TOL
        && worst.2 >= DENSITY_MIN_EIGENVALUE;
    ok &= physical;
    parts.push(format!(
        "invariants over {} runs [{}] drift {:.1e} herm {:.1e} min eig {:.1e}",
        seen.len(),
        mark(physical),
        worst.0,
        worst.1,
        worst.2
    ));
    drop(seen);

    let p = PhysicalParams::effective_uniform(2, 0.25, 2.5, 25.0, 500.0, FRAC_PI_2).unwrap();
    let obs = [Observable::Population {
        target: TargetKind::BellAntisym,
    }];
    let grid = TimeGrid::new(0.0, 100.0, 0.005, 400).unwrap();
    let bell = |tier| {
        let l = assemble(&p, tier).unwrap();
        let probe = Probe::new(&l, 2, &obs).unwrap();
        evolve_rk4(&l, &DensityMatrix::ground(l.layout()), &grid, &probe)
            .unwrap()
            .column("pop_bell")
            .unwrap()
    };
    let a = bell(ModelTier::BlockadeCavity);
    let b = bell(ModelTier::AtomCollective);
    let gap = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    ok &= gap <= 0.02;
    parts.push(format!("adiabatic [{}] gap {gap:.4}", mark(gap <= 0.02)));

    let dark = dark_state_leak();
    ok &= dark <= 1e-14;
    parts.push(format!(
        "dark states [{}] max |L(ρ_D)| {dark:.1e}",
        mark(dark <= 1e-14)
    ));

    let (outside, checked) = trajectory_agreement();
    let traj_ok = checked > 0 && outside * 50 <= checked;
    ok &= traj_ok;
    parts.push(format!(
        "trajectories [{}] {outside}/{checked} beyond 3σ",
        mark(traj_ok)
    ));
    outcome(ok, parts.join("; "))
}

/// Largest generator image of a dark state over feedback angles and tiers.
fn dark_state_leak() -> f64 {
    let mut cases: Vec<(Vec<f64>, TargetKind)> = Vec::new();
    for n in 2..=4 {
        cases.push((vec![1.0; n], TargetKind::Dfs));
    }
    for n in 3..=4 {
        cases.push((w_ratios(n), TargetKind::W));
    }
    for k in [1, 2, 3, 5, 6, 7] {
        let theta = k as f64 * PI / 8.0;
        cases.push((
            theta_ratios(theta).unwrap().to_vec(),
            TargetKind::BellTheta { theta },
        ));
    }
    let mut worst: f64 = 0.0;
    for (ratios, kind) in cases {
        let n = ratios.len();
        for omega in [0.3, FRAC_PI_2, 2.5] {
            let omega_i: Vec<f64> = ratios.iter().map(|r| 0.7 * r).collect();
            let g_i: Vec<f64> = ratios.iter().map(|r| 2.5 * r).collect();
            let p = PhysicalParams::effective(&omega_i, &g_i, 25.0, 500.0, omega).unwrap();
            for tier in [ModelTier::AtomIdeal, ModelTier::AtomCollective] {
                let l = assemble(&p, tier).unwrap();
                let psi = lift_atom_vector(&target_state(kind, n).unwrap().vector, n, 2).unwrap();
                let rho = DensityMatrix::pure(l.layout(), &psi).unwrap();
                worst = worst.max(max_abs(&l.apply(0.0, rho.entries()).unwrap()));
            }
        }
    }
    for n in 2..=8 {
        for omega in [0.3, FRAC_PI_2, 2.5] {
            let r = residual_matrix(&claimed_steady_state(), n, omega, 1.0, 1.0).unwrap();
            worst = worst.max(max_abs(&r));
        }
    }
    worst
}

fn trajectory_agreement() -> (usize, usize) {
    let p = PhysicalParams::effective_uniform(2, 1.0, 2.5, 25.0, 500.0, FRAC_PI_2).unwrap();
    let l = assemble(&p, ModelTier::AtomIdeal).unwrap();
    let obs = [
        Observable::Population {
            target: TargetKind::BellAntisym,
        },
        Observable::Population {
            target: TargetKind::Ground,
        },
        Observable::Population {
            target: TargetKind::W,
        },
    ];
    let probe = Probe::new(&l, 2, &obs).unwrap();
    let grid = TimeGrid::new(0.0, 8.0, 0.01, 50).unwrap();
    let me = evolve_rk4(&l, &DensityMatrix::ground(l.layout()), &grid, &probe).unwrap();
    let mut psi0 = CVector::zeros(l.dim());
    psi0[0] = C64::from(1.0);
    let ens = TrajectoryEngine::new(&l, &probe, &grid)
        .unwrap()
        .ensemble(&psi0, 500, 7)
        .unwrap();
    let (mut outside, mut checked) = (0, 0);
    for k in 1..me.times.len() {
        for j in 0..obs.len() {
            let sigma = ens.std_err[k][j];
            if sigma > 0.0 {
                checked += 1;
                outside += usize::from((ens.mean[k][j] - me.values[k][j]).abs() > 3.0 * sigma);
            }
        }
    }
    (outside, checked)
}

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let criteria: [(&str, Check); 8] = [
        ("steady_state_verification", steady_state_verification),
        ("bipartite_sweep", bipartite_sweep),
        ("blockade_speedup", blockade_speedup),
        ("detector_inefficiency", detector_inefficiency),
        ("tripartite_switching", tripartite_switching),
        ("fock_truncation", fock_truncation),
        ("experimental_parameters", experimental_parameters),
        ("property_suites", property_suites),
    ];
    assert!(sweep_preset("fig2a").is_some());
    let mut unexpected = 0;
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        let expected_fail = EXPECTED_FAILURES.contains(&name);
        let note = match (o.pass, expected_fail) {
            (true, false) | (false, true) => "",
            (true, true) => " (expected to fail: now passes)",
            (false, false) => " (unexpected)",
        };
        if o.pass == expected_fail {
            unexpected += 1;
        }
        println!(
            "{} {name}: {} [{:.0} s]{note}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if unexpected > 0 {
        println!("acceptance: {unexpected} unexpected result(s)");
        ExitCode::FAILURE
    } else {
        println!("acceptance: all results as expected");
        ExitCode::SUCCESS
    }
}
