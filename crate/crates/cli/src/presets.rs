//! Named parameter sets for the built-in scenarios.
//!
//! Rates are in units of Γ = 4g_eff²/κ for the effective-unit presets and of
//! g_eff for the cascade presets.

use std::f64::consts::{FRAC_PI_2, PI};

use rydfb_core::observables::TargetKind;
use rydfb_core::params::{theta_ratios, FeedbackVariant, ModelTier, PhysicalParams};
use rydfb_core::propagate::TimeGrid;

use crate::config::{Axis, InitialState, Integrator, ScenarioConfig, SweepConfig};

pub const RUN_PRESETS: [&str; 11] = [
    "fig2b",
    "fig2c",
    "fig2c-strong",
    "fig2d",
    "fig3",
    "fig4",
    "fig5a",
    "fig5b",
    "fig5c",
    "fig5d",
    "bell-ideal",
];

pub const SWEEP_PRESETS: [&str; 2] = ["fig2a", "fig2a-coarse"];

/// Columns recorded by most presets.
fn standard_outputs() -> Vec<String> {
    [
        "fidelity",
        "population",
        "pop:ground",
        "double_rydberg",
        "photons",
        "trace_drift",
        "herm_defect",
        "min_eig",
    ]
    .map(String::from)
    .to_vec()
}

fn grid(t1: f64, dt: f64, sample_dt: f64) -> TimeGrid {
    let every = (sample_dt / dt).round().max(1.0) as usize;
    TimeGrid::new(0.0, t1, dt, every).expect("preset grid")
}

fn scenario(
    id: &str,
    tier: ModelTier,
    params: PhysicalParams,
    target: TargetKind,
    grid: TimeGrid,
) -> ScenarioConfig {
    ScenarioConfig {
        id: id.into(),
        tier,
        params,
        initial_state: InitialState::Ground,
        target,
        grid,
        outputs: standard_outputs(),
        n_trajectories: None,
        master_seed: None,
        integrator: Integrator::Rk4,
        slow: false,
    }
}

/// κ = 25Γ, g_eff = 2.5Γ, U = 500Γ, two atoms, single-atom feedback.
fn bipartite(rabi: f64, omega: f64) -> PhysicalParams {
    let mut p =
        PhysicalParams::effective_uniform(2, rabi, 2.5, 25.0, 500.0, omega).expect("preset params");
    p.fock_dim = 3;
    p.feedback = FeedbackVariant::SingleAtom;
    p
}

fn fig2b() -> Vec<ScenarioConfig> {
    let p = bipartite(10.0, FRAC_PI_2);
    let g = grid(100.0, 1e-3, 0.1);
    let mut runs = vec![scenario(
        "fig2b_effective",
        ModelTier::AtomIdeal,
        p.clone(),
        TargetKind::BellAntisym,
        g,
    )];
    for n in [2, 5] {
        let mut q = p.clone();
        q.fock_dim = n;
        runs.push(scenario(
            &format!("fig2b_cavity_n{n}"),
            ModelTier::EffectiveCavity,
            q,
            TargetKind::BellAntisym,
            g,
        ));
    }
    runs
}

fn fig2c(rabi: f64, prefix: &str) -> Vec<ScenarioConfig> {
    let g = grid(20.0, 1e-3, 0.1);
    let on = bipartite(rabi, FRAC_PI_2);
    let mut off = on.clone();
    off.u = 0.0;
    off.blockade_on = false;
    vec![
        scenario(
            &format!("{prefix}_blockade"),
            ModelTier::EffectiveCavity,
            on,
            TargetKind::BellAntisym,
            g,
        ),
        scenario(
            &format!("{prefix}_no_blockade"),
            ModelTier::EffectiveCavity,
            off,
            TargetKind::BellAntisym,
            g,
        ),
    ]
}

/// θ = kπ/8 for the listed k, with unit and half detection efficiency.
pub const FIG2D_THETA_EIGHTHS: [u32; 4] = [1, 2, 3, 6];
pub const FIG2D_ETAS: [f64; 2] = [1.0, 0.5];

pub fn fig2d_id(k: u32, eta: f64) -> String {
    format!("fig2d_theta{k}pi8_eta{eta}")
}

fn fig2d() -> Vec<ScenarioConfig> {
    let g = grid(400.0, 1e-3, 0.1);
    let mut runs = Vec::new();
    for k in FIG2D_THETA_EIGHTHS {
        let theta = k as f64 * PI / 8.0;
        let r = theta_ratios(theta).expect("θ away from the axes");
        for eta in FIG2D_ETAS {
            let mut p = PhysicalParams::effective(
                &[0.25 * r[0], 0.25 * r[1]],
                &[2.5 * r[0], 2.5 * r[1]],
                25.0,
                500.0,
                FRAC_PI_2,
            )
            .expect("preset params");
            p.fock_dim = 3;
            p.feedback = FeedbackVariant::SingleAtom;
            p.eta = eta;
            runs.push(scenario(
                &fig2d_id(k, eta),
                ModelTier::EffectiveCavityEta,
                p,
                TargetKind::BellTheta { theta },
                g,
            ));
        }
    }
    runs
}

/// Couplings whose dark state is W(n) rather than DFS(n).
pub fn w_ratios(n: usize) -> Vec<f64> {
    let mut r = vec![1.0; n];
    r[0] = -(n as f64 - 1.0);
    r
}

fn fig3() -> Vec<ScenarioConfig> {
    let g = grid(40.0, 2e-4, 0.1);
    let mut runs = Vec::new();
    for (name, target, ratios) in [
        ("dfs", TargetKind::Dfs, vec![1.0; 3]),
        ("w", TargetKind::W, w_ratios(3)),
    ] {
        for (suffix, omega) in [("", FRAC_PI_2), ("_no_feedback", 0.0)] {
            let omega_i: Vec<f64> = ratios.iter().map(|r| 5.0 * r).collect();
            let p = PhysicalParams::effective(&omega_i, &omega_i, 100.0, 2500.0, omega)
                .expect("preset params");
            let mut s = scenario(
                &format!("fig3_{name}{suffix}"),
                ModelTier::EffectiveCavity,
                p,
                target,
                g,
            );
            s.outputs.push(
                if target == TargetKind::Dfs {
                    "pop:w"
                } else {
                    "pop:dfs"
                }
                .into(),
            );
            runs.push(s);
        }
    }
    runs
}

fn fig4() -> Vec<ScenarioConfig> {
    let g = grid(30.0, 5e-4, 0.1);
    let mut runs = Vec::new();
    for (name, target, ratios) in [
        ("dfs", TargetKind::Dfs, vec![1.0; 4]),
        ("w", TargetKind::W, w_ratios(4)),
    ] {
        for fock in [2, 5] {
            let omega_i: Vec<f64> = ratios.to_vec();
            let g_i: Vec<f64> = ratios.iter().map(|r| 2.5 * r).collect();
            let mut p = PhysicalParams::effective(&omega_i, &g_i, 25.0, 500.0, FRAC_PI_2)
                .expect("preset params");
            p.fock_dim = fock;
            runs.push(scenario(
                &format!("fig4_{name}_n{fock}"),
                ModelTier::EffectiveCavity,
                p,
                target,
                g,
            ));
        }
    }
    runs
}

/// Cascade parameters in units of g_eff: g = 80, Δ = 80g, Ω = g_eff, κ = 10g_eff, U = 200g_eff.
fn cascade_strong(ratios: &[f64]) -> PhysicalParams {
    PhysicalParams::cascade(80.0, 6400.0, ratios, 10.0, 200.0, FRAC_PI_2).expect("preset params")
}

fn fig5a() -> Vec<ScenarioConfig> {
    let g = grid(40.0, 1e-3, 0.1);
    let mut runs = Vec::new();
    for (b, blockade) in [("blockade", true), ("no_blockade", false)] {
        for (s, stark) in [("stark", true), ("no_stark", false)] {
            let mut p = cascade_strong(&[1.0, 1.0]);
            p.include_stark = stark;
            if !blockade {
                p.blockade_on = false;
                p.u = 0.0;
            }
            runs.push(scenario(
                &format!("fig5a_{b}_{s}"),
                ModelTier::EffectiveCavity,
                p,
                TargetKind::BellAntisym,
                g,
            ));
        }
    }
    runs
}

fn fig5b() -> Vec<ScenarioConfig> {
    let g = grid(40.0, 1e-3, 0.1);
    let mut runs = Vec::new();
    for (name, target, ratios) in [
        ("dfs", TargetKind::Dfs, vec![1.0; 3]),
        ("w", TargetKind::W, w_ratios(3)),
    ] {
        for (s, stark) in [("stark", true), ("no_stark", false)] {
            let mut p = cascade_strong(&ratios);
            p.include_stark = stark;
            runs.push(scenario(
                &format!("fig5b_{name}_{s}"),
                ModelTier::EffectiveCavity,
                p,
                target,
                g,
            ));
        }
    }
    runs
}

/// Step for the three-level tier: half the stability bound 2π/(20·Δ).
fn full_tier_grid(delta: f64, t1: f64) -> TimeGrid {
    grid(t1, 2.0 * PI / (40.0 * delta), 0.1)
}

fn full_tier_runs(
    prefix: &str,
    base: impl Fn(&[f64]) -> PhysicalParams,
    delta: f64,
) -> Vec<ScenarioConfig> {
    let g = full_tier_grid(delta, 20.0);
    [
        ("n2", TargetKind::BellAntisym, vec![1.0; 2]),
        ("n3", TargetKind::Dfs, vec![1.0; 3]),
    ]
    .into_iter()
    .map(|(name, target, ratios)| {
        let mut s = scenario(
            &format!("{prefix}_{name}"),
            ModelTier::Full3Level,
            base(&ratios),
            target,
            g,
        );
        s.slow = true;
        s
    })
    .collect()
}

fn fig5c() -> Vec<ScenarioConfig> {
    full_tier_runs(
        "fig5c",
        |r| {
            let mut p = cascade_strong(r);
            p.gamma_r = 0.008;
            p.gamma_p = 8.0;
            p
        },
        6400.0,
    )
}

/// Experimental parameters: g = 2π×14.4 MHz, Δ = 80g, |Ω| = g, κ = 2π×0.66 MHz,
/// γ_p = 2π×3 MHz, γ_r = 2π×1 kHz, expressed in g_eff = g/80.
pub fn experimental_params(ratios: &[f64]) -> PhysicalParams {
    let g_eff_mhz = 14.4 / 80.0;
    let mut p = PhysicalParams::cascade(80.0, 6400.0, ratios, 0.66 / g_eff_mhz, 200.0, FRAC_PI_2)
        .expect("preset params");
    p.gamma_p = 3.0 / g_eff_mhz;
    p.gamma_r = 1e-3 / g_eff_mhz;
    p
}

fn fig5d() -> Vec<ScenarioConfig> {
    full_tier_runs("fig5d", experimental_params, 6400.0)
}

/// Ideal collective damping with the two-atom Bell target; quick smoke run.
fn bell_ideal() -> Vec<ScenarioConfig> {
    let p = bipartite(0.25, FRAC_PI_2);
    vec![scenario(
        "bell-ideal",
        ModelTier::AtomIdeal,
        p,
        TargetKind::BellAntisym,
        grid(40.0, 5e-3, 0.5),
    )]
}

pub fn run_preset(name: &str) -> Option<Vec<ScenarioConfig>> {
    Some(match name {
        "fig2b" => fig2b(),
        "fig2c" => fig2c(2.5, "fig2c"),
        "fig2c-strong" => fig2c(10.0, "fig2c_strong"),
        "fig2d" => fig2d(),
        "fig3" => fig3(),
        "fig4" => fig4(),
        "fig5a" => fig5a(),
        "fig5b" => fig5b(),
        "fig5c" => fig5c(),
        "fig5d" => fig5d(),
        "bell-ideal" => bell_ideal(),
        _ => return None,
    })
}

/// Eleven evenly spaced samples of `[lo, hi]`.
fn eleven(lo: f64, hi: f64) -> Vec<f64> {
    (0..11).map(|k| lo + (hi - lo) * k as f64 / 10.0).collect()
}

fn fig2a(points: usize) -> SweepConfig {
    let mut base = scenario(
        "fig2a",
        ModelTier::EffectiveCavity,
        bipartite(0.25, FRAC_PI_2),
        TargetKind::BellAntisym,
        TimeGrid::new(0.0, 100.0, 1e-3, 100_000).expect("preset grid"),
    );
    base.outputs = vec!["fidelity".into()];
    let pick = |v: Vec<f64>| -> Vec<f64> {
        if points >= v.len() {
            v
        } else {
            (0..points)
                .map(|k| v[k * (v.len() - 1) / (points - 1).max(1)])
                .collect()
        }
    };
    SweepConfig {
        id: if points >= 11 {
            "fig2a".into()
        } else {
            "fig2a-coarse".into()
        },
        base,
        axes: vec![
            Axis {
                param: "feedback_angle".into(),
                values: pick(eleven(0.05 * PI, 0.95 * PI)),
            },
            Axis {
                param: "rabi_r".into(),
                values: pick(eleven(0.1, 1.0)),
            },
        ],
        tiers: vec![ModelTier::AtomIdeal, ModelTier::EffectiveCavity],
    }
}

pub fn sweep_preset(name: &str) -> Option<SweepConfig> {
    match name {
        "fig2a" => Some(fig2a(11)),
        "fig2a-coarse" => Some(fig2a(3)),
        _ => None,
    }
}
