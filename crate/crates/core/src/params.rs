//! Physical parameter records, derived effective couplings and model tiers.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};

/// Which master equation a simulation integrates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelTier {
    /// Three-level cascade atoms plus cavity, time-dependent drives.
    #[serde(rename = "FULL_3LEVEL")]
    Full3Level,
    /// Two-level effective atoms plus cavity, feedback on every cavity jump.
    #[serde(rename = "EFFECTIVE_CAVITY")]
    EffectiveCavity,
    /// As `EffectiveCavity` with a detector of efficiency η.
    #[serde(rename = "EFFECTIVE_CAVITY_ETA")]
    EffectiveCavityEta,
    /// Collective operators confined to the ≤1-excitation sector, plus cavity.
    #[serde(rename = "BLOCKADE_CAVITY")]
    BlockadeCavity,
    /// Cavity eliminated: collective damping at rate Γ plus atomic decay.
    #[serde(rename = "ATOM_COLLECTIVE")]
    AtomCollective,
    /// Collective damping only.
    #[serde(rename = "ATOM_IDEAL")]
    AtomIdeal,
    /// Atom-only feedback equation on the three-state closed subspace.
    #[serde(rename = "FEEDBACK_REDUCED")]
    FeedbackReduced,
}

impl ModelTier {
    pub const ALL: [ModelTier; 7] = [
        ModelTier::Full3Level,
        ModelTier::EffectiveCavity,
        ModelTier::EffectiveCavityEta,
        ModelTier::BlockadeCavity,
        ModelTier::AtomCollective,
        ModelTier::AtomIdeal,
        ModelTier::FeedbackReduced,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelTier::Full3Level => "FULL_3LEVEL",
            ModelTier::EffectiveCavity => "EFFECTIVE_CAVITY",
            ModelTier::EffectiveCavityEta => "EFFECTIVE_CAVITY_ETA",
            ModelTier::BlockadeCavity => "BLOCKADE_CAVITY",
            ModelTier::AtomCollective => "ATOM_COLLECTIVE",
            ModelTier::AtomIdeal => "ATOM_IDEAL",
            ModelTier::FeedbackReduced => "FEEDBACK_REDUCED",
        }
    }

    pub fn has_cavity(self) -> bool {
        matches!(
            self,
            ModelTier::Full3Level
                | ModelTier::EffectiveCavity
                | ModelTier::EffectiveCavityEta
                | ModelTier::BlockadeCavity
        )
    }

    pub fn atom_levels(self) -> usize {
        if self == ModelTier::Full3Level {
            3
        } else {
            2
        }
    }

    /// Tiers whose blockade is structural (≤1-excitation operators) rather
    /// than an explicit interaction energy.
    pub fn enforces_blockade(self) -> bool {
        matches!(
            self,
            ModelTier::BlockadeCavity
                | ModelTier::AtomCollective
                | ModelTier::AtomIdeal
                | ModelTier::FeedbackReduced
        )
    }
}

impl std::fmt::Display for ModelTier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Form of the unitary applied after each detected photon.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FeedbackVariant {
    /// Flip of atom 1 conditioned on every other atom being in `|g⟩`.
    #[default]
    Conditioned,
    /// Unconditional flip of atom 1.
    SingleAtom,
    /// Finite pulse `exp{−i[λX₁ + U|rr⟩⟨rr|]δt}` with `λ = ω/δt` (two atoms only).
    Exact { pulse_time: f64 },
}

/// Every primitive parameter of the model. Rates share one reference unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    pub n_atoms: usize,
    /// Per-atom Rabi frequency on `|g⟩ ↔ |p⟩` (Ω_R).
    pub rabi_r: Vec<f64>,
    /// Per-atom Rabi frequency on `|p⟩ ↔ |r⟩` detuned by Δ_a (Ω_B).
    pub rabi_b: Vec<f64>,
    /// Per-atom Rabi frequency on `|p⟩ ↔ |r⟩` detuned by Δ_b (Ω_c).
    pub rabi_c: Vec<f64>,
    /// Atom-cavity coupling on `|g⟩ ↔ |p⟩`.
    pub g: f64,
    pub delta_a: f64,
    pub delta_b: f64,
    /// Rydberg pair interaction.
    pub u: f64,
    pub kappa: f64,
    pub gamma_r: f64,
    pub gamma_p: f64,
    /// Feedback rotation angle ω in radians.
    pub feedback_angle: f64,
    /// Detector efficiency η.
    pub eta: f64,
    pub fock_dim: usize,
    pub include_stark: bool,
    pub blockade_on: bool,
    #[serde(default)]
    pub feedback: FeedbackVariant,
}

/// Effective couplings obtained by eliminating the intermediate level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub omega_eff_i: Vec<f64>,
    pub g_eff_i: Vec<f64>,
    pub omega_eff: f64,
    pub g_eff: f64,
    /// Collective damping rate Γ = 4 g_eff² / κ.
    pub gamma: f64,
}

impl DerivedParams {
    /// Coupling ratios Ω_eff^i / Ω_eff.
    pub fn drive_ratios(&self) -> Result<Vec<f64>> {
        ratios(&self.omega_eff_i, self.omega_eff, "Ω_eff")
    }

    /// Coupling ratios g_eff^i / g_eff.
    pub fn cavity_ratios(&self) -> Result<Vec<f64>> {
        ratios(&self.g_eff_i, self.g_eff, "g_eff")
    }
}

fn ratios(values: &[f64], scale: f64, name: &str) -> Result<Vec<f64>> {
    if scale == 0.0 {
        return Err(param_err(format!(
            "{name} = 0, collective operator undefined"
        )));
    }
    Ok(values.iter().map(|v| v / scale).collect())
}

/// Element of minimum magnitude, keeping its sign; first wins on ties.
pub fn min_magnitude(values: &[f64]) -> f64 {
    values
        .iter()
        .copied()
        .fold(None, |best: Option<f64>, v| match best {
            Some(b) if b.abs() <= v.abs() => Some(b),
            _ => Some(v),
        })
        .unwrap_or(0.0)
}

/// Effective couplings from the cascade parameters.
pub fn derive(p: &PhysicalParams) -> Result<DerivedParams> {
    if p.delta_a == 0.0 || p.delta_b == 0.0 {
        return Err(param_err("detunings Δ_a and Δ_b must be nonzero"));
    }
    let omega_eff_i: Vec<f64> = p
        .rabi_r
        .iter()
        .zip(&p.rabi_b)
        .map(|(r, b)| r * b / p.delta_a)
        .collect();
    let g_eff_i: Vec<f64> = p.rabi_c.iter().map(|c| -p.g * c / p.delta_b).collect();
    let omega_eff = min_magnitude(&omega_eff_i);
    let g_eff = min_magnitude(&g_eff_i);
    let gamma = if g_eff == 0.0 {
        0.0
    } else if p.kappa > 0.0 {
        4.0 * g_eff * g_eff / p.kappa
    } else {
        return Err(param_err("κ must be positive when g_eff ≠ 0"));
    };
    Ok(DerivedParams {
        omega_eff_i,
        g_eff_i,
        omega_eff,
        g_eff,
        gamma,
    })
}

/// Per-atom ratios `c` with `c₁ sinθ + c₂ cosθ = 0`, scaled so the
/// minimum-magnitude ratio is +1. The dark state of the resulting collective
/// operator is `cosθ|gr⟩ + sinθ|rg⟩`.
pub fn theta_ratios(theta: f64) -> Result<[f64; 2]> {
    let c = [-theta.cos(), theta.sin()];
    let m = min_magnitude(&c);
    if m.abs() < 1e-12 {
        return Err(param_err(format!(
            "θ = {theta} needs a vanishing coupling on one atom"
        )));
    }
    Ok([c[0] / m, c[1] / m])
}

impl PhysicalParams {
    /// Parameters in effective units: Δ_a = Δ_b = g = Ω_B = 1, so that
    /// Ω_eff^i = `omega_eff_i[i]` and g_eff^i = `g_eff_i[i]` exactly. Stark
    /// shifts are off since they have no physical meaning in this scaling.
    pub fn effective(
        omega_eff_i: &[f64],
        g_eff_i: &[f64],
        kappa: f64,
        u: f64,
        feedback_angle: f64,
    ) -> Result<Self> {
        let n = omega_eff_i.len();
        if g_eff_i.len() != n {
            return Err(param_err("coupling lists differ in length"));
        }
        let p = Self {
            n_atoms: n,
            rabi_r: omega_eff_i.to_vec(),
            rabi_b: vec![1.0; n],
            rabi_c: g_eff_i.iter().map(|g| -g).collect(),
            g: 1.0,
            delta_a: 1.0,
            delta_b: 1.0,
            u,
            kappa,
            gamma_r: 0.0,
            gamma_p: 0.0,
            feedback_angle,
            eta: 1.0,
            fock_dim: 2,
            include_stark: false,
            blockade_on: true,
            feedback: FeedbackVariant::Conditioned,
        };
        p.validate()?;
        Ok(p)
    }

    /// Equal couplings Ω_eff and g_eff on every atom.
    pub fn effective_uniform(
        n: usize,
        omega_eff: f64,
        g_eff: f64,
        kappa: f64,
        u: f64,
        feedback_angle: f64,
    ) -> Result<Self> {
        Self::effective(
            &vec![omega_eff; n],
            &vec![g_eff; n],
            kappa,
            u,
            feedback_angle,
        )
    }

    /// Cascade parameters with |Ω_R| = |Ω_B| = |Ω_c| = g and Δ_a = Δ_b = Δ.
    /// `ratios` scales every atom's Ω_B and Ω_c, so the effective couplings
    /// share the ratio pattern.
    pub fn cascade(
        g: f64,
        delta: f64,
        ratios: &[f64],
        kappa: f64,
        u: f64,
        feedback_angle: f64,
    ) -> Result<Self> {
        let n = ratios.len();
        let p = Self {
            n_atoms: n,
            rabi_r: vec![g; n],
            rabi_b: ratios.iter().map(|r| g * r).collect(),
            rabi_c: ratios.iter().map(|r| g * r).collect(),
            g,
            delta_a: delta,
            delta_b: delta,
            u,
            kappa,
            gamma_r: 0.0,
            gamma_p: 0.0,
            feedback_angle,
            eta: 1.0,
            fock_dim: 2,
            include_stark: true,
            blockade_on: true,
            feedback: FeedbackVariant::Conditioned,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_atoms < 2 {
            return Err(param_err(format!("n_atoms = {} < 2", self.n_atoms)));
        }
        for (name, v) in [
            ("rabi_r", &self.rabi_r),
            ("rabi_b", &self.rabi_b),
            ("rabi_c", &self.rabi_c),
        ] {
            if v.len() != self.n_atoms {
                return Err(param_err(format!(
                    "{name} has {} entries for {} atoms",
                    v.len(),
                    self.n_atoms
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(param_err(format!("{name} is not finite")));
            }
        }
        let scalars = [
            ("g", self.g),
            ("delta_a", self.delta_a),
            ("delta_b", self.delta_b),
            ("u", self.u),
            ("kappa", self.kappa),
            ("gamma_r", self.gamma_r),
            ("gamma_p", self.gamma_p),
            ("feedback_angle", self.feedback_angle),
        ];
        if let Some((name, _)) = scalars.iter().find(|(_, v)| !v.is_finite()) {
            return Err(param_err(format!("{name} is not finite")));
        }
        for (name, v) in [
            ("kappa", self.kappa),
            ("gamma_r", self.gamma_r),
            ("gamma_p", self.gamma_p),
        ] {
            if v < 0.0 {
                return Err(param_err(format!("{name} = {v} is negative")));
            }
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(param_err(format!("η = {} outside [0, 1]", self.eta)));
        }
        if self.fock_dim < 2 {
            return Err(param_err(format!("fock_dim = {} < 2", self.fock_dim)));
        }
        if let FeedbackVariant::Exact { pulse_time } = self.feedback {
            if !(pulse_time > 0.0 && pulse_time.is_finite()) {
                return Err(param_err("exact feedback needs a positive pulse time"));
            }
        }
        Ok(())
    }

    pub fn derive(&self) -> Result<DerivedParams> {
        derive(self)
    }
}
