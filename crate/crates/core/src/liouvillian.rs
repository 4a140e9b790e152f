//! Generators `ρ ↦ dρ/dt` for every model tier.

use crate::error::{dim_err, input_err, param_err, Result};
use crate::model::{
    build_effective_hamiltonian, build_feedback_unitary, build_stark_hamiltonian,
    cavity_annihilation, check_matched_ratios, collective_lowering, columns, full_hamiltonian,
    reduced_basis, site_transition, tier_layout, unitarity_defect, Hamiltonian,
};
use crate::operator::{
    rydberg_level, CMatrix, CVector, OperatorMatrix, SpaceLayout, C64, GROUND, I, INTERMEDIATE,
};
use crate::params::{FeedbackVariant, ModelTier, PhysicalParams};
use crate::sparse::Sparse;

const UNITARY_TOL: f64 = 1e-10;
/// Largest Hilbert dimension for which a dense superoperator is exported.
pub const MAX_DENSE_DIM: usize = 64;

fn check_shapes(c: &OperatorMatrix, rho: &CMatrix) -> Result<()> {
    if rho.nrows() != c.dim() || rho.ncols() != c.dim() {
        return Err(dim_err(format!(
            "{}x{} state for operator of dim {}",
            rho.nrows(),
            rho.ncols(),
            c.dim()
        )));
    }
    Ok(())
}

/// `D[c]ρ = cρc† − ½(c†cρ + ρc†c)`.
pub fn dissipator(c: &OperatorMatrix, rho: &CMatrix) -> Result<CMatrix> {
    let (jump, null) = split_dissipator(c, rho)?;
    Ok(jump - null)
}

/// Jump part `cρc†` and null-measurement part `½(c†cρ + ρc†c)`.
pub fn split_dissipator(c: &OperatorMatrix, rho: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    check_shapes(c, rho)?;
    let c = c.entries();
    let cdc = c.adjoint() * c;
    let jump = c * rho * c.adjoint();
    let null = (&cdc * rho + rho * &cdc).unscale(2.0);
    Ok((jump, null))
}

/// `D[u·c]ρ` for a unitary feedback `u`.
pub fn feedback_dissipator(
    u: &OperatorMatrix,
    c: &OperatorMatrix,
    rho: &CMatrix,
) -> Result<CMatrix> {
    check_shapes(c, rho)?;
    if u.layout() != c.layout() {
        return Err(dim_err("feedback and jump operator on different layouts"));
    }
    let defect = u.unitarity_defect();
    if defect > UNITARY_TOL {
        return Err(input_err(format!(
            "feedback operator is not unitary (defect {defect:.3e})"
        )));
    }
    let (jump, null) = split_dissipator(c, rho)?;
    let u = u.entries();
    Ok(u * jump * u.adjoint() - null)
}

/// One monitored decay channel. With efficiency η the channel contributes
/// `η·D[U c] + (1−η)·D[c]`; without feedback it is plain `D[c]`.
#[derive(Clone, Debug)]
pub struct JumpChannel {
    pub label: String,
    /// Jump operator with the rate folded in (`√rate · c`).
    pub op: CMatrix,
    pub feedback: Option<CMatrix>,
    pub efficiency: f64,
}

impl JumpChannel {
    pub fn plain(label: impl Into<String>, rate: f64, op: CMatrix) -> Self {
        Self {
            label: label.into(),
            op: op * C64::from(rate.sqrt()),
            feedback: None,
            efficiency: 1.0,
        }
    }

    /// The distinct Kraus-like branches `(label, feedback applied, operator)`.
    pub fn branches(&self) -> Vec<(String, bool, CMatrix)> {
        match &self.feedback {
            None => vec![(self.label.clone(), false, self.op.clone())],
            Some(u) => {
                let mut out = Vec::new();
                if self.efficiency > 0.0 {
                    out.push((
                        self.label.clone(),
                        true,
                        u * &self.op * C64::from(self.efficiency.sqrt()),
                    ));
                }
                if self.efficiency < 1.0 {
                    out.push((
                        format!("{}:undetected", self.label),
                        false,
                        &self.op * C64::from((1.0 - self.efficiency).sqrt()),
                    ));
                }
                out
            }
        }
    }
}

/// Precompiled sparse form of the generator:
/// `dρ/dt = K(t)ρ + ρK(t)† + Σ_b L_b ρ L_b†` with `K = −iH − ½Σ c†c`.
#[derive(Clone, Debug)]
pub(crate) struct Kernel {
    pub drift: Sparse,
    /// `(frequency, −i·A, −i·A†)` for each drive `e^{ift}A + h.c.`.
    pub drives: Vec<(f64, Sparse, Sparse)>,
    pub jumps: Vec<Sparse>,
}

impl Kernel {
    fn compile(h: &Hamiltonian, channels: &[JumpChannel]) -> Self {
        let mut drift = &h.static_part * (-I);
        for ch in channels {
            drift -= (ch.op.adjoint() * &ch.op).unscale(2.0);
        }
        let drives = h
            .drives
            .iter()
            .map(|d| {
                (
                    d.frequency,
                    Sparse::from_dense(&(&d.op * (-I))),
                    Sparse::from_dense(&(d.op.adjoint() * (-I))),
                )
            })
            .collect();
        let jumps = channels
            .iter()
            .flat_map(|c| c.branches())
            .map(|(_, _, op)| Sparse::from_dense(&op))
            .collect();
        Self {
            drift: Sparse::from_dense(&drift),
            drives,
            jumps,
        }
    }

    /// `out += K(t)·m`.
    pub fn drift_acc(&self, t: f64, m: &CMatrix, out: &mut CMatrix) {
        self.drift.mul_acc(C64::from(1.0), m, out);
        for (f, a, ad) in &self.drives {
            let ph = C64::from_polar(1.0, f * t);
            a.mul_acc(ph, m, out);
            ad.mul_acc(ph.conj(), m, out);
        }
    }

    /// `out += m·K(t)†`.
    pub fn drift_right_adj_acc(&self, t: f64, m: &CMatrix, out: &mut CMatrix) {
        self.drift.right_adj_acc(C64::from(1.0), m, out);
        for (f, a, ad) in &self.drives {
            let ph = C64::from_polar(1.0, f * t);
            a.right_adj_acc(ph, m, out);
            ad.right_adj_acc(ph.conj(), m, out);
        }
    }

    /// `out += K(t)·v` for a state vector.
    pub fn drift_vec_acc(&self, t: f64, v: &[C64], out: &mut [C64]) {
        self.drift.mul_vec_acc(C64::from(1.0), v, out);
        for (f, a, ad) in &self.drives {
            let ph = C64::from_polar(1.0, f * t);
            a.mul_vec_acc(ph, v, out);
            ad.mul_vec_acc(ph.conj(), v, out);
        }
    }
}

/// Assembled generator of one tier.
#[derive(Clone, Debug)]
pub struct Liouvillian {
    tier: ModelTier,
    layout: SpaceLayout,
    hamiltonian: Hamiltonian,
    channels: Vec<JumpChannel>,
    reduced_basis: Option<[CVector; 3]>,
    kernel: Kernel,
    scratch_dim: usize,
}

impl Liouvillian {
    /// Generator from explicit parts.
    pub fn from_parts(
        tier: ModelTier,
        hamiltonian: Hamiltonian,
        channels: Vec<JumpChannel>,
    ) -> Result<Self> {
        let layout = hamiltonian.layout.clone();
        let d = layout.total_dim();
        for ch in &channels {
            if ch.op.nrows() != d || ch.op.ncols() != d {
                return Err(dim_err(format!("channel {} has wrong dimension", ch.label)));
            }
            if !(0.0..=1.0).contains(&ch.efficiency) {
                return Err(input_err(format!(
                    "channel {} efficiency outside [0, 1]",
                    ch.label
                )));
            }
            if let Some(u) = &ch.feedback {
                let defect = unitarity_defect(u);
                if defect > UNITARY_TOL {
                    return Err(input_err(format!(
                        "feedback on {} is not unitary ({defect:.3e})",
                        ch.label
                    )));
                }
            }
        }
        let kernel = Kernel::compile(&hamiltonian, &channels);
        Ok(Self {
            tier,
            layout,
            hamiltonian,
            channels,
            reduced_basis: None,
            kernel,
            scratch_dim: d,
        })
    }

    pub fn tier(&self) -> ModelTier {
        self.tier
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.scratch_dim
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[JumpChannel] {
        &self.channels
    }

    /// For the reduced tier: the basis vectors on the two-level atom space.
    pub fn reduced_basis(&self) -> Option<&[CVector; 3]> {
        self.reduced_basis.as_ref()
    }

    pub fn is_time_dependent(&self) -> bool {
        self.hamiltonian.is_time_dependent()
    }

    pub fn max_frequency(&self) -> f64 {
        self.hamiltonian.max_frequency()
    }

    pub(crate) fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// `dρ/dt` at time `t` for an arbitrary square matrix.
    pub fn apply(&self, t: f64, rho: &CMatrix) -> Result<CMatrix> {
        let d = self.dim();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(dim_err(format!(
                "{}x{} state for generator of dim {d}",
                rho.nrows(),
                rho.ncols()
            )));
        }
        let mut out = CMatrix::zeros(d, d);
        self.apply_into(t, rho, false, &mut out);
        Ok(out)
    }

    /// Writes `dρ/dt` into `out`. When `hermitian` is set, `ρ = ρ†` is
    /// assumed and half of the drift products are skipped.
    pub fn apply_into(&self, t: f64, rho: &CMatrix, hermitian: bool, out: &mut CMatrix) {
        let d = self.dim();
        let zero = C64::from(0.0);
        // out = Kρ + ρK†; for Hermitian ρ, Kρ = (ρK†)†
        let mut rk = CMatrix::zeros(d, d);
        self.kernel.drift_right_adj_acc(t, rho, &mut rk);
        if hermitian {
            for j in 0..d {
                for i in 0..d {
                    out[(i, j)] = rk[(i, j)] + rk[(j, i)].conj();
                }
            }
        } else {
            out.copy_from(&rk);
            self.kernel.drift_acc(t, rho, out);
        }
        // (Lρ)L† = (L(Lρ)†)†, accumulated so a single adjoint is taken
        let mut wide: Option<(CMatrix, CMatrix)> = None;
        for l in &self.kernel.jumps {
            if l.prefers_sandwich() {
                l.sandwich_acc(rho, out);
            } else {
                let (lr, acc) =
                    wide.get_or_insert_with(|| (CMatrix::zeros(d, d), CMatrix::zeros(d, d)));
                lr.fill(zero);
                l.mul_acc(C64::from(1.0), rho, lr);
                l.mul_adj_acc(C64::from(1.0), lr, acc);
            }
        }
        if let Some((_, acc)) = wide {
            for j in 0..d {
                for i in 0..d {
                    out[(i, j)] += acc[(j, i)].conj();
                }
            }
        }
    }

    /// Dense superoperator `M` with `M·vec(ρ) = vec(L(ρ))`, column stacking.
    pub fn to_matrix(&self) -> Result<CMatrix> {
        if self.is_time_dependent() {
            return Err(input_err(format!(
                "{} generator is time dependent",
                self.tier
            )));
        }
        let d = self.dim();
        if d > MAX_DENSE_DIM {
            return Err(input_err(format!(
                "dimension {d} too large for a dense superoperator"
            )));
        }
        let mut m = CMatrix::zeros(d * d, d * d);
        let mut basis = CMatrix::zeros(d, d);
        for col in 0..d {
            for row in 0..d {
                basis[(row, col)] = C64::from(1.0);
                let image = self.apply(0.0, &basis)?;
                basis[(row, col)] = C64::from(0.0);
                m.column_mut(row + col * d)
                    .copy_from_slice(image.as_slice());
            }
        }
        Ok(m)
    }
}

/// Assembles the generator of `tier` from the physical parameters.
pub fn assemble(p: &PhysicalParams, tier: ModelTier) -> Result<Liouvillian> {
    p.validate()?;
    if tier.enforces_blockade() && !p.blockade_on {
        return Err(param_err(format!(
            "{tier} enforces the blockade structurally; blockade_on must be set"
        )));
    }
    let layout = tier_layout(p, tier)?;
    let efficiency = if tier == ModelTier::EffectiveCavityEta {
        p.eta
    } else {
        1.0
    };
    match tier {
        ModelTier::Full3Level => {
            let h = full_hamiltonian(p)?;
            let a = cavity_annihilation(&layout)?;
            let u = build_feedback_unitary(p, &layout)?.into_entries();
            let mut channels = vec![cavity_channel(p.kappa, a, u, efficiency)];
            let r = rydberg_level(3);
            for i in 0..p.n_atoms {
                if p.gamma_r > 0.0 {
                    channels.push(JumpChannel::plain(
                        format!("rydberg_to_p_{}", i + 1),
                        p.gamma_r / 2.0,
                        site_transition(&layout, i, r, INTERMEDIATE)?,
                    ));
                    channels.push(JumpChannel::plain(
                        format!("rydberg_to_g_{}", i + 1),
                        p.gamma_r / 2.0,
                        site_transition(&layout, i, r, GROUND)?,
                    ));
                }
                if p.gamma_p > 0.0 {
                    channels.push(JumpChannel::plain(
                        format!("p_decay_{}", i + 1),
                        p.gamma_p,
                        site_transition(&layout, i, INTERMEDIATE, GROUND)?,
                    ));
                }
            }
            Liouvillian::from_parts(tier, h, channels)
        }
        ModelTier::EffectiveCavity | ModelTier::EffectiveCavityEta => {
            let mut h = build_effective_hamiltonian(p, p.blockade_on)?.into_entries();
            if p.include_stark {
                h += build_stark_hamiltonian(p)?.entries();
            }
            let a = cavity_annihilation(&layout)?;
            let u = build_feedback_unitary(p, &layout)?.into_entries();
            let mut channels = vec![cavity_channel(p.kappa, a, u, efficiency)];
            channels.extend(atomic_decay(p, &layout)?);
            Liouvillian::from_parts(
                tier,
                Hamiltonian::new(OperatorMatrix::new(layout, h)?),
                channels,
            )
        }
        ModelTier::BlockadeCavity => {
            let d = p.derive()?;
            let jc = collective_jump(p, &layout)?;
            let a = cavity_annihilation(&layout)?;
            let drive = collective_drive(p, &layout)?;
            let coupling = jc.adjoint() * &a * C64::from(d.g_eff);
            let h = drive.adjoint() + &drive + coupling.adjoint() + &coupling;
            let u = build_feedback_unitary(p, &layout)?.into_entries();
            let mut channels = vec![cavity_channel(p.kappa, a, u, efficiency)];
            channels.extend(atomic_decay(p, &layout)?);
            Liouvillian::from_parts(
                tier,
                Hamiltonian::new(OperatorMatrix::new(layout, h)?),
                channels,
            )
        }
        ModelTier::AtomCollective | ModelTier::AtomIdeal => {
            let d = p.derive()?;
            let drive = collective_drive(p, &layout)?;
            let h = drive.adjoint() + &drive;
            let u = build_feedback_unitary(p, &layout)?.into_entries();
            let mut channels = vec![JumpChannel {
                label: "collective".into(),
                op: collective_jump(p, &layout)? * C64::from(d.gamma.sqrt()),
                feedback: Some(u),
                efficiency,
            }];
            if tier == ModelTier::AtomCollective {
                channels.extend(atomic_decay(p, &layout)?);
            }
            Liouvillian::from_parts(
                tier,
                Hamiltonian::new(OperatorMatrix::new(layout, h)?),
                channels,
            )
        }
        ModelTier::FeedbackReduced => {
            let d = p.derive()?;
            if d.omega_eff != 0.0 {
                check_matched_ratios(&d)?;
            }
            let basis = reduced_basis(p)?;
            let b = columns(&basis);
            let atoms = SpaceLayout::atoms(p.n_atoms, 2)?;
            let jl = collective_drive(p, &atoms)?;
            let jc = collective_jump(p, &atoms)?;
            // The closed subspace is invariant under the conditioned flip, and
            // every variant acts identically on the collective jump's image.
            let mut pc = p.clone();
            pc.feedback = FeedbackVariant::Conditioned;
            let u = build_feedback_unitary(&pc, &atoms)?;
            let project = |m: &CMatrix| b.adjoint() * m * &b;
            let drive = project(&jl);
            let h = drive.adjoint() + &drive;
            let channels = vec![JumpChannel {
                label: "collective".into(),
                op: project(&jc) * C64::from(d.gamma.sqrt()),
                feedback: Some(project(u.entries())),
                efficiency,
            }];
            let mut l = Liouvillian::from_parts(
                tier,
                Hamiltonian::new(OperatorMatrix::new(layout, h)?),
                channels,
            )?;
            l.reduced_basis = Some(basis);
            Ok(l)
        }
    }
}

/// `Ω_eff·J_l⁻`, or zero when the drive is off.
fn collective_drive(p: &PhysicalParams, layout: &SpaceLayout) -> Result<CMatrix> {
    let d = p.derive()?;
    if d.omega_eff == 0.0 {
        let n = layout.total_dim();
        return Ok(CMatrix::zeros(n, n));
    }
    Ok(collective_lowering(layout, &d.drive_ratios()?)? * C64::from(d.omega_eff))
}

/// `J_c⁻` with the cavity coupling ratios.
fn collective_jump(p: &PhysicalParams, layout: &SpaceLayout) -> Result<CMatrix> {
    collective_lowering(layout, &p.derive()?.cavity_ratios()?)
}

fn cavity_channel(kappa: f64, a: CMatrix, u: CMatrix, efficiency: f64) -> JumpChannel {
    JumpChannel {
        label: "cavity".into(),
        op: a * C64::from(kappa.sqrt()),
        feedback: Some(u),
        efficiency,
    }
}

fn atomic_decay(p: &PhysicalParams, layout: &SpaceLayout) -> Result<Vec<JumpChannel>> {
    if p.gamma_r <= 0.0 {
        return Ok(Vec::new());
    }
    (0..p.n_atoms)
        .map(|i| {
            Ok(JumpChannel::plain(
                format!("rydberg_decay_{}", i + 1),
                p.gamma_r,
                site_transition(layout, i, 1, GROUND)?,
            ))
        })
        .collect()
}
