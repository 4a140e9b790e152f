//! Hamiltonians, collective operators and feedback unitaries for every tier.

use nalgebra::DMatrix;

use crate::error::{input_err, param_err, Result};
use crate::operator::{
    annihilation, embed, max_abs, rydberg_level, transition_op, unitary_exp, CMatrix, CVector,
    OperatorMatrix, SpaceLayout, C64, GROUND, INTERMEDIATE,
};
use crate::params::{DerivedParams, FeedbackVariant, ModelTier, PhysicalParams};

/// Oscillating term `e^{i·frequency·t}·op + h.c.`.
#[derive(Clone, Debug, PartialEq)]
pub struct Drive {
    pub frequency: f64,
    pub op: CMatrix,
}

/// `H(t) = static_part + Σ_k (e^{i f_k t} A_k + h.c.)`, all frequencies positive.
#[derive(Clone, Debug, PartialEq)]
pub struct Hamiltonian {
    pub layout: SpaceLayout,
    pub static_part: CMatrix,
    pub drives: Vec<Drive>,
}

impl Hamiltonian {
    pub fn new(static_part: OperatorMatrix) -> Self {
        let layout = static_part.layout().clone();
        Self {
            layout,
            static_part: static_part.into_entries(),
            drives: Vec::new(),
        }
    }

    pub fn zeros(layout: &SpaceLayout) -> Self {
        Self::new(OperatorMatrix::zeros(layout))
    }

    pub fn add_static(&mut self, op: &CMatrix) {
        self.static_part += op;
    }

    /// Adds `e^{i f t}·op + h.c.`, merging drives of equal frequency.
    pub fn add_drive(&mut self, frequency: f64, op: CMatrix) {
        if frequency == 0.0 {
            self.static_part += &op + op.adjoint();
            return;
        }
        let (f, op) = if frequency < 0.0 {
            (-frequency, op.adjoint())
        } else {
            (frequency, op)
        };
        match self
            .drives
            .iter_mut()
            .find(|d| (d.frequency - f).abs() <= 1e-12 * f)
        {
            Some(d) => d.op += op,
            None => self.drives.push(Drive { frequency: f, op }),
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        !self.drives.is_empty()
    }

    pub fn max_frequency(&self) -> f64 {
        self.drives.iter().map(|d| d.frequency).fold(0.0, f64::max)
    }

    pub fn at(&self, t: f64) -> OperatorMatrix {
        let mut h = self.static_part.clone();
        for d in &self.drives {
            let phase = C64::from_polar(1.0, d.frequency * t);
            h += &d.op * phase + d.op.adjoint() * phase.conj();
        }
        OperatorMatrix::new(self.layout.clone(), h).expect("layout fixed at construction")
    }
}

/// Hilbert-space layout used by a tier.
pub fn tier_layout(p: &PhysicalParams, tier: ModelTier) -> Result<SpaceLayout> {
    match tier {
        ModelTier::Full3Level => SpaceLayout::atoms_with_fock(p.n_atoms, 3, p.fock_dim),
        ModelTier::EffectiveCavity | ModelTier::EffectiveCavityEta | ModelTier::BlockadeCavity => {
            SpaceLayout::atoms_with_fock(p.n_atoms, 2, p.fock_dim)
        }
        ModelTier::AtomCollective | ModelTier::AtomIdeal => SpaceLayout::atoms(p.n_atoms, 2),
        ModelTier::FeedbackReduced => SpaceLayout::single(3),
    }
}

fn atom_levels(layout: &SpaceLayout) -> usize {
    layout.site_dims()[layout.atom_sites()[0]]
}

/// `|to⟩⟨from|` on atom `site`.
pub fn site_transition(
    layout: &SpaceLayout,
    site: usize,
    from: usize,
    to: usize,
) -> Result<CMatrix> {
    let levels = layout.site_dims()[site];
    Ok(embed(&transition_op(from, to, levels)?, site, layout)?.into_entries())
}

/// Cavity annihilation operator embedded in `layout`.
pub fn cavity_annihilation(layout: &SpaceLayout) -> Result<CMatrix> {
    let f = layout
        .fock_site()
        .ok_or_else(|| input_err("layout has no cavity mode"))?;
    Ok(embed(&annihilation(layout.site_dims()[f])?, f, layout)?.into_entries())
}

/// Rydberg projector of atom `site`.
pub fn rydberg_projector(layout: &SpaceLayout, site: usize) -> Result<CMatrix> {
    let r = rydberg_level(layout.site_dims()[site]);
    site_transition(layout, site, r, r)
}

/// `Σ_{i<j} |r⟩ᵢᵢ⟨r| ⊗ |r⟩ⱼⱼ⟨r|`.
pub fn double_rydberg_projector(layout: &SpaceLayout) -> Result<CMatrix> {
    let atoms = layout.atom_sites();
    let d = layout.total_dim();
    let projectors = atoms
        .iter()
        .map(|&s| rydberg_projector(layout, s))
        .collect::<Result<Vec<_>>>()?;
    let mut out = CMatrix::zeros(d, d);
    for i in 0..projectors.len() {
        for j in i + 1..projectors.len() {
            out += &projectors[i] * &projectors[j];
        }
    }
    Ok(out)
}

/// Full cascade Hamiltonian with its time dependence kept symbolic.
pub fn full_hamiltonian(p: &PhysicalParams) -> Result<Hamiltonian> {
    p.validate()?;
    let layout = tier_layout(p, ModelTier::Full3Level)?;
    let a = cavity_annihilation(&layout)?;
    let (g, p_lvl, r) = (GROUND, INTERMEDIATE, rydberg_level(3));
    let mut h = Hamiltonian::zeros(&layout);
    for i in 0..p.n_atoms {
        let pg = site_transition(&layout, i, g, p_lvl)?;
        let rp = site_transition(&layout, i, p_lvl, r)?;
        h.add_drive(p.delta_b, &pg * &a * C64::from(p.g));
        h.add_drive(-p.delta_a, &pg * C64::from(p.rabi_r[i]));
        h.add_drive(-p.delta_b, &rp * C64::from(p.rabi_c[i]));
        h.add_drive(p.delta_a, &rp * C64::from(p.rabi_b[i]));
    }
    if p.blockade_on && p.u != 0.0 {
        h.add_static(&(double_rydberg_projector(&layout)? * C64::from(p.u)));
    }
    Ok(h)
}

/// The full Hamiltonian evaluated at time `t`.
pub fn build_full_hamiltonian(p: &PhysicalParams, t: f64) -> Result<OperatorMatrix> {
    Ok(full_hamiltonian(p)?.at(t))
}

/// Stark shifts of `|g⟩` and `|r⟩` left over from eliminating `|p⟩`.
pub fn build_stark_hamiltonian(p: &PhysicalParams) -> Result<OperatorMatrix> {
    let layout = tier_layout(p, ModelTier::EffectiveCavity)?;
    stark_on(p, &layout)
}

fn stark_on(p: &PhysicalParams, layout: &SpaceLayout) -> Result<OperatorMatrix> {
    if p.delta_a == 0.0 || p.delta_b == 0.0 {
        return Err(param_err("Stark shifts need nonzero detunings"));
    }
    let a = cavity_annihilation(layout)?;
    let n_photon = a.adjoint() * &a;
    let d = layout.total_dim();
    let id = CMatrix::identity(d, d);
    let r = rydberg_level(atom_levels(layout));
    let mut h = CMatrix::zeros(d, d);
    for i in 0..p.n_atoms {
        let pg = site_transition(layout, i, GROUND, GROUND)?;
        let pr = site_transition(layout, i, r, r)?;
        let ground_shift = &id * C64::from(p.rabi_r[i].powi(2) / p.delta_a)
            - &n_photon * C64::from(p.g * p.g / p.delta_b);
        h += ground_shift * pg;
        h += pr * C64::from(p.rabi_b[i].powi(2) / p.delta_a - p.rabi_c[i].powi(2) / p.delta_b);
    }
    OperatorMatrix::new(layout.clone(), h)
}

/// Raman-like two-level Hamiltonian with optional pair interaction.
pub fn build_effective_hamiltonian(
    p: &PhysicalParams,
    include_interaction: bool,
) -> Result<OperatorMatrix> {
    let layout = tier_layout(p, ModelTier::EffectiveCavity)?;
    let d = p.derive()?;
    let a = cavity_annihilation(&layout)?;
    let mut h = CMatrix::zeros(layout.total_dim(), layout.total_dim());
    for i in 0..p.n_atoms {
        let sp = site_transition(&layout, i, GROUND, 1)?;
        let term = &sp * C64::from(d.omega_eff_i[i]) + &sp * &a * C64::from(d.g_eff_i[i]);
        h += term.adjoint() + term;
    }
    if include_interaction && p.u != 0.0 {
        h += double_rydberg_projector(&layout)? * C64::from(p.u);
    }
    OperatorMatrix::new(layout, h)
}

/// Lowering operator `|g…g⟩ Σᵢ cᵢ ⟨g…rᵢ…g|` on `layout` (two-level atoms).
pub fn collective_lowering(layout: &SpaceLayout, coefficients: &[f64]) -> Result<CMatrix> {
    let atoms = layout.atom_sites();
    if atoms.len() != coefficients.len() {
        return Err(input_err(format!(
            "{} coefficients for {} atoms",
            coefficients.len(),
            atoms.len()
        )));
    }
    if atom_levels(layout) != 2 {
        return Err(input_err("collective operators act on two-level atoms"));
    }
    let d = layout.total_dim();
    let mut j = CMatrix::zeros(d, d);
    let photons = layout.fock_dim().unwrap_or(1);
    for m in 0..photons {
        let mut ground = vec![0; layout.n_sites()];
        if let Some(f) = layout.fock_site() {
            ground[f] = m;
        }
        let to = layout.index_of(&ground)?;
        for (k, &site) in atoms.iter().enumerate() {
            let mut single = ground.clone();
            single[site] = 1;
            j[(to, layout.index_of(&single)?)] = C64::from(coefficients[k]);
        }
    }
    Ok(j)
}

/// Collective lowering operators (J_l⁻, J_c⁻) with the coupling ratios of
/// the drive and of the cavity respectively.
pub fn build_collective_ops(
    p: &PhysicalParams,
    layout: &SpaceLayout,
) -> Result<(OperatorMatrix, OperatorMatrix)> {
    let d = p.derive()?;
    let jl = collective_lowering(layout, &d.drive_ratios()?)?;
    let jc = collective_lowering(layout, &d.cavity_ratios()?)?;
    Ok((
        OperatorMatrix::new(layout.clone(), jl)?,
        OperatorMatrix::new(layout.clone(), jc)?,
    ))
}

/// `exp(−iωG)` for a generator with `G³ = G`.
fn flip_exponential(generator: &CMatrix, omega: f64) -> CMatrix {
    let d = generator.nrows();
    let g2 = generator * generator;
    CMatrix::identity(d, d)
        - g2 * C64::from(1.0 - omega.cos())
        - generator * C64::new(0.0, omega.sin())
}

/// `|g⟩⟨r| + |r⟩⟨g|` on atom 1, optionally times the ground projector of
/// every other atom.
fn flip_generator(layout: &SpaceLayout, conditioned: bool) -> Result<CMatrix> {
    let r = rydberg_level(atom_levels(layout));
    let mut g = site_transition(layout, 0, GROUND, r)? + site_transition(layout, 0, r, GROUND)?;
    if conditioned {
        for &s in layout.atom_sites().iter().skip(1) {
            g *= site_transition(layout, s, GROUND, GROUND)?;
        }
    }
    Ok(g)
}

/// Feedback unitary on `layout` for the variant stored in `p`.
pub fn build_feedback_unitary(p: &PhysicalParams, layout: &SpaceLayout) -> Result<OperatorMatrix> {
    let omega = p.feedback_angle;
    let u = match p.feedback {
        FeedbackVariant::Conditioned => flip_exponential(&flip_generator(layout, true)?, omega),
        FeedbackVariant::SingleAtom => flip_exponential(&flip_generator(layout, false)?, omega),
        FeedbackVariant::Exact { pulse_time } => {
            if layout.atom_sites().len() != 2 {
                return Err(param_err(
                    "exact feedback pulse is defined for two atoms only",
                ));
            }
            let lambda = omega / pulse_time;
            let h = flip_generator(layout, false)? * C64::from(lambda)
                + double_rydberg_projector(layout)? * C64::from(p.u);
            unitary_exp(&h, pulse_time)?
        }
    };
    OperatorMatrix::new(layout.clone(), u)
}

/// Basis `{|1⟩, |2⟩, |3⟩}` of the closed feedback subspace on the two-level
/// atom space: ground state, bright state `∝ J⁺|g…g⟩`, and the component of
/// `|r g…g⟩` orthogonal to it (sign chosen so that equal couplings give the
/// DFS state with amplitude `−(n−1)` on atom 1).
pub fn reduced_basis(p: &PhysicalParams) -> Result<[CVector; 3]> {
    let d = p.derive()?;
    if d.omega_eff != 0.0 {
        check_matched_ratios(&d)?;
    }
    let layout = SpaceLayout::atoms(p.n_atoms, 2)?;
    let jc = collective_lowering(&layout, &d.cavity_ratios()?)?;
    let ground = layout.basis_vector(&vec![0; p.n_atoms])?;
    let bright = jc.adjoint() * &ground;
    let bright = bright.unscale(bright.norm());
    let mut r1 = vec![0; p.n_atoms];
    r1[0] = 1;
    let r1 = layout.basis_vector(&r1)?;
    let overlap = bright.dotc(&r1);
    let dark = &r1 - &bright * overlap;
    let norm = dark.norm();
    if norm < 1e-9 {
        return Err(param_err(
            "atom 1 alone carries the collective coupling; no dark partner",
        ));
    }
    Ok([ground, bright, dark.unscale(-norm)])
}

pub(crate) fn check_matched_ratios(d: &DerivedParams) -> Result<()> {
    let a = d.drive_ratios()?;
    let b = d.cavity_ratios()?;
    if a.iter()
        .zip(&b)
        .any(|(x, y)| (x - y).abs() > 1e-12 * (1.0 + x.abs()))
    {
        return Err(param_err(
            "reduced feedback subspace requires Ω_eff^i/Ω_eff = g_eff^i/g_eff",
        ));
    }
    Ok(())
}

/// Matrix whose columns are the given vectors.
pub fn columns(vectors: &[CVector]) -> CMatrix {
    DMatrix::from_columns(vectors)
}

/// Largest deviation of `U†U` from the identity.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let d = u.nrows();
    max_abs(&(u.adjoint() * u - CMatrix::identity(d, d)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{hermiticity_defect, I, ONE, ZERO};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn eff(n: usize) -> PhysicalParams {
        PhysicalParams::effective_uniform(n, 0.7, 1.3, 5.0, 40.0, FRAC_PI_2).unwrap()
    }

    fn full_params() -> PhysicalParams {
        let mut p = PhysicalParams::cascade(1.0, 80.0, &[1.0, 1.0], 0.05, 3.0, FRAC_PI_2).unwrap();
        p.fock_dim = 2;
        p
    }

    #[test]
    fn full_hamiltonian_elements() {
        let p = full_params();
        let h = build_full_hamiltonian(&p, 0.0).unwrap();
        let l = h.layout().clone();
        let pg0 = l.index_of(&[1, 0, 0]).unwrap();
        let gg1 = l.index_of(&[0, 0, 1]).unwrap();
        let gg0 = l.index_of(&[0, 0, 0]).unwrap();
        assert!((h.entries()[(pg0, gg1)] - C64::from(p.g)).norm() < 1e-15);
        assert!((h.entries()[(pg0, gg0)] - C64::from(p.rabi_r[0])).norm() < 1e-15);
        let rr = l.index_of(&[2, 2, 0]).unwrap();
        assert!((h.entries()[(rr, rr)] - C64::from(p.u)).norm() < 1e-15);
    }

    #[test]
    fn full_hamiltonian_time_dependence_only_in_drive_blocks() {
        let p = full_params();
        let model = full_hamiltonian(&p).unwrap();
        let h0 = model.at(0.0);
        let t = 0.37;
        let ht = model.at(t);
        let mut support = CMatrix::zeros(h0.dim(), h0.dim());
        for d in &model.drives {
            support +=
                d.op.map(|z| C64::from(z.norm())) + d.op.adjoint().map(|z| C64::from(z.norm()));
        }
        for k in 0..h0.dim() {
            for j in 0..h0.dim() {
                if support[(k, j)].norm() == 0.0 {
                    assert_eq!(h0.entries()[(k, j)], ht.entries()[(k, j)]);
                }
            }
        }
        let l = h0.layout();
        let pg0 = l.index_of(&[1, 0, 0]).unwrap();
        let gg1 = l.index_of(&[0, 0, 1]).unwrap();
        let expected = C64::from_polar(p.g, p.delta_b * t);
        assert!((ht.entries()[(pg0, gg1)] - expected).norm() < 1e-13);
    }

    #[test]
    fn stark_rydberg_term_cancels_for_matched_fields() {
        let mut p = PhysicalParams::cascade(2.0, 50.0, &[1.0, -1.0], 1.0, 0.0, 0.0).unwrap();
        p.fock_dim = 3;
        let s = build_stark_hamiltonian(&p).unwrap();
        let l = s.layout().clone();
        let rr = l.index_of(&[1, 1, 0]).unwrap();
        assert!(s.entries()[(rr, rr)].norm() < 1e-15);
        // zero photons, equal Ω_R: each ground atom shifted by Ω_R²/Δ_a
        let gg = l.index_of(&[0, 0, 0]).unwrap();
        assert!((s.entries()[(gg, gg)].re - 2.0 * 4.0 / 50.0).abs() < 1e-15);
        let gr = l.index_of(&[0, 1, 0]).unwrap();
        assert!((s.entries()[(gr, gr)].re - 4.0 / 50.0).abs() < 1e-15);
    }

    #[test]
    fn stark_commutes_with_dark_state_projector() {
        let mut p = PhysicalParams::cascade(1.0, 30.0, &[1.0, 1.0, 1.0], 1.0, 0.0, 0.0).unwrap();
        p.fock_dim = 3;
        let s = build_stark_hamiltonian(&p).unwrap();
        let l = s.layout().clone();
        let dark_atoms = reduced_basis(&p).unwrap()[2].clone();
        let mut vac = CVector::zeros(3);
        vac[0] = ONE;
        let dark = dark_atoms.kronecker(&vac);
        let proj = &dark * dark.adjoint();
        let comm = s.entries() * &proj - &proj * s.entries();
        assert!(max_abs(&comm) < 1e-14, "{}", max_abs(&comm));
        assert_eq!(l.total_dim(), 24);
    }

    #[test]
    fn effective_hamiltonian_elements() {
        let p = PhysicalParams::effective(&[0.3, 0.8], &[1.1, 2.0], 4.0, 0.0, 0.0).unwrap();
        let h = build_effective_hamiltonian(&p, true).unwrap();
        let l = h.layout().clone();
        let rg0 = l.index_of(&[1, 0, 0]).unwrap();
        let gg0 = l.index_of(&[0, 0, 0]).unwrap();
        let gg1 = l.index_of(&[0, 0, 1]).unwrap();
        let rr0 = l.index_of(&[1, 1, 0]).unwrap();
        assert!((h.entries()[(rg0, gg0)] - C64::from(0.3)).norm() < 1e-15);
        assert!((h.entries()[(rg0, gg1)] - C64::from(1.1)).norm() < 1e-15);
        assert_eq!(h.entries()[(rr0, rr0)], ZERO);
    }

    #[test]
    fn collective_ops_on_bell_basis() {
        let p = eff(2);
        let layout = SpaceLayout::atoms(2, 2).unwrap();
        let (jl, jc) = build_collective_ops(&p, &layout).unwrap();
        assert_eq!(jl, jc);
        let [b1, b2, b3] = reduced_basis(&p).unwrap();
        let out = jc.apply(&b2);
        assert!((out - &b1 * C64::from(2f64.sqrt())).norm() < 1e-14);
        assert!(jc.apply(&b3).norm() < 1e-15);
    }

    #[test]
    fn dfs_and_w_are_dark_for_their_ratios() {
        let p = eff(3);
        let layout = SpaceLayout::atoms(3, 2).unwrap();
        let (_, j) = build_collective_ops(&p, &layout).unwrap();
        let dark = reduced_basis(&p).unwrap()[2].clone();
        assert!(j.apply(&dark).norm() < 1e-15);
        let w =
            PhysicalParams::effective(&[-2.0, 1.0, 1.0], &[-2.0, 1.0, 1.0], 4.0, 0.0, 0.0).unwrap();
        let (_, jw) = build_collective_ops(&w, &layout).unwrap();
        let s = 1.0 / 3f64.sqrt();
        let mut wv = CVector::zeros(8);
        for k in [1, 2, 4] {
            wv[k] = C64::from(s);
        }
        assert!(jw.apply(&wv).norm() < 1e-15);
    }

    #[test]
    fn collective_ops_are_nilpotent_and_confined() {
        let p =
            PhysicalParams::effective(&[1.0, -2.0, 0.5], &[0.2, 1.0, 1.0], 4.0, 0.0, 0.0).unwrap();
        let layout = SpaceLayout::atoms_with_fock(3, 2, 3).unwrap();
        let (jl, jc) = build_collective_ops(&p, &layout).unwrap();
        for j in [&jl, &jc] {
            assert_eq!(max_abs((j * j).entries()), 0.0);
            let rr = layout.basis_vector(&[1, 1, 0, 2]).unwrap();
            assert_eq!(j.apply(&rr).norm(), 0.0);
        }
        assert!(max_abs(&(jl.entries() - jc.entries())) > 0.1);
    }

    #[test]
    fn zero_scalar_coupling_rejected() {
        let p = PhysicalParams::effective(&[0.0, 1.0], &[1.0, 1.0], 4.0, 0.0, 0.0).unwrap();
        let layout = SpaceLayout::atoms(2, 2).unwrap();
        assert!(build_collective_ops(&p, &layout).is_err());
    }

    #[test]
    fn feedback_identity_at_zero_angle() {
        let mut p = eff(3);
        p.feedback_angle = 0.0;
        let layout = SpaceLayout::atoms_with_fock(3, 2, 2).unwrap();
        for v in [FeedbackVariant::Conditioned, FeedbackVariant::SingleAtom] {
            p.feedback = v;
            let u = build_feedback_unitary(&p, &layout).unwrap();
            assert!(max_abs(&(u.entries() - CMatrix::identity(16, 16))) < 1e-15);
        }
    }

    #[test]
    fn conditioned_flip_on_two_atoms() {
        let p = eff(2);
        let layout = SpaceLayout::atoms(2, 2).unwrap();
        let u = build_feedback_unitary(&p, &layout).unwrap();
        let gg = layout.basis_vector(&[0, 0]).unwrap();
        let rg = layout.basis_vector(&[1, 0]).unwrap();
        let gr = layout.basis_vector(&[0, 1]).unwrap();
        assert!((u.apply(&gg) - &rg * (-I)).norm() < 1e-15);
        assert!((u.apply(&gr) - &gr).norm() < 1e-15);
        assert!(u.unitarity_defect() < 1e-12);
    }

    #[test]
    fn three_level_flip_leaves_intermediate_level_alone() {
        let p = full_params();
        let layout = tier_layout(&p, ModelTier::Full3Level).unwrap();
        let u = build_feedback_unitary(&p, &layout).unwrap();
        let pg = layout.basis_vector(&[1, 0, 1]).unwrap();
        assert!((u.apply(&pg) - &pg).norm() < 1e-15);
        let gg = layout.basis_vector(&[0, 0, 1]).unwrap();
        let rg = layout.basis_vector(&[2, 0, 1]).unwrap();
        assert!((u.apply(&gg) - &rg * (-I)).norm() < 1e-15);
    }

    #[test]
    fn exact_pulse_approaches_conditioned_flip_in_blockade_sector() {
        let mut p = eff(2);
        p.u = 1.0;
        let layout = SpaceLayout::atoms(2, 2).unwrap();
        let cond = build_feedback_unitary(&p, &layout).unwrap();
        let sector: Vec<CVector> = [[0, 0], [0, 1], [1, 0]]
            .iter()
            .map(|l| layout.basis_vector(l).unwrap())
            .collect();
        let b = columns(&sector);
        let mut last = f64::INFINITY;
        for ratio in [10.0, 100.0, 1000.0] {
            // λ = ω/δt, U/λ = ratio
            let lambda = p.u / ratio;
            p.feedback = FeedbackVariant::Exact {
                pulse_time: p.feedback_angle / lambda,
            };
            let exact = build_feedback_unitary(&p, &layout).unwrap();
            assert!(exact.unitarity_defect() < 1e-12);
            let dist = max_abs(&(b.adjoint() * (exact.entries() - cond.entries()) * &b));
            assert!(dist < last);
            last = dist;
        }
        assert!(last < 5e-3, "{last}");
    }

    #[test]
    fn exact_pulse_needs_two_atoms() {
        let mut p = eff(3);
        p.feedback = FeedbackVariant::Exact { pulse_time: 0.1 };
        let layout = SpaceLayout::atoms(3, 2).unwrap();
        assert!(build_feedback_unitary(&p, &layout).is_err());
    }

    #[test]
    fn theta_dark_state_matches_null_space() {
        use crate::params::theta_ratios;
        for theta in [PI / 8.0, PI / 4.0, 3.0 * PI / 8.0, 0.3, 1.2] {
            let c = theta_ratios(theta).unwrap();
            let layout = SpaceLayout::atoms(2, 2).unwrap();
            let j = collective_lowering(&layout, &c).unwrap();
            // null space of the single-excitation row (c₁⟨rg| + c₂⟨gr|): the
            // vector orthogonal to its conjugate transpose
            let row = [C64::from(c[0]), C64::from(c[1])];
            let dark = CVector::from_column_slice(&[ZERO, row[0], -row[1], ZERO]);
            let dark = dark.unscale(dark.norm());
            let candidate = CVector::from_column_slice(&[
                ZERO,
                C64::from(theta.cos()),
                C64::from(theta.sin()),
                ZERO,
            ]);
            assert!((&j * &dark).norm() < 1e-14);
            assert!((dark.dotc(&candidate).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn time_dependent_drive_merging() {
        let layout = SpaceLayout::single(2).unwrap();
        let mut h = Hamiltonian::zeros(&layout);
        let sp = transition_op(0, 1, 2).unwrap().into_entries();
        h.add_drive(2.0, sp.clone());
        h.add_drive(-2.0, sp.clone());
        h.add_drive(0.0, sp.clone());
        assert_eq!(h.drives.len(), 1);
        assert_eq!(h.max_frequency(), 2.0);
        assert!(hermiticity_defect(h.at(0.3).entries()) < 1e-15);
    }

    proptest! {
        #[test]
        fn built_hamiltonians_are_hermitian(t in 0.0f64..10.0, u in 0.0f64..50.0, seed in 0u64..50) {
            let s = seed as f64;
            let mut p = PhysicalParams::cascade(1.0 + 0.1 * s, 20.0, &[1.0, -0.5 - 0.01 * s, 2.0], 0.3, u, 1.0).unwrap();
            p.fock_dim = 2;
            prop_assert!(build_full_hamiltonian(&p, t).unwrap().hermiticity_defect() < 1e-12);
            prop_assert!(build_stark_hamiltonian(&p).unwrap().hermiticity_defect() < 1e-12);
            prop_assert!(build_effective_hamiltonian(&p, true).unwrap().hermiticity_defect() < 1e-12);
        }

        #[test]
        fn feedback_is_unitary(omega in -7.0f64..7.0, n in 2usize..5, variant in 0usize..3) {
            let mut p = PhysicalParams::effective_uniform(n, 1.0, 1.0, 4.0, 30.0, omega).unwrap();
            p.feedback = match variant {
                0 => FeedbackVariant::Conditioned,
                1 => FeedbackVariant::SingleAtom,
                _ if n == 2 => FeedbackVariant::Exact { pulse_time: 0.05 },
                _ => FeedbackVariant::Conditioned,
            };
            let layout = SpaceLayout::atoms_with_fock(n, 2, 2).unwrap();
            prop_assert!(build_feedback_unitary(&p, &layout).unwrap().unitarity_defect() < 1e-12);
        }
    }
}
