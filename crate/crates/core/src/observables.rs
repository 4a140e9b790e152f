//! Target states, fidelities and populations.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, input_err, Result};
use crate::liouvillian::Liouvillian;
use crate::model::{cavity_annihilation, double_rydberg_projector};
use crate::operator::{
    hermitian_sqrt, hermitize, partial_trace, rydberg_level, CMatrix, CVector, DensityMatrix,
    SpaceLayout, C64, ONE,
};

/// Named entangled states on `n` two-level atoms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TargetKind {
    /// `(|gr⟩ − |rg⟩)/√2`.
    BellAntisym,
    /// `cosθ|gr⟩ + sinθ|rg⟩`.
    BellTheta { theta: f64 },
    /// `[Σ_{i≥2}|rᵢ⟩ − (n−1)|r₁⟩]/√(n(n−1))`.
    Dfs,
    /// Symmetric single excitation `Σᵢ|rᵢ⟩/√n`.
    W,
    /// All atoms in `|g⟩`.
    Ground,
}

impl TargetKind {
    pub fn label(&self) -> String {
        match self {
            TargetKind::BellAntisym => "bell".into(),
            TargetKind::BellTheta { .. } => "bell_theta".into(),
            TargetKind::Dfs => "dfs".into(),
            TargetKind::W => "w".into(),
            TargetKind::Ground => "ground".into(),
        }
    }
}

/// Normalized state vector on the `n`-atom two-level space.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetState {
    pub kind: TargetKind,
    pub n_atoms: usize,
    pub vector: CVector,
}

fn single_excitation(n: usize, site: usize) -> usize {
    // atom 1 is the most significant bit
    1 << (n - 1 - site)
}

pub fn target_state(kind: TargetKind, n: usize) -> Result<TargetState> {
    if n < 2 {
        return Err(input_err(format!(
            "targets need at least two atoms, got {n}"
        )));
    }
    if n > 16 {
        return Err(input_err(format!(
            "{n} atoms is beyond the supported range"
        )));
    }
    let dim = 1usize << n;
    let mut v = CVector::zeros(dim);
    match kind {
        TargetKind::BellAntisym | TargetKind::BellTheta { .. } => {
            if n != 2 {
                return Err(input_err("Bell targets are defined for two atoms"));
            }
            let (c_gr, c_rg) = match kind {
                TargetKind::BellTheta { theta } => {
                    if !(0.0..2.0 * std::f64::consts::PI).contains(&theta) {
                        return Err(input_err(format!("θ = {theta} outside [0, 2π)")));
                    }
                    (theta.cos(), theta.sin())
                }
                _ => (
                    std::f64::consts::FRAC_1_SQRT_2,
                    -std::f64::consts::FRAC_1_SQRT_2,
                ),
            };
            v[single_excitation(2, 1)] = C64::from(c_gr);
            v[single_excitation(2, 0)] = C64::from(c_rg);
        }
        TargetKind::Dfs => {
            let norm = ((n * (n - 1)) as f64).sqrt();
            v[single_excitation(n, 0)] = C64::from(-((n - 1) as f64) / norm);
            for i in 1..n {
                v[single_excitation(n, i)] = C64::from(1.0 / norm);
            }
        }
        TargetKind::W => {
            let a = 1.0 / (n as f64).sqrt();
            for i in 0..n {
                v[single_excitation(n, i)] = C64::from(a);
            }
        }
        TargetKind::Ground => v[0] = ONE,
    }
    Ok(TargetState {
        kind,
        n_atoms: n,
        vector: v,
    })
}

/// Maps a two-level atom vector onto atoms with `levels` levels, sending
/// `|r⟩ = 1` to the Rydberg level.
pub fn lift_atom_vector(psi: &CVector, n: usize, levels: usize) -> Result<CVector> {
    if psi.len() != 1 << n {
        return Err(dim_err(format!(
            "vector of length {} for {n} two-level atoms",
            psi.len()
        )));
    }
    if levels == 2 {
        return Ok(psi.clone());
    }
    let target = SpaceLayout::atoms(n, levels)?;
    let r = rydberg_level(levels);
    let mut out = CVector::zeros(target.total_dim());
    for (k, amp) in psi.iter().enumerate() {
        if *amp == C64::from(0.0) {
            continue;
        }
        let lv: Vec<usize> = (0..n)
            .map(|i| if k & (1 << (n - 1 - i)) != 0 { r } else { 0 })
            .collect();
        out[target.index_of(&lv)?] = *amp;
    }
    Ok(out)
}

/// Trace-norm floor below which eigenvalues count as zero.
const EIGEN_FLOOR: f64 = 1e-12;

/// `√⟨ψ|ρ|ψ⟩` for a normalized `ψ`.
pub fn fidelity_pure(psi: &CVector, rho: &DensityMatrix) -> Result<f64> {
    Ok(population(rho, psi)?.clamp(0.0, 1.0).sqrt())
}

/// Uhlmann fidelity `Tr√(√σ ρ √σ)` through eigendecompositions.
pub fn fidelity_uhlmann(sigma: &DensityMatrix, rho: &DensityMatrix) -> Result<f64> {
    if sigma.layout() != rho.layout() {
        return Err(dim_err("fidelity between states on different layouts"));
    }
    let s = hermitian_sqrt(&sigma.as_operator())?;
    let m = s.entries() * rho.entries() * s.entries();
    let eig = hermitize(&m).symmetric_eigenvalues();
    Ok(eig
        .iter()
        .map(|&l| if l > EIGEN_FLOOR { l.sqrt() } else { 0.0 })
        .sum())
}

/// Uhlmann fidelity, using `√⟨ψ|ρ|ψ⟩` when `σ` is pure.
pub fn fidelity(sigma: &DensityMatrix, rho: &DensityMatrix) -> Result<f64> {
    if sigma.layout() != rho.layout() {
        return Err(dim_err("fidelity between states on different layouts"));
    }
    let purity = (sigma.entries() * sigma.entries()).trace().re;
    if (purity - 1.0).abs() < 1e-10 {
        let eig = SymmetricEigen::new(hermitize(sigma.entries()));
        let top = eig.eigenvalues.imax();
        let psi = eig.eigenvectors.column(top).into_owned();
        return fidelity_pure(&psi, rho);
    }
    fidelity_uhlmann(sigma, rho)
}

/// `⟨ψ|ρ|ψ⟩`; if `ψ` lives on the atoms only, the cavity is traced out first.
pub fn population(rho: &DensityMatrix, psi: &CVector) -> Result<f64> {
    let layout = rho.layout();
    if psi.len() == rho.dim() {
        return Ok(psi.dotc(&(rho.entries() * psi)).re);
    }
    if layout.fock_site().is_some() && psi.len() == layout.atom_dim() {
        let reduced = partial_trace(rho, &layout.atom_sites())?;
        return Ok(psi.dotc(&(reduced.entries() * psi)).re);
    }
    Err(dim_err(format!(
        "state of length {} against density matrix of dim {}",
        psi.len(),
        rho.dim()
    )))
}

/// Scalar quantity recorded along a time evolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "observable", rename_all = "snake_case")]
pub enum Observable {
    Fidelity {
        target: TargetKind,
    },
    Population {
        target: TargetKind,
    },
    /// Population with two or more atoms in `|r⟩` (pair-weighted).
    DoubleRydberg,
    /// Mean photon number.
    Photons,
}

impl Observable {
    pub fn name(&self) -> String {
        match self {
            Observable::Fidelity { target } => format!("fidelity_{}", target.label()),
            Observable::Population { target } => format!("pop_{}", target.label()),
            Observable::DoubleRydberg => "double_rydberg".into(),
            Observable::Photons => "photons".into(),
        }
    }
}

enum Compiled {
    Fidelity(CVector),
    Population(CVector),
    AtomOperator(CMatrix),
    FullOperator(CMatrix),
    Zero,
}

/// Observables compiled against one generator's state space.
pub struct Probe {
    names: Vec<String>,
    items: Vec<Compiled>,
    layout: SpaceLayout,
    /// Sites kept when reducing to the atoms (`None` when no cavity).
    atom_sites: Option<Vec<usize>>,
}

impl Probe {
    pub fn new(l: &Liouvillian, n_atoms: usize, observables: &[Observable]) -> Result<Self> {
        let layout = l.layout().clone();
        let reduced = l.reduced_basis().map(|b| crate::model::columns(b));
        let atom_sites = layout.fock_site().map(|_| layout.atom_sites());
        let levels = if reduced.is_some() {
            2
        } else {
            layout.site_dims()[0]
        };
        let to_space = |kind: TargetKind| -> Result<CVector> {
            let t = target_state(kind, n_atoms)?;
            match &reduced {
                Some(b) => Ok(b.adjoint() * &t.vector),
                None => lift_atom_vector(&t.vector, n_atoms, levels),
            }
        };
        let mut items = Vec::new();
        for obs in observables {
            items.push(match *obs {
                Observable::Fidelity { target } => Compiled::Fidelity(to_space(target)?),
                Observable::Population { target } => Compiled::Population(to_space(target)?),
                Observable::DoubleRydberg if reduced.is_none() => {
                    let atom_layout = match &atom_sites {
                        Some(sites) => layout.restrict(sites)?,
                        None => layout.clone(),
                    };
                    Compiled::AtomOperator(double_rydberg_projector(&atom_layout)?)
                }
                Observable::Photons if layout.fock_site().is_some() => {
                    let a = cavity_annihilation(&layout)?;
                    Compiled::FullOperator(a.adjoint() * a)
                }
                _ => Compiled::Zero,
            });
        }
        let names = observables.iter().map(Observable::name).collect();
        Ok(Self {
            names,
            items,
            layout,
            atom_sites,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Values of every observable on a state of the generator's space.
    pub fn evaluate(&self, rho: &CMatrix) -> Result<Vec<f64>> {
        let full = DensityMatrix::new_unchecked(self.layout.clone(), rho.clone())?;
        let atom_only = self
            .items
            .iter()
            .any(|i| !matches!(i, Compiled::FullOperator(_) | Compiled::Zero));
        let atoms = match &self.atom_sites {
            Some(sites) if atom_only => partial_trace(&full, sites)?,
            _ => full.clone(),
        };
        let pop = |v: &CVector| v.dotc(&(atoms.entries() * v)).re;
        Ok(self
            .items
            .iter()
            .map(|item| match item {
                Compiled::Fidelity(v) => pop(v).clamp(0.0, 1.0).sqrt(),
                Compiled::Population(v) => pop(v),
                Compiled::AtomOperator(m) => atoms.expectation(m),
                Compiled::FullOperator(m) => full.expectation(m),
                Compiled::Zero => 0.0,
            })
            .collect())
    }
}
