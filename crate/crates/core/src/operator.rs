//! Dense complex operator algebra on composite Hilbert spaces.
//!
//! Every operator is tagged with the [`SpaceLayout`] it acts on so that site
//! embeddings and partial traces can be checked against the tensor structure.
//! Atom levels are numbered `|g⟩ = 0` for every atom; two-level atoms carry
//! `|r⟩ = 1` and three-level atoms `|p⟩ = 1, |r⟩ = 2`.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, input_err, Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Ground level index, shared by two- and three-level atoms.
pub const GROUND: usize = 0;
/// Intermediate level `|p⟩` of a three-level atom.
pub const INTERMEDIATE: usize = 1;

/// Index of the Rydberg level for an atom with `levels` levels.
pub fn rydberg_level(levels: usize) -> usize {
    levels - 1
}

/// Ordered tensor-product structure: one entry per site, at most one of which
/// is a truncated Fock mode.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceLayout {
    site_dims: Vec<usize>,
    fock_site: Option<usize>,
}

impl SpaceLayout {
    pub fn new(site_dims: Vec<usize>, fock_site: Option<usize>) -> Result<Self> {
        if site_dims.is_empty() {
            return Err(input_err("layout needs at least one site"));
        }
        if let Some(d) = site_dims.iter().find(|&&d| d < 2) {
            return Err(input_err(format!("site dimension {d} < 2")));
        }
        if let Some(f) = fock_site {
            if f >= site_dims.len() {
                return Err(input_err(format!("fock site {f} out of range")));
            }
        }
        Ok(Self {
            site_dims,
            fock_site,
        })
    }

    /// `n` atoms with `levels` levels each.
    pub fn atoms(n: usize, levels: usize) -> Result<Self> {
        Self::new(vec![levels; n], None)
    }

    /// `n` atoms followed by a Fock mode of dimension `fock_dim`.
    pub fn atoms_with_fock(n: usize, levels: usize, fock_dim: usize) -> Result<Self> {
        let mut dims = vec![levels; n];
        dims.push(fock_dim);
        Self::new(dims, Some(n))
    }

    pub fn single(dim: usize) -> Result<Self> {
        Self::new(vec![dim], None)
    }

    pub fn fock(dim: usize) -> Result<Self> {
        Self::new(vec![dim], Some(0))
    }

    pub fn site_dims(&self) -> &[usize] {
        &self.site_dims
    }

    pub fn n_sites(&self) -> usize {
        self.site_dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.site_dims.iter().product()
    }

    pub fn fock_site(&self) -> Option<usize> {
        self.fock_site
    }

    pub fn fock_dim(&self) -> Option<usize> {
        self.fock_site.map(|f| self.site_dims[f])
    }

    /// Indices of all non-Fock sites.
    pub fn atom_sites(&self) -> Vec<usize> {
        (0..self.n_sites())
            .filter(|&s| Some(s) != self.fock_site)
            .collect()
    }

    /// Product dimension of the non-Fock sites.
    pub fn atom_dim(&self) -> usize {
        self.atom_sites()
            .iter()
            .map(|&s| self.site_dims[s])
            .product()
    }

    /// Layout of `self ⊗ other`.
    pub fn concat(&self, other: &SpaceLayout) -> Result<Self> {
        let fock_site = match (self.fock_site, other.fock_site) {
            (Some(_), Some(_)) => {
                return Err(input_err("tensor product would hold two Fock sites"))
            }
            (Some(f), None) => Some(f),
            (None, Some(f)) => Some(f + self.n_sites()),
            (None, None) => None,
        };
        let mut dims = self.site_dims.clone();
        dims.extend_from_slice(&other.site_dims);
        Self::new(dims, fock_site)
    }

    /// Sub-layout made of the listed sites, in increasing site order.
    pub fn restrict(&self, sites: &[usize]) -> Result<Self> {
        let dims = sites.iter().map(|&s| self.site_dims[s]).collect();
        let fock = self
            .fock_site
            .and_then(|f| sites.iter().position(|&s| s == f));
        Self::new(dims, fock)
    }

    /// Flat index of the product basis state with the given per-site levels.
    pub fn index_of(&self, levels: &[usize]) -> Result<usize> {
        if levels.len() != self.n_sites() {
            return Err(dim_err(format!(
                "{} levels for a {}-site layout",
                levels.len(),
                self.n_sites()
            )));
        }
        let mut idx = 0;
        for (&l, &d) in levels.iter().zip(&self.site_dims) {
            if l >= d {
                return Err(input_err(format!(
                    "level {l} out of range for site of dim {d}"
                )));
            }
            idx = idx * d + l;
        }
        Ok(idx)
    }

    /// Per-site levels of a flat basis index (inverse of [`Self::index_of`]).
    pub fn levels_of(&self, mut index: usize) -> Vec<usize> {
        let mut levels = vec![0; self.n_sites()];
        for (slot, &d) in levels.iter_mut().zip(&self.site_dims).rev() {
            *slot = index % d;
            index /= d;
        }
        levels
    }

    pub fn basis_vector(&self, levels: &[usize]) -> Result<CVector> {
        let idx = self.index_of(levels)?;
        let mut v = CVector::zeros(self.total_dim());
        v[idx] = ONE;
        Ok(v)
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.n_sites()];
        for s in (0..self.n_sites().saturating_sub(1)).rev() {
            strides[s] = strides[s + 1] * self.site_dims[s + 1];
        }
        strides
    }
}

/// Square complex matrix acting on a [`SpaceLayout`].
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    layout: SpaceLayout,
    entries: CMatrix,
}

impl OperatorMatrix {
    pub fn new(layout: SpaceLayout, entries: CMatrix) -> Result<Self> {
        let d = layout.total_dim();
        if entries.nrows() != d || entries.ncols() != d {
            return Err(dim_err(format!(
                "{}x{} matrix for layout of dimension {d}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(Self { layout, entries })
    }

    pub fn identity(layout: &SpaceLayout) -> Self {
        let d = layout.total_dim();
        Self {
            layout: layout.clone(),
            entries: CMatrix::identity(d, d),
        }
    }

    pub fn zeros(layout: &SpaceLayout) -> Self {
        let d = layout.total_dim();
        Self {
            layout: layout.clone(),
            entries: CMatrix::zeros(d, d),
        }
    }

    /// `|ket⟩⟨bra|` on the layout.
    pub fn outer(layout: &SpaceLayout, ket: &CVector, bra: &CVector) -> Result<Self> {
        Self::new(layout.clone(), ket * bra.adjoint())
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            layout: self.layout.clone(),
            entries: self.entries.adjoint(),
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            layout: self.layout.clone(),
            entries: &self.entries * c,
        }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    /// Largest entry modulus of `self − self†`.
    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.entries)
    }

    /// Largest entry modulus of `U†U − I`.
    pub fn unitarity_defect(&self) -> f64 {
        let d = self.dim();
        max_abs(&(self.entries.adjoint() * &self.entries - CMatrix::identity(d, d)))
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        &self.entries * v
    }

    fn check_same(&self, other: &Self, op: &str) {
        assert_eq!(
            self.layout, other.layout,
            "operator {op} on mismatched layouts"
        );
    }
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.check_same(rhs, "sum");
        OperatorMatrix {
            layout: self.layout.clone(),
            entries: &self.entries + &rhs.entries,
        }
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.check_same(rhs, "difference");
        OperatorMatrix {
            layout: self.layout.clone(),
            entries: &self.entries - &rhs.entries,
        }
    }
}

impl Mul for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.check_same(rhs, "product");
        OperatorMatrix {
            layout: self.layout.clone(),
            entries: &self.entries * &rhs.entries,
        }
    }
}

impl Neg for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn neg(self) -> OperatorMatrix {
        self.scale_real(-1.0)
    }
}

/// Kronecker product; the result layout concatenates the input layouts.
pub fn tensor(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<OperatorMatrix> {
    let layout = a.layout.concat(&b.layout)?;
    OperatorMatrix::new(layout, a.entries.kronecker(&b.entries))
}

/// Places `site_op` on site `site_index` of `layout`, identity elsewhere.
pub fn embed(
    site_op: &OperatorMatrix,
    site_index: usize,
    layout: &SpaceLayout,
) -> Result<OperatorMatrix> {
    let dims = layout.site_dims();
    let Some(&site_dim) = dims.get(site_index) else {
        return Err(input_err(format!(
            "site {site_index} out of range for {} sites",
            dims.len()
        )));
    };
    if site_op.dim() != site_dim {
        return Err(dim_err(format!(
            "site operator of dim {} for site {site_index} of dim {site_dim}",
            site_op.dim()
        )));
    }
    let left: usize = dims[..site_index].iter().product();
    let right: usize = dims[site_index + 1..].iter().product();
    let entries = CMatrix::identity(left, left)
        .kronecker(&site_op.entries)
        .kronecker(&CMatrix::identity(right, right));
    OperatorMatrix::new(layout.clone(), entries)
}

/// Single-site transition `|to⟩⟨from|` on an atom with `n_levels` levels.
pub fn transition_op(
    from_level: usize,
    to_level: usize,
    n_levels: usize,
) -> Result<OperatorMatrix> {
    if from_level >= n_levels || to_level >= n_levels {
        return Err(input_err(format!(
            "levels ({from_level}, {to_level}) out of range for {n_levels}-level site"
        )));
    }
    let mut m = CMatrix::zeros(n_levels, n_levels);
    m[(to_level, from_level)] = ONE;
    OperatorMatrix::new(SpaceLayout::single(n_levels)?, m)
}

/// Truncated photon annihilation operator, `⟨m−1|a|m⟩ = √m`.
pub fn annihilation(fock_dim: usize) -> Result<OperatorMatrix> {
    if fock_dim < 2 {
        return Err(input_err(format!("fock_dim {fock_dim} < 2")));
    }
    let mut m = CMatrix::zeros(fock_dim, fock_dim);
    for k in 1..fock_dim {
        m[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
    }
    OperatorMatrix::new(SpaceLayout::fock(fock_dim)?, m)
}

pub(crate) const HERMITIAN_TOL: f64 = 1e-10;
const SQRT_CLAMP: f64 = 1e-10;

/// Principal square root of a Hermitian positive-semidefinite operator.
///
/// Eigenvalues in `[−1e-10, 0)` are clamped to zero; anything more negative
/// or a Hermiticity defect above `1e-10` is rejected.
pub fn hermitian_sqrt(m: &OperatorMatrix) -> Result<OperatorMatrix> {
    let defect = m.hermiticity_defect();
    if defect > HERMITIAN_TOL {
        return Err(input_err(format!(
            "matrix is not Hermitian (defect {defect:.3e})"
        )));
    }
    let eig = SymmetricEigen::new(hermitize(&m.entries));
    if let Some(&min) = eig.eigenvalues.iter().find(|&&l| l < -SQRT_CLAMP) {
        return Err(input_err(format!(
            "matrix is not positive semidefinite (eigenvalue {min:.3e})"
        )));
    }
    // eigenvalues below the round-off floor are zero; their square roots
    // would otherwise be amplified to ~1e-8
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let floor = m.dim() as f64 * f64::EPSILON * top;
    let entries = spectral_map(&eig, |l| if l > floor { l.sqrt() } else { 0.0 });
    OperatorMatrix::new(m.layout.clone(), entries)
}

/// Restriction `B† op B` to the span of an orthonormal basis.
pub fn project_subspace(op: &OperatorMatrix, basis: &[CVector]) -> Result<OperatorMatrix> {
    let b = basis_matrix(basis, op.dim())?;
    OperatorMatrix::new(
        SpaceLayout::single_or_scalar(basis.len())?,
        b.adjoint() * &op.entries * &b,
    )
}

impl SpaceLayout {
    /// One-site layout of dimension `k`, used for subspace projections.
    /// A one-dimensional subspace is allowed here even though sites normally
    /// have dimension ≥ 2.
    fn single_or_scalar(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(input_err("empty basis"));
        }
        Ok(Self {
            site_dims: vec![k],
            fock_site: None,
        })
    }
}

/// Stacks orthonormal basis vectors as columns, checking orthonormality.
pub fn basis_matrix(basis: &[CVector], dim: usize) -> Result<CMatrix> {
    if basis.is_empty() {
        return Err(input_err("empty basis"));
    }
    if let Some(v) = basis.iter().find(|v| v.len() != dim) {
        return Err(dim_err(format!(
            "basis vector of length {} in space of dim {dim}",
            v.len()
        )));
    }
    let b = CMatrix::from_columns(basis);
    let gram = b.adjoint() * &b;
    let defect = max_abs(&(gram - CMatrix::identity(basis.len(), basis.len())));
    if defect > HERMITIAN_TOL {
        return Err(input_err(format!(
            "basis is not orthonormal (defect {defect:.3e})"
        )));
    }
    Ok(b)
}

/// Density matrix: Hermitian, positive semidefinite, unit trace.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    layout: SpaceLayout,
    entries: CMatrix,
}

pub const DENSITY_HERMITIAN_TOL: f64 = 1e-10;
pub const DENSITY_TRACE_TOL: f64 = 1e-9;
pub const DENSITY_MIN_EIGENVALUE: f64 = -1e-8;

impl DensityMatrix {
    /// Validating constructor.
    pub fn new(layout: SpaceLayout, entries: CMatrix) -> Result<Self> {
        let rho = Self::new_unchecked(layout, entries)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Checks only the shape. Integrator outputs go through here and are
    /// validated separately through [`Self::diagnostics`].
    pub fn new_unchecked(layout: SpaceLayout, entries: CMatrix) -> Result<Self> {
        let op = OperatorMatrix::new(layout, entries)?;
        Ok(Self {
            layout: op.layout,
            entries: op.entries,
        })
    }

    pub fn pure(layout: &SpaceLayout, psi: &CVector) -> Result<Self> {
        if psi.len() != layout.total_dim() {
            return Err(dim_err(format!(
                "state of length {} for dim {}",
                psi.len(),
                layout.total_dim()
            )));
        }
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(input_err("zero state vector"));
        }
        let psi = psi.unscale(norm);
        Self::new(layout.clone(), &psi * psi.adjoint())
    }

    /// Product state with every site in level 0 (atoms in `|g⟩`, vacuum).
    pub fn ground(layout: &SpaceLayout) -> Self {
        let d = layout.total_dim();
        let mut m = CMatrix::zeros(d, d);
        m[(0, 0)] = ONE;
        Self {
            layout: layout.clone(),
            entries: m,
        }
    }

    /// Maximally mixed state.
    pub fn maximally_mixed(layout: &SpaceLayout) -> Self {
        let d = layout.total_dim();
        Self {
            layout: layout.clone(),
            entries: CMatrix::identity(d, d).unscale(d as f64),
        }
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    pub fn as_operator(&self) -> OperatorMatrix {
        OperatorMatrix {
            layout: self.layout.clone(),
            entries: self.entries.clone(),
        }
    }

    pub fn diagnostics(&self) -> StateDiagnostics {
        StateDiagnostics {
            trace_drift: (self.entries.trace() - ONE).norm(),
            hermiticity_defect: hermiticity_defect(&self.entries),
            min_eigenvalue: min_eigenvalue(&self.entries),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.diagnostics();
        if d.hermiticity_defect > DENSITY_HERMITIAN_TOL {
            return Err(input_err(format!(
                "density matrix not Hermitian (defect {:.3e})",
                d.hermiticity_defect
            )));
        }
        if d.trace_drift > DENSITY_TRACE_TOL {
            return Err(input_err(format!(
                "density matrix trace off by {:.3e}",
                d.trace_drift
            )));
        }
        if d.min_eigenvalue < DENSITY_MIN_EIGENVALUE {
            return Err(input_err(format!(
                "density matrix has eigenvalue {:.3e}",
                d.min_eigenvalue
            )));
        }
        Ok(())
    }

    /// Expectation value `Tr(ρ·op)`, real part.
    pub fn expectation(&self, op: &CMatrix) -> f64 {
        // Tr(ρ A) = Σ_ij ρ_ij A_ji
        let mut acc = ZERO;
        let d = self.dim();
        for j in 0..d {
            for i in 0..d {
                acc += self.entries[(i, j)] * op[(j, i)];
            }
        }
        acc.re
    }
}

/// Validity measures of a (possibly slightly perturbed) density matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateDiagnostics {
    pub trace_drift: f64,
    pub hermiticity_defect: f64,
    pub min_eigenvalue: f64,
}

/// Reduced density matrix on `keep_sites`.
pub fn partial_trace(rho: &DensityMatrix, keep_sites: &[usize]) -> Result<DensityMatrix> {
    let layout = rho.layout();
    let n = layout.n_sites();
    let mut keep = keep_sites.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if keep.len() != keep_sites.len() {
        return Err(input_err("duplicate site in keep list"));
    }
    if keep.is_empty() {
        return Err(input_err("partial trace must keep at least one site"));
    }
    if let Some(&s) = keep.iter().find(|&&s| s >= n) {
        return Err(input_err(format!("site {s} out of range for {n} sites")));
    }
    let traced: Vec<usize> = (0..n).filter(|s| !keep.contains(s)).collect();
    let reduced_layout = layout.restrict(&keep)?;
    if traced.is_empty() {
        return DensityMatrix::new_unchecked(reduced_layout, rho.entries.clone());
    }
    let strides = layout.strides();
    let offsets = |sites: &[usize]| -> Vec<usize> {
        let dims: Vec<usize> = sites.iter().map(|&s| layout.site_dims[s]).collect();
        let count: usize = dims.iter().product();
        (0..count)
            .map(|mut k| {
                let mut off = 0;
                for (pos, &s) in sites.iter().enumerate().rev() {
                    off += (k % dims[pos]) * strides[s];
                    k /= dims[pos];
                }
                off
            })
            .collect()
    };
    let kept_off = offsets(&keep);
    let traced_off = offsets(&traced);
    let dk = kept_off.len();
    let src = &rho.entries;
    let out = CMatrix::from_fn(dk, dk, |r, c| {
        traced_off
            .iter()
            .map(|&t| src[(kept_off[r] + t, kept_off[c] + t)])
            .sum()
    });
    DensityMatrix::new_unchecked(reduced_layout, out)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let d = m.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..d {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(m + m†)/2`.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).unscale(2.0)
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    hermitize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `V f(Λ) V†` for a Hermitian eigendecomposition.
pub(crate) fn spectral_map(
    eig: &SymmetricEigen<C64, nalgebra::Dyn>,
    f: impl Fn(f64) -> f64,
) -> CMatrix {
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        let fk = f(l);
        scaled.column_mut(k).scale_mut(fk);
    }
    scaled * v.adjoint()
}

/// `exp(−i·t·H)` for Hermitian `H` via eigendecomposition.
pub fn unitary_exp(h: &CMatrix, t: f64) -> Result<CMatrix> {
    let defect = hermiticity_defect(h);
    if defect > HERMITIAN_TOL * (1.0 + max_abs(h)) {
        return Err(Error::InvalidInput(format!(
            "generator is not Hermitian (defect {defect:.3e})"
        )));
    }
    let eig = SymmetricEigen::new(hermitize(h));
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        let phase = C64::from_polar(1.0, -l * t);
        scaled.column_mut(k).iter_mut().for_each(|z| *z *= phase);
    }
    Ok(scaled * v.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn random_psd(dim: usize, seed: u64) -> CMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = CMatrix::from_fn(dim, dim, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        &a * a.adjoint()
    }

    #[test]
    fn tensor_of_identities_is_identity() {
        let a = OperatorMatrix::identity(&SpaceLayout::single(2).unwrap());
        let b = OperatorMatrix::identity(&SpaceLayout::single(3).unwrap());
        let ab = tensor(&a, &b).unwrap();
        assert_eq!(ab.entries(), &CMatrix::identity(6, 6));
        assert_eq!(ab.layout().site_dims(), &[2, 3]);
    }

    #[test]
    fn tensor_dimensions_multiply() {
        let a = OperatorMatrix::identity(&SpaceLayout::new(vec![2, 2], None).unwrap());
        let b = annihilation(5).unwrap();
        let ab = tensor(&a, &b).unwrap();
        assert_eq!(ab.dim(), 20);
        assert_eq!(ab.layout().fock_site(), Some(2));
    }

    #[test]
    fn sigma_x_times_vacuum_projector_flips_the_atom() {
        let mut sx = CMatrix::zeros(2, 2);
        sx[(0, 1)] = ONE;
        sx[(1, 0)] = ONE;
        let sx = OperatorMatrix::new(SpaceLayout::single(2).unwrap(), sx).unwrap();
        let mut p0 = CMatrix::zeros(2, 2);
        p0[(0, 0)] = ONE;
        let p0 = OperatorMatrix::new(SpaceLayout::fock(2).unwrap(), p0).unwrap();
        let op = tensor(&sx, &p0).unwrap();
        let layout = op.layout().clone();
        let out = op.apply(&layout.basis_vector(&[0, 0]).unwrap());
        assert_eq!(out, layout.basis_vector(&[1, 0]).unwrap());
    }

    #[test]
    fn two_fock_sites_are_rejected() {
        let a = annihilation(2).unwrap();
        assert!(tensor(&a, &a).is_err());
    }

    #[test]
    fn embed_sigma_minus_on_first_atom() {
        let layout = SpaceLayout::atoms(2, 2).unwrap();
        let sm = transition_op(1, 0, 2).unwrap();
        let e = embed(&sm, 0, &layout).unwrap();
        let expected = tensor(
            &sm,
            &OperatorMatrix::identity(&SpaceLayout::single(2).unwrap()),
        )
        .unwrap();
        assert_eq!(e.entries(), expected.entries());
    }

    #[test]
    fn embed_identity_is_identity() {
        let layout = SpaceLayout::atoms_with_fock(2, 3, 4).unwrap();
        for (k, &d) in layout.site_dims().iter().enumerate() {
            let id = OperatorMatrix::identity(&SpaceLayout::single(d).unwrap());
            assert_eq!(
                embed(&id, k, &layout).unwrap().entries(),
                &CMatrix::identity(36, 36)
            );
        }
    }

    #[test]
    fn embedded_annihilation_lowers_photon_number() {
        let layout = SpaceLayout::atoms_with_fock(2, 2, 3).unwrap();
        let a = embed(&annihilation(3).unwrap(), 2, &layout).unwrap();
        let out = a.apply(&layout.basis_vector(&[0, 0, 1]).unwrap());
        assert_eq!(out, layout.basis_vector(&[0, 0, 0]).unwrap());
    }

    #[test]
    fn embed_rejects_mismatched_site() {
        let layout = SpaceLayout::atoms(2, 2).unwrap();
        let op = transition_op(2, 1, 3).unwrap();
        assert!(matches!(embed(&op, 0, &layout), Err(Error::Dimension(_))));
        assert!(embed(&op, 5, &layout).is_err());
    }

    #[test]
    fn transition_ops() {
        let sm = transition_op(1, 0, 2).unwrap();
        assert_eq!(
            sm.entries(),
            &CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO])
        );
        let rp = transition_op(2, 1, 3).unwrap();
        assert_eq!(rp.entries()[(1, 2)], ONE);
        assert_eq!(rp.entries().iter().filter(|z| z.norm() > 0.0).count(), 1);
        assert_eq!(sm.adjoint(), transition_op(0, 1, 2).unwrap());
        assert!(transition_op(2, 0, 2).is_err());
    }

    #[test]
    fn annihilation_matrix() {
        let a2 = annihilation(2).unwrap();
        assert_eq!(
            a2.entries(),
            &CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO])
        );
        let a3 = annihilation(3).unwrap();
        let v = a3.apply(&CVector::from_column_slice(&[ZERO, ZERO, ONE]));
        assert_abs_diff_eq!(v[1].re, 2f64.sqrt(), epsilon = 1e-15);
        assert!(annihilation(1).is_err());
    }

    #[test]
    fn truncated_commutator_has_top_level_correction() {
        // [a, a†] = I − d·|d−1⟩⟨d−1| on a d-dimensional truncation
        for d in 2..7 {
            let a = annihilation(d).unwrap();
            let ad = a.adjoint();
            let comm = &(&a * &ad) - &(&ad * &a);
            let mut expected = CMatrix::identity(d, d);
            expected[(d - 1, d - 1)] -= c(d as f64);
            assert!(max_abs(&(comm.entries() - expected)) < 1e-12);
        }
    }

    #[test]
    fn sqrt_simple_cases() {
        let l = SpaceLayout::single(2).unwrap();
        let id = OperatorMatrix::identity(&l);
        assert!(max_abs(&(hermitian_sqrt(&id).unwrap().entries() - id.entries())) < 1e-14);
        let d = OperatorMatrix::new(
            l.clone(),
            CMatrix::from_diagonal(&CVector::from_column_slice(&[c(4.0), c(9.0)])),
        )
        .unwrap();
        let s = hermitian_sqrt(&d).unwrap();
        assert_abs_diff_eq!(s.entries()[(0, 0)].re, 2.0, epsilon = 1e-13);
        assert_abs_diff_eq!(s.entries()[(1, 1)].re, 3.0, epsilon = 1e-13);
        let psi = CVector::from_column_slice(&[c(0.6), C64::new(0.0, 0.8)]);
        let p = OperatorMatrix::outer(&l, &psi, &psi).unwrap();
        assert!(max_abs(&(hermitian_sqrt(&p).unwrap().entries() - p.entries())) < 1e-12);
    }

    #[test]
    fn sqrt_rejects_bad_input() {
        let l = SpaceLayout::single(2).unwrap();
        let m = OperatorMatrix::new(
            l.clone(),
            CMatrix::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]),
        )
        .unwrap();
        assert!(hermitian_sqrt(&m).is_err());
        let neg = OperatorMatrix::new(
            l,
            CMatrix::from_diagonal(&CVector::from_column_slice(&[c(1.0), c(-1e-3)])),
        )
        .unwrap();
        assert!(hermitian_sqrt(&neg).is_err());
    }

    #[test]
    fn sqrt_clamps_tiny_negative_eigenvalues() {
        let l = SpaceLayout::single(2).unwrap();
        let m = OperatorMatrix::new(
            l,
            CMatrix::from_diagonal(&CVector::from_column_slice(&[c(1.0), c(-1e-11)])),
        )
        .unwrap();
        let s = hermitian_sqrt(&m).unwrap();
        assert_eq!(s.entries()[(1, 1)].re, 0.0);
    }

    #[test]
    fn sqrt_reconstructs_random_psd_up_to_dim_100() {
        for (k, dim) in [3usize, 10, 37, 64, 100].into_iter().enumerate() {
            let m = random_psd(dim, k as u64);
            let op = OperatorMatrix::new(SpaceLayout::single(dim).unwrap(), m.clone()).unwrap();
            let s = hermitian_sqrt(&op).unwrap();
            let back = s.entries() * s.entries();
            assert!(max_abs(&(back - m)) < 1e-9, "dim {dim}");
        }
    }

    #[test]
    fn project_identity_and_orthogonal() {
        let layout = SpaceLayout::atoms(2, 2).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let basis = vec![
            layout.basis_vector(&[0, 0]).unwrap(),
            CVector::from_column_slice(&[ZERO, c(s), c(s), ZERO]),
            CVector::from_column_slice(&[ZERO, c(s), c(-s), ZERO]),
        ];
        let id = OperatorMatrix::identity(&layout);
        assert!(
            max_abs(&(project_subspace(&id, &basis).unwrap().entries() - CMatrix::identity(3, 3)))
                < 1e-15
        );
        let rr = layout.basis_vector(&[1, 1]).unwrap();
        let prr = OperatorMatrix::outer(&layout, &rr, &rr).unwrap();
        assert_eq!(
            max_abs(project_subspace(&prr, &basis).unwrap().entries()),
            0.0
        );
    }

    #[test]
    fn project_rejects_non_orthonormal_basis() {
        let layout = SpaceLayout::atoms(2, 2).unwrap();
        let v = layout.basis_vector(&[0, 0]).unwrap();
        let id = OperatorMatrix::identity(&layout);
        assert!(project_subspace(&id, &[v.clone(), v.clone()]).is_err());
        assert!(project_subspace(&id, &[v.scale(2.0)]).is_err());
    }

    #[test]
    fn partial_trace_of_product_state() {
        let la = SpaceLayout::single(2).unwrap();
        let lb = SpaceLayout::fock(3).unwrap();
        let ra = DensityMatrix::pure(
            &la,
            &CVector::from_column_slice(&[c(0.6), C64::new(0.0, 0.8)]),
        )
        .unwrap();
        let rb = DensityMatrix::maximally_mixed(&lb);
        let joint = tensor(&ra.as_operator(), &rb.as_operator()).unwrap();
        let joint = DensityMatrix::new(joint.layout().clone(), joint.into_entries()).unwrap();
        let back = partial_trace(&joint, &[0]).unwrap();
        assert!(max_abs(&(back.entries() - ra.entries())) < 1e-15);
        let other = partial_trace(&joint, &[1]).unwrap();
        assert!(max_abs(&(other.entries() - rb.entries())) < 1e-15);
        assert_eq!(other.layout().fock_site(), Some(0));
    }

    #[test]
    fn tracing_out_vacuum_cavity() {
        let layout = SpaceLayout::atoms_with_fock(2, 2, 3).unwrap();
        let rho = DensityMatrix::ground(&layout);
        let red = partial_trace(&rho, &[0, 1]).unwrap();
        let mut expected = CMatrix::zeros(4, 4);
        expected[(0, 0)] = ONE;
        assert_eq!(red.entries(), &expected);
        assert!(partial_trace(&rho, &[0, 0]).is_err());
        assert!(partial_trace(&rho, &[7]).is_err());
    }

    #[test]
    fn middle_site_partial_trace_matches_brute_force() {
        let layout = SpaceLayout::new(vec![2, 3, 2], None).unwrap();
        let m = random_psd(12, 9);
        let tr = m.trace();
        let rho = DensityMatrix::new(layout.clone(), m.unscale(tr.re)).unwrap();
        let red = partial_trace(&rho, &[0, 2]).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for a2 in 0..2 {
                    for b2 in 0..2 {
                        let mut acc = ZERO;
                        for k in 0..3 {
                            acc += rho.entries()[(
                                layout.index_of(&[a, k, b]).unwrap(),
                                layout.index_of(&[a2, k, b2]).unwrap(),
                            )];
                        }
                        assert!((acc - red.entries()[(a * 2 + b, a2 * 2 + b2)]).norm() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn density_validation() {
        let l = SpaceLayout::single(2).unwrap();
        assert!(DensityMatrix::new(l.clone(), CMatrix::identity(2, 2)).is_err());
        assert!(DensityMatrix::new(
            l.clone(),
            CMatrix::from_diagonal(&CVector::from_column_slice(&[c(1.5), c(-0.5)]))
        )
        .is_err());
        assert!(DensityMatrix::new(l, CMatrix::identity(2, 2).unscale(2.0)).is_ok());
    }

    fn random_unit_vector(dim: usize) -> impl Strategy<Value = CVector> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim).prop_filter_map(
            "nonzero",
            |v| {
                let v = CVector::from_iterator(v.len(), v.into_iter().map(|(a, b)| C64::new(a, b)));
                let n = v.norm();
                (n > 1e-3).then(|| v.unscale(n))
            },
        )
    }

    proptest! {
        #[test]
        fn embeddings_on_different_sites_commute(i in 0usize..3, j in 0usize..3, from in 0usize..2, to in 0usize..2) {
            prop_assume!(i != j);
            let layout = SpaceLayout::new(vec![2, 2, 2], None).unwrap();
            let x = embed(&transition_op(from, to, 2).unwrap(), i, &layout).unwrap();
            let y = embed(&transition_op(to, from, 2).unwrap(), j, &layout).unwrap();
            let (xy, yx) = (&x * &y, &y * &x);
            prop_assert_eq!(xy.entries(), yx.entries());
        }

        #[test]
        fn tensor_is_associative(d1 in 2usize..4, d2 in 2usize..4, d3 in 2usize..4, s in 0u64..1000) {
            let m = |d: usize, k: u64| OperatorMatrix::new(SpaceLayout::single(d).unwrap(), random_psd(d, s * 7 + k)).unwrap();
            let (a, b, cc) = (m(d1, 1), m(d2, 2), m(d3, 3));
            let left = tensor(&tensor(&a, &b).unwrap(), &cc).unwrap();
            let right = tensor(&a, &tensor(&b, &cc).unwrap()).unwrap();
            prop_assert!(max_abs(&(left.entries() - right.entries())) < 1e-12);
            prop_assert_eq!(left.layout(), right.layout());
        }

        #[test]
        fn partial_trace_keeps_trace_and_positivity(psi in random_unit_vector(12), keep in 0usize..3) {
            let layout = SpaceLayout::new(vec![2, 3, 2], None).unwrap();
            let rho = DensityMatrix::pure(&layout, &psi).unwrap();
            let red = partial_trace(&rho, &[keep]).unwrap();
            let diag = red.diagnostics();
            prop_assert!(diag.trace_drift < 1e-12);
            prop_assert!(diag.min_eigenvalue > -1e-12);
        }

        #[test]
        fn projection_preserves_hermiticity(s in 0u64..500) {
            let layout = SpaceLayout::atoms(2, 2).unwrap();
            let h = OperatorMatrix::new(layout.clone(), random_psd(4, s)).unwrap();
            let r = std::f64::consts::FRAC_1_SQRT_2;
            let basis = vec![
                CVector::from_column_slice(&[ZERO, c(r), c(r), ZERO]),
                CVector::from_column_slice(&[ZERO, c(r), c(-r), ZERO]),
            ];
            prop_assert!(project_subspace(&h, &basis).unwrap().hermiticity_defect() < 1e-14);
        }
    }
}
