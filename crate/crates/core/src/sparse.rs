//! Coordinate-list matrices for the integrator hot loops.
//!
//! Generators are assembled densely and compressed here once; the integrators
//! then only multiply sparse operators into dense density matrices.

use crate::operator::{CMatrix, C64};

const DROP_TOL: f64 = 1e-15;

#[derive(Clone, Debug)]
pub(crate) struct Sparse {
    dim: usize,
    /// `(row, col, value)`, sorted by column then row.
    entries: Vec<(usize, usize, C64)>,
}

impl Sparse {
    pub fn from_dense(m: &CMatrix) -> Self {
        let scale = m.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        let cutoff = DROP_TOL * scale;
        let mut entries = Vec::new();
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                let v = m[(r, c)];
                if v.norm() > cutoff {
                    entries.push((r, c, v));
                }
            }
        }
        Self {
            dim: m.nrows(),
            entries,
        }
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// `out += coef · S · m`.
    pub fn mul_acc(&self, coef: C64, m: &CMatrix, out: &mut CMatrix) {
        let d = self.dim;
        let ms = m.as_slice();
        let os = out.as_mut_slice();
        for &(r, c, v) in &self.entries {
            let w = coef * v;
            for j in 0..d {
                os[r + j * d] += w * ms[c + j * d];
            }
        }
    }

    /// `out += coef · S · m†`.
    pub fn mul_adj_acc(&self, coef: C64, m: &CMatrix, out: &mut CMatrix) {
        let d = self.dim;
        let ms = m.as_slice();
        let os = out.as_mut_slice();
        for &(r, c, v) in &self.entries {
            let w = coef * v;
            // (m†)[c, j] = conj(m[j, c]), a contiguous column of m
            let col = &ms[c * d..(c + 1) * d];
            for (j, z) in col.iter().enumerate() {
                os[r + j * d] += w * z.conj();
            }
        }
    }

    /// `out += m · (coef · S)†`, one contiguous column update per entry.
    pub fn right_adj_acc(&self, coef: C64, m: &CMatrix, out: &mut CMatrix) {
        let d = self.dim;
        let ms = m.as_slice();
        let os = out.as_mut_slice();
        for &(r, c, v) in &self.entries {
            let w = (coef * v).conj();
            let src = &ms[c * d..(c + 1) * d];
            let dst = &mut os[r * d..(r + 1) * d];
            for (o, x) in dst.iter_mut().zip(src) {
                *o += w * x;
            }
        }
    }

    /// `out += S · m · S†`, summing over pairs of stored entries.
    pub fn sandwich_acc(&self, m: &CMatrix, out: &mut CMatrix) {
        let d = self.dim;
        let ms = m.as_slice();
        let os = out.as_mut_slice();
        for &(r2, c2, v2) in &self.entries {
            let v2c = v2.conj();
            for &(r1, c1, v1) in &self.entries {
                os[r1 + r2 * d] += v1 * ms[c1 + c2 * d] * v2c;
            }
        }
    }

    /// Whether [`Self::sandwich_acc`] beats two dense-width products.
    pub fn prefers_sandwich(&self) -> bool {
        self.nnz() <= 2 * self.dim
    }

    /// `out += coef · S · v` for a state vector.
    pub fn mul_vec_acc(&self, coef: C64, v: &[C64], out: &mut [C64]) {
        for &(r, c, x) in &self.entries {
            out[r] += coef * x * v[c];
        }
    }
}
