//! Dense symmetric matrices with the trace inner product.
//!
//! Everything in the bound machinery lives in the space S(N) of real
//! symmetric N x N matrices equipped with <X, Y> = tr(XY). This module
//! provides the storage type plus the fixed orthonormal coordinate basis
//! used by the LP subproblems: the basis enumerates index pairs (i, j),
//! i <= j, in row-major order, with off-diagonal elements scaled by
//! 1/sqrt(2) so that coordinates preserve the trace inner product.

use nalgebra::{DMatrix, DVector};

/// Dimension of S(N) as a vector space: N (N + 1) / 2.
pub fn sym_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

/// A dense symmetric matrix. Storage keeps both triangles and every
/// mutation writes (i, j) and (j, i) from the same value, so the symmetry
/// invariant holds exactly, not merely up to tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    data: DMatrix<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            data: DMatrix::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix {
            data: DMatrix::identity(n, n),
        }
    }

    /// Build from a function of (row, col). The function is evaluated once
    /// per unordered pair with i <= j and mirrored, so the result is exactly
    /// symmetric even if `f` is not.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix { data: m }
    }

    /// Row-major entries of the full matrix. Panics if the slice is not
    /// n*n long; entries are mirrored from the upper triangle.
    pub fn from_row_slice(n: usize, entries: &[f64]) -> Self {
        assert_eq!(entries.len(), n * n, "entry count must be n*n");
        Self::from_fn(n, |i, j| entries[i * n + j])
    }

    /// Exact symmetrization (M + M')/2 of an arbitrary square matrix.
    pub fn symmetric_part(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "matrix must be square");
        Self::from_fn(m.nrows(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[(i, j)] = v;
        self.data[(j, i)] = v;
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        self.data.trace()
    }

    /// Trace inner product <X, Y> = tr(XY) = sum_ij X_ij Y_ij.
    pub fn trace_dot(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        let mut acc = 0.0;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += self.data[(i, j)] * other.data[(i, j)];
            }
        }
        acc
    }

    /// Frobenius norm, which under the trace inner product is sqrt(<X, X>).
    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix {
            data: &self.data * c,
        }
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix {
            data: &self.data + &other.data,
        }
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix {
            data: &self.data - &other.data,
        }
    }

    /// x' M x.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.data * x)[(0, 0)]
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .data
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().unwrap()
    }

    /// Clamp eigenvalues from below at `floor` (spectral projection). When no
    /// eigenvalue lies below the floor the matrix is returned unchanged, so
    /// flooring a compliant matrix is bit-exact.
    pub fn eigen_floor(&self, floor: f64) -> SymMatrix {
        let eig = self.data.clone().symmetric_eigen();
        if eig.eigenvalues.iter().all(|&l| l >= floor) {
            return self.clone();
        }
        let clamped = DVector::from_iterator(
            self.dim(),
            eig.eigenvalues.iter().map(|&l| l.max(floor)),
        );
        let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
        SymMatrix::symmetric_part(&rebuilt)
    }

    /// Symmetric square root via eigendecomposition; eigenvalues below zero
    /// are treated as zero. Works for singular PSD matrices where a Cholesky
    /// factor does not exist.
    pub fn sqrt_psd(&self) -> DMatrix<f64> {
        let eig = self.data.clone().symmetric_eigen();
        let roots = DVector::from_iterator(
            self.dim(),
            eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
        );
        &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
    }

    /// True when every pair of entries is bitwise identical.
    pub fn bit_eq(&self, other: &SymMatrix) -> bool {
        self.dim() == other.dim()
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// The canonical orthonormal basis of S(N) in row-major pair order:
/// E_ii for the diagonal, (E_ij + E_ji)/sqrt(2) for i < j.
pub fn sym_basis(n: usize) -> Vec<SymMatrix> {
    let inv_sqrt2 = 1.0 / std::f64::consts::SQRT_2;
    let mut basis = Vec::with_capacity(sym_dim(n));
    for i in 0..n {
        for j in i..n {
            let mut b = SymMatrix::zeros(n);
            if i == j {
                b.set(i, i, 1.0);
            } else {
                b.set(i, j, inv_sqrt2);
            }
            basis.push(b);
        }
    }
    basis
}

/// Coordinates of `m` in the canonical basis; trace inner products of
/// matrices equal dot products of their coordinate vectors.
pub fn to_coords(m: &SymMatrix) -> DVector<f64> {
    let n = m.dim();
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut c = DVector::zeros(sym_dim(n));
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            c[k] = if i == j {
                m.get(i, i)
            } else {
                sqrt2 * m.get(i, j)
            };
            k += 1;
        }
    }
    c
}

/// Inverse of [`to_coords`].
pub fn from_coords(n: usize, c: &DVector<f64>) -> SymMatrix {
    assert_eq!(c.len(), sym_dim(n), "coordinate length mismatch");
    let inv_sqrt2 = 1.0 / std::f64::consts::SQRT_2;
    let mut m = SymMatrix::zeros(n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            if i == j {
                m.set(i, i, c[k]);
            } else {
                m.set(i, j, inv_sqrt2 * c[k]);
            }
            k += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn basis_is_orthonormal() {
        for n in 1..=4 {
            let basis = sym_basis(n);
            assert_eq!(basis.len(), sym_dim(n));
            for (a, ba) in basis.iter().enumerate() {
                for (b, bb) in basis.iter().enumerate() {
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert_relative_eq!(ba.trace_dot(bb), expect, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn coords_preserve_inner_product() {
        let x = SymMatrix::from_row_slice(3, &[1.0, 2.0, -0.5, 2.0, 0.0, 3.0, -0.5, 3.0, 4.0]);
        let y = SymMatrix::from_row_slice(3, &[0.5, -1.0, 2.0, -1.0, 1.5, 0.0, 2.0, 0.0, -2.0]);
        let lhs = x.trace_dot(&y);
        let rhs = to_coords(&x).dot(&to_coords(&y));
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
        let back = from_coords(3, &to_coords(&x));
        assert!(back.sub(&x).norm() < 1e-14);
    }

    #[test]
    fn storage_is_exactly_symmetric() {
        let m = SymMatrix::from_fn(4, |i, j| (i as f64) * 0.3 + (j as f64) * 1.7);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.get(i, j).to_bits(), m.get(j, i).to_bits());
            }
        }
    }

    #[test]
    fn eigen_floor_clamps_negative_part() {
        let m = SymMatrix::from_row_slice(2, &[1.0, 2.0, 2.0, 1.0]); // eigenvalues -1, 3
        assert_relative_eq!(m.min_eigenvalue(), -1.0, epsilon = 1e-12);
        let floored = m.eigen_floor(0.0);
        assert!(floored.min_eigenvalue() >= -1e-12);
        assert_relative_eq!(floored.max_eigenvalue(), 3.0, epsilon = 1e-10);
        // already-PSD input comes back bit-identical
        let psd = SymMatrix::from_row_slice(2, &[2.0, 0.5, 0.5, 1.0]);
        assert!(psd.eigen_floor(0.0).bit_eq(&psd));
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let m = SymMatrix::from_row_slice(2, &[2.0, 0.5, 0.5, 1.0]);
        let r = m.sqrt_psd();
        let back = SymMatrix::symmetric_part(&(&r * &r));
        assert!(back.sub(&m).norm() < 1e-12);
    }
}
