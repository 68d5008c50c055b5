//! Diffusion models with discrete-time linear observations.
//!
//! A model is `dx = f(x) dt + g(x) dw` observed as `y = H x + v` with
//! `cov(v) = R`. The drift may carry rational-polynomial structure (vector
//! numerator over a strictly positive scalar denominator); that structure
//! is what the sum-of-squares certificate machinery consumes. Models
//! without it can still be simulated and filtered with the classical EKF.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::poly::Poly;
use crate::sym::SymMatrix;

type VectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Drift term f(x).
#[derive(Clone)]
pub enum Drift {
    /// f(x) = num(x) / den(x) componentwise over a shared scalar
    /// denominator, with den(x) > 0 on the working domain.
    Rational { num: Vec<Poly>, den: Poly },
    /// Opaque callable; excludes the certificate machinery.
    Callable(VectorFn),
}

/// Diffusion term g(x), an N x m matrix.
#[derive(Clone)]
pub enum Diffusion {
    Constant(DMatrix<f64>),
    Polynomial(Vec<Vec<Poly>>),
    Callable { cols: usize, f: MatrixFn },
}

#[derive(Clone)]
pub struct SystemModel {
    dim: usize,
    noise_dim: usize,
    drift: Drift,
    diffusion: Diffusion,
    obs_matrix: DMatrix<f64>,
    obs_noise_cov: SymMatrix,
    obs_noise_sqrt: DMatrix<f64>,
}

impl std::fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemModel")
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("obs_dim", &self.obs_dim())
            .finish()
    }
}

impl SystemModel {
    pub fn new(
        drift: Drift,
        diffusion: Diffusion,
        obs_matrix: DMatrix<f64>,
        obs_noise_cov: SymMatrix,
    ) -> Result<Self> {
        let dim = match &drift {
            Drift::Rational { num, .. } => num.len(),
            Drift::Callable(_) => obs_matrix.ncols(),
        };
        if dim == 0 {
            return Err(Error::InvalidDimension("state dimension must be >= 1".into()));
        }
        if let Drift::Rational { num, den } = &drift {
            if num.iter().any(|p| p.nvars() != dim) || den.nvars() != dim {
                return Err(Error::InvalidDimension(
                    "drift polynomial arity mismatch".into(),
                ));
            }
        }
        let noise_dim = match &diffusion {
            Diffusion::Constant(b) => {
                if b.nrows() != dim {
                    return Err(Error::InvalidDimension("diffusion rows != state dim".into()));
                }
                b.ncols()
            }
            Diffusion::Polynomial(rows) => {
                if rows.len() != dim || rows.is_empty() {
                    return Err(Error::InvalidDimension("diffusion rows != state dim".into()));
                }
                let m = rows[0].len();
                if rows.iter().any(|r| r.len() != m) {
                    return Err(Error::InvalidDimension("ragged diffusion matrix".into()));
                }
                m
            }
            Diffusion::Callable { cols, .. } => *cols,
        };
        if obs_matrix.ncols() != dim {
            return Err(Error::InvalidDimension(
                "observation matrix columns != state dim".into(),
            ));
        }
        let p = obs_matrix.nrows();
        if obs_noise_cov.dim() != p {
            return Err(Error::InvalidDimension(
                "observation noise dimension mismatch".into(),
            ));
        }
        let obs_noise_sqrt = obs_noise_cov.sqrt_psd();
        Ok(SystemModel {
            dim,
            noise_dim,
            drift,
            diffusion,
            obs_matrix,
            obs_noise_cov,
            obs_noise_sqrt,
        })
    }

    /// Linear diffusion `dx = A x dt + B dw`.
    pub fn linear(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        obs_matrix: DMatrix<f64>,
        obs_noise_cov: SymMatrix,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::InvalidDimension("A must be square".into()));
        }
        let num: Vec<Poly> = (0..n)
            .map(|i| {
                let mut p = Poly::zero(n);
                for j in 0..n {
                    if a[(i, j)] != 0.0 {
                        p = p.add(&Poly::var(n, j).scale(a[(i, j)]));
                    }
                }
                p
            })
            .collect();
        SystemModel::new(
            Drift::Rational {
                num,
                den: Poly::constant(n, 1.0),
            },
            Diffusion::Constant(b),
            obs_matrix,
            obs_noise_cov,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_matrix.nrows()
    }

    pub fn obs_matrix(&self) -> &DMatrix<f64> {
        &self.obs_matrix
    }

    pub fn obs_noise_cov(&self) -> &SymMatrix {
        &self.obs_noise_cov
    }

    /// Symmetric square root of R used for observation noise sampling.
    pub fn obs_noise_sqrt(&self) -> &DMatrix<f64> {
        &self.obs_noise_sqrt
    }

    pub fn drift(&self) -> &Drift {
        &self.drift
    }

    pub fn diffusion(&self) -> &Diffusion {
        &self.diffusion
    }

    /// Numerator/denominator polynomial data, when the drift carries it.
    pub fn rational_drift(&self) -> Option<(&[Poly], &Poly)> {
        match &self.drift {
            Drift::Rational { num, den } => Some((num, den)),
            Drift::Callable(_) => None,
        }
    }

    /// Polynomial diffusion entries. Constant matrices are reported as
    /// degree-zero polynomials.
    pub fn polynomial_diffusion(&self) -> Option<Vec<Vec<Poly>>> {
        match &self.diffusion {
            Diffusion::Constant(b) => {
                let n = self.dim;
                Some(
                    (0..b.nrows())
                        .map(|i| {
                            (0..b.ncols())
                                .map(|j| Poly::constant(n, b[(i, j)]))
                                .collect()
                        })
                        .collect(),
                )
            }
            Diffusion::Polynomial(rows) => Some(rows.clone()),
            Diffusion::Callable { .. } => None,
        }
    }

    pub fn drift_at(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.drift {
            Drift::Rational { num, den } => {
                let xs: Vec<f64> = x.iter().copied().collect();
                let d = den.eval(&xs);
                DVector::from_iterator(self.dim, num.iter().map(|p| p.eval(&xs) / d))
            }
            Drift::Callable(f) => f(x),
        }
    }

    pub fn diffusion_at(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match &self.diffusion {
            Diffusion::Constant(b) => b.clone(),
            Diffusion::Polynomial(rows) => {
                let xs: Vec<f64> = x.iter().copied().collect();
                DMatrix::from_fn(self.dim, self.noise_dim, |i, j| rows[i][j].eval(&xs))
            }
            Diffusion::Callable { f, .. } => f(x),
        }
    }

    /// Jacobian of the drift: analytic for rational-polynomial models,
    /// central finite differences otherwise.
    pub fn drift_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match &self.drift {
            Drift::Rational { num, den } => {
                let xs: Vec<f64> = x.iter().copied().collect();
                let d = den.eval(&xs);
                let dd: Vec<f64> = (0..self.dim)
                    .map(|j| den.partial_deriv(j).eval(&xs))
                    .collect();
                DMatrix::from_fn(self.dim, self.dim, |i, j| {
                    let ni = num[i].eval(&xs);
                    let dn = num[i].partial_deriv(j).eval(&xs);
                    (dn * d - ni * dd[j]) / (d * d)
                })
            }
            Drift::Callable(f) => {
                let mut jac = DMatrix::zeros(self.dim, self.dim);
                for j in 0..self.dim {
                    let h = 1e-6 * x[j].abs().max(1.0);
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let col = (f(&xp) - f(&xm)) / (2.0 * h);
                    jac.set_column(j, &col);
                }
                jac
            }
        }
    }

    /// For `dx = A x dt + B dw` (affine drift, constant diffusion) returns
    /// (A, B); the certificate machinery uses the exact closed form there.
    pub fn as_linear(&self) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let (num, den) = self.rational_drift()?;
        if den.degree() != 0 {
            return None;
        }
        let d0 = den.eval(&vec![0.0; self.dim]);
        if num.iter().any(|p| p.degree() > 1) {
            return None;
        }
        let b = match &self.diffusion {
            Diffusion::Constant(b) => b.clone(),
            Diffusion::Polynomial(rows) => {
                if rows.iter().flatten().any(|p| p.degree() > 0) {
                    return None;
                }
                let zero = vec![0.0; self.dim];
                DMatrix::from_fn(self.dim, self.noise_dim, |i, j| rows[i][j].eval(&zero))
            }
            Diffusion::Callable { .. } => return None,
        };
        let mut a = DMatrix::zeros(self.dim, self.dim);
        for (i, p) in num.iter().enumerate() {
            for j in 0..self.dim {
                a[(i, j)] = p.partial_deriv(j).eval(&vec![0.0; self.dim]) / d0;
            }
        }
        Some((a, b))
    }
}

/// The bundled second-order limit-cycle example.
///
/// Drift `f(x) = (A_u / m(x) + A_s) x` with `m(x) = (1 + x'x)/25`,
/// constant diffusion `G = diag(1/5, 1/5)`, and scalar observation of the
/// first state with noise standard deviation 0.01. The drift is stored as
/// numerator `A_u x + m(x) A_s x` over denominator `m(x)`.
pub fn example_model() -> SystemModel {
    let n = 2;
    let x0 = Poly::var(n, 0);
    let x1 = Poly::var(n, 1);
    // m(x) = (1 + x'x) / 25
    let m = Poly::constant(n, 1.0)
        .add(&x0.mul(&x0))
        .add(&x1.mul(&x1))
        .scale(1.0 / 25.0);
    let a_u = [[1.0, 1.0], [-1.0, 1.0]];
    let a_s = [[-1.0, 1.0], [-1.0, -1.0]];
    let lin = |a: &[[f64; 2]; 2], i: usize| {
        Poly::var(n, 0)
            .scale(a[i][0])
            .add(&Poly::var(n, 1).scale(a[i][1]))
    };
    let num: Vec<Poly> = (0..2)
        .map(|i| lin(&a_u, i).add(&m.mul(&lin(&a_s, i))))
        .collect();
    let g = DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.0, 0.2]);
    let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let r = SymMatrix::from_row_slice(1, &[1e-4]);
    SystemModel::new(Drift::Rational { num, den: m }, Diffusion::Constant(g), h, r)
        .expect("example model dimensions are consistent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn example_drift_values() {
        let model = example_model();
        let zero = model.drift_at(&DVector::from_vec(vec![0.0, 0.0]));
        assert!(zero.norm() < 1e-15);

        // m((3,4)) = 26/25
        let (_, den) = model.rational_drift().unwrap();
        assert_relative_eq!(den.eval(&[3.0, 4.0]), 1.04, epsilon = 1e-14);

        let f = model.drift_at(&DVector::from_vec(vec![8.0, 0.0]));
        assert_relative_eq!(f[0], 8.0 / 2.6 - 8.0, epsilon = 1e-12);
        assert_relative_eq!(f[1], -8.0 / 2.6 - 8.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_model_roundtrip() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.3]);
        let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let model =
            SystemModel::linear(a.clone(), b.clone(), h, SymMatrix::from_row_slice(1, &[0.1]))
                .unwrap();
        let (ar, br) = model.as_linear().unwrap();
        assert!((ar - &a).norm() < 1e-14);
        assert!((br - &b).norm() < 1e-14);
        let x = DVector::from_vec(vec![2.0, -1.0]);
        assert!((model.drift_at(&x) - &a * &x).norm() < 1e-14);
        assert!((model.drift_jacobian(&x) - &a).norm() < 1e-14);
    }

    #[test]
    fn example_is_not_linear() {
        assert!(example_model().as_linear().is_none());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let model = example_model();
        let fd_model = SystemModel::new(
            Drift::Callable(Arc::new({
                let m = example_model();
                move |x: &DVector<f64>| m.drift_at(x)
            })),
            Diffusion::Constant(DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.0, 0.2])),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            SymMatrix::from_row_slice(1, &[1e-4]),
        )
        .unwrap();
        for &p in &[[0.5, -1.5], [8.0, 0.0], [3.0, 4.0]] {
            let x = DVector::from_vec(p.to_vec());
            let analytic = model.drift_jacobian(&x);
            let fd = fd_model.drift_jacobian(&x);
            assert!(
                (analytic.clone() - fd.clone()).norm() < 1e-6 * (1.0 + analytic.norm()),
                "at {p:?}: {analytic} vs {fd}"
            );
        }
    }
}
