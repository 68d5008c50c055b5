//! Small dense semidefinite programming.
//!
//! Problems have one PSD-constrained symmetric matrix variable W (the Gram
//! matrix of a sum-of-squares decomposition), a handful of free scalar
//! variables y, linear equality constraints coupling them, and a linear
//! objective. Sizes are desk scale: Gram dimension below ~15, a few dozen
//! equalities.
//!
//! Strategy: eliminate the equalities. An SVD of the stacked constraint
//! matrix yields a particular solution and a basis of its null space, which
//! turns the problem into an unconstrained linear-matrix-inequality form
//!
//! ```text
//!   minimize  c0 + g'v   subject to   G(v) = G0 + sum_j v_j G_j  >= 0
//! ```
//!
//! solved by a log-det barrier with damped Newton steps and a geometric
//! barrier-parameter schedule. A phase-I pass maximizes the smallest
//! eigenvalue to find a strictly feasible start or certify infeasibility.
//! Iterates stay strictly inside the cone, so the returned Gram matrix is
//! positive semidefinite by construction and the equalities hold to the
//! accuracy of the null-space factorization.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sym::{sym_dim, to_coords, SymMatrix};

/// One equality constraint `<gram_coeff, W> + free_coeff' y = rhs`.
#[derive(Clone, Debug)]
pub struct SdpEquality {
    pub gram_coeff: SymMatrix,
    pub free_coeff: Vec<f64>,
    pub rhs: f64,
}

/// Linear SDP over one PSD matrix variable and free scalars.
#[derive(Clone, Debug)]
pub struct SemidefiniteProgram {
    pub gram_dim: usize,
    pub num_free: usize,
    /// Objective contribution `<obj_gram, W>`.
    pub obj_gram: SymMatrix,
    /// Objective contribution `obj_free' y`.
    pub obj_free: Vec<f64>,
    pub eqs: Vec<SdpEquality>,
}

impl SemidefiniteProgram {
    pub fn new(gram_dim: usize, num_free: usize) -> Self {
        SemidefiniteProgram {
            gram_dim,
            num_free,
            obj_gram: SymMatrix::zeros(gram_dim),
            obj_free: vec![0.0; num_free],
            eqs: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.gram_dim == 0 {
            return Err(Error::InvalidProblem("gram dimension must be >= 1".into()));
        }
        if self.obj_gram.dim() != self.gram_dim || self.obj_free.len() != self.num_free {
            return Err(Error::InvalidProblem("objective dimension mismatch".into()));
        }
        for eq in &self.eqs {
            if eq.gram_coeff.dim() != self.gram_dim || eq.free_coeff.len() != self.num_free {
                return Err(Error::InvalidProblem("equality dimension mismatch".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum SdpSolution {
    Optimal {
        gram: SymMatrix,
        free: Vec<f64>,
        value: f64,
    },
    /// No PSD Gram matrix satisfies the equalities. When available, the
    /// witness is a unit-trace PSD matrix orthogonal (to solver accuracy)
    /// to every feasible Gram direction while pairing strictly negatively
    /// with the particular solution of the equality system.
    Infeasible { witness: Option<SymMatrix> },
}

/// Eigenvalues of M'M below this fraction of the largest are treated as
/// null directions, i.e. singular values below 1e-6 of the largest. The
/// coefficient-matching systems assembled by the certificate machinery have
/// a clean spectral gap well above this.
const GRAM_NULL_TOL: f64 = 1e-12;
const CENTER_TOL: f64 = 1e-10;
const MAX_STAGES: usize = 30;
const MAX_NEWTON: usize = 120;

pub fn solve_sdp(sdp: &SemidefiniteProgram) -> Result<SdpSolution> {
    sdp.validate()?;
    let d = sdp.gram_dim;
    let sd = sym_dim(d);
    let nf = sdp.num_free;
    let m = sdp.eqs.len();

    // stack the equality system over (gram coordinates, free variables)
    let cols = sd + nf;
    let mut mat = DMatrix::zeros(m.max(1), cols);
    let mut rhs = DVector::zeros(m.max(1));
    for (k, eq) in sdp.eqs.iter().enumerate() {
        let gc = to_coords(&eq.gram_coeff);
        for j in 0..sd {
            mat[(k, j)] = gc[j];
        }
        for j in 0..nf {
            mat[(k, sd + j)] = eq.free_coeff[j];
        }
        rhs[k] = eq.rhs;
    }

    // One orthonormal decomposition of the coefficient space drives both the
    // particular solution and the null-space basis: eigenvectors of M'M with
    // eigenvalue above the cut span the row space, the rest span the null
    // space. The systems assembled here are cleanly consistent or cleanly
    // rank-deficient, so the squared conditioning of the normal equations is
    // not a concern at this scale; the residual check below guards it.
    let gram = mat.transpose() * &mat;
    let eig = gram.symmetric_eigen();
    let lam_max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let null_cut = (lam_max * GRAM_NULL_TOL).max(1e-300);
    let mth = mat.transpose() * &rhs;
    let mut particular = DVector::zeros(cols);
    for i in 0..cols {
        let lam = eig.eigenvalues[i];
        if lam > null_cut {
            let v = eig.eigenvectors.column(i);
            particular += v.into_owned() * (v.dot(&mth) / lam);
        }
    }
    let residual = (&mat * &particular - &rhs).norm();
    if residual > 1e-7 * (1.0 + rhs.norm()) {
        // the linear system itself is inconsistent
        return Ok(SdpSolution::Infeasible { witness: None });
    }

    let obj_gram_coords = to_coords(&sdp.obj_gram);
    let mut g0 = coords_to_matrix(d, &particular.rows(0, sd).into_owned());
    let y0: Vec<f64> = (0..nf).map(|j| particular[sd + j]).collect();
    let obj0: f64 = obj_gram_coords.dot(&particular.rows(0, sd).into_owned())
        + sdp
            .obj_free
            .iter()
            .zip(y0.iter())
            .map(|(c, y)| c * y)
            .sum::<f64>();

    let mut dirs_gram: Vec<DMatrix<f64>> = Vec::new();
    let mut dirs_free: Vec<Vec<f64>> = Vec::new();
    let mut dirs_obj: Vec<f64> = Vec::new();
    for r in 0..cols {
        if eig.eigenvalues[r] > null_cut {
            continue;
        }
        let dir = eig.eigenvectors.column(r).into_owned();
        let wpart = dir.rows(0, sd).into_owned();
        let ypart: Vec<f64> = (0..nf).map(|j| dir[sd + j]).collect();
        let obj_component = obj_gram_coords.dot(&wpart)
            + sdp
                .obj_free
                .iter()
                .zip(ypart.iter())
                .map(|(c, y)| c * y)
                .sum::<f64>();
        if wpart.norm() < 1e-12 {
            if obj_component.abs() > 1e-9 {
                return Err(Error::Sdp(
                    "objective is unbounded along a free-variable null direction".into(),
                ));
            }
            continue; // direction affects nothing; pin it to zero
        }
        dirs_gram.push(coords_to_matrix(d, &wpart));
        dirs_free.push(ypart);
        dirs_obj.push(obj_component);
    }
    let k = dirs_gram.len();

    symmetrize(&mut g0);
    let scale0 = g0.norm().max(1.0);

    if k == 0 {
        // fully determined Gram matrix: just check the cone
        let gsym = SymMatrix::symmetric_part(&g0);
        if gsym.min_eigenvalue() >= -1e-9 * scale0 {
            return Ok(SdpSolution::Optimal {
                gram: gsym.eigen_floor(0.0),
                free: y0,
                value: obj0,
            });
        }
        return Ok(SdpSolution::Infeasible { witness: None });
    }

    // ---- phase I: maximize the feasibility margin t with G(v) - t I >= 0
    let feas_margin = 1e-4 * scale0;
    let box_radius = 1e6 * scale0;
    let min_eig0 = SymMatrix::symmetric_part(&g0).min_eigenvalue();
    let v_start = if min_eig0 >= feas_margin {
        DVector::zeros(k)
    } else {
        let mut phase1_dirs = dirs_gram.clone();
        phase1_dirs.push(-DMatrix::<f64>::identity(d, d));
        let mut phase1_obj = vec![0.0; k + 1];
        phase1_obj[k] = -1.0; // maximize t
        let mut u0 = DVector::zeros(k + 1);
        u0[k] = min_eig0 - scale0.max(1.0);
        let phase1 = barrier_minimize(
            &g0,
            &phase1_dirs,
            &DVector::from_vec(phase1_obj),
            &u0,
            box_radius,
            1e-10 * scale0,
            Some((k, feas_margin)),
        )?;
        let t_star = phase1.u[k];
        if t_star <= 1e-12 * scale0 {
            if t_star < -1e-9 * scale0 {
                // certified infeasible; extract the separating functional
                let g_final = eval_lmi(&g0, &phase1_dirs, &phase1.u);
                let witness = g_final
                    .clone()
                    .cholesky()
                    .map(|ch| {
                        let inv = ch.inverse();
                        let tr = inv.trace();
                        SymMatrix::symmetric_part(&(inv / tr))
                    });
                return Ok(SdpSolution::Infeasible { witness });
            }
            // margin indistinguishable from zero: no usable interior
            return Ok(SdpSolution::Infeasible { witness: None });
        }
        phase1.u.rows(0, k).into_owned()
    };

    // ---- phase II from the strictly feasible point found above
    let obj_vec = DVector::from_vec(dirs_obj.clone());
    let gap_tol = 1e-8 * (1.0 + obj0.abs());
    let result = barrier_minimize(
        &g0,
        &dirs_gram,
        &obj_vec,
        &v_start,
        box_radius,
        gap_tol,
        None,
    )?;
    if result.hit_box {
        return Err(Error::Sdp(
            "solution pressed against the guard box; objective appears unbounded".into(),
        ));
    }

    let gram_mat = eval_lmi(&g0, &dirs_gram, &result.u);
    let mut free = y0.clone();
    for (j, df) in dirs_free.iter().enumerate() {
        for (fi, dv) in free.iter_mut().zip(df.iter()) {
            *fi += result.u[j] * dv;
        }
    }
    let value = obj0 + obj_vec.dot(&result.u);
    Ok(SdpSolution::Optimal {
        gram: SymMatrix::symmetric_part(&gram_mat),
        free,
        value,
    })
}

fn coords_to_matrix(d: usize, coords: &DVector<f64>) -> DMatrix<f64> {
    crate::sym::from_coords(d, coords).as_matrix().clone()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn eval_lmi(g0: &DMatrix<f64>, dirs: &[DMatrix<f64>], u: &DVector<f64>) -> DMatrix<f64> {
    let mut g = g0.clone();
    for (j, d) in dirs.iter().enumerate() {
        g += d * u[j];
    }
    g
}

struct BarrierResult {
    u: DVector<f64>,
    hit_box: bool,
}

/// Path-following minimization of `obj' u` over `G(u) >= 0`, with a large
/// box `|u_j| <= box_radius` folded into the barrier. The box keeps every
/// centering problem bounded: without it the log-det term alone rewards
/// running off to infinity along directions where `G` grows, which is
/// exactly what happens in a phase-I problem whose optimal face is a ray.
///
/// `u0` must be strictly feasible. `early_stop = Some((idx, level))` returns
/// as soon as `u[idx] >= level`, which phase I uses to bail out once a
/// comfortable feasibility margin exists. `hit_box` reports whether the
/// returned point presses against the guard box, i.e. the unconstrained
/// problem was likely unbounded.
fn barrier_minimize(
    g0: &DMatrix<f64>,
    dirs: &[DMatrix<f64>],
    obj: &DVector<f64>,
    u0: &DVector<f64>,
    box_radius: f64,
    gap_tol: f64,
    early_stop: Option<(usize, f64)>,
) -> Result<BarrierResult> {
    let d = g0.nrows();
    let k = dirs.len();
    let mut u = u0.clone();
    let mut t = 10.0;
    // barrier parameter of the product cone: d from the LMI, 2 per box side
    let nu = (d + 2 * k) as f64;

    let g_init = eval_lmi(g0, dirs, &u);
    if g_init.clone().cholesky().is_none() {
        return Err(Error::Sdp("barrier started outside the cone".into()));
    }
    if u.iter().any(|v| v.abs() >= box_radius) {
        return Err(Error::Sdp("barrier started outside the guard box".into()));
    }

    let barrier_value = |g_chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>, u: &DVector<f64>| {
        let logdet = 2.0 * g_chol.l().diagonal().map(|v| v.ln()).sum();
        let box_term: f64 = u
            .iter()
            .map(|&v| (box_radius - v).ln() + (box_radius + v).ln())
            .sum();
        -logdet - box_term
    };

    for _stage in 0..MAX_STAGES {
        // center at the current barrier parameter
        for _iter in 0..MAX_NEWTON {
            let g = eval_lmi(g0, dirs, &u);
            let chol = g
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Sdp("iterate left the cone".into()))?;
            let ginv = chol.inverse();
            let _ = &g;

            let mut grad = DVector::zeros(k);
            let prods: Vec<DMatrix<f64>> = dirs.iter().map(|gd| &ginv * gd).collect();
            for j in 0..k {
                let box_g = 1.0 / (box_radius - u[j]) - 1.0 / (box_radius + u[j]);
                grad[j] = t * obj[j] - prods[j].trace() + box_g;
            }
            let mut hess = DMatrix::zeros(k, k);
            for a in 0..k {
                for b in a..k {
                    let mut acc = 0.0;
                    for i in 0..d {
                        for jj in 0..d {
                            acc += prods[a][(i, jj)] * prods[b][(jj, i)];
                        }
                    }
                    hess[(a, b)] = acc;
                    hess[(b, a)] = acc;
                }
                let lo = box_radius - u[a];
                let hi = box_radius + u[a];
                hess[(a, a)] += 1.0 / (lo * lo) + 1.0 / (hi * hi);
            }
            // solve H step = -grad; ridge the diagonal if needed
            let step = solve_spd(&hess, &(-&grad))?;
            let slope = grad.dot(&step);
            if slope >= 0.0 {
                break; // numerically not a descent direction; stage is done
            }
            // lambda^2 / (2t) estimates the objective suboptimality of the
            // current centering problem; no point polishing far below the
            // final duality-gap target
            let decrement = -slope;
            if decrement * 0.5 < CENTER_TOL.max(0.05 * gap_tol * t) {
                break;
            }

            // line search: stay in the cone and the box, then Armijo
            let f_here = t * obj.dot(&u) + barrier_value(&chol, &u);
            let g_step = {
                let mut gs = DMatrix::zeros(d, d);
                for (j, gd) in dirs.iter().enumerate() {
                    gs += gd * step[j];
                }
                gs
            };
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand = &u + &step * alpha;
                if cand.iter().all(|v| v.abs() < box_radius) {
                    let gc = &g + &g_step * alpha;
                    if let Some(ch) = gc.cholesky() {
                        let f_cand = t * obj.dot(&cand) + barrier_value(&ch, &cand);
                        if f_cand <= f_here + 0.25 * alpha * slope {
                            u = cand;
                            accepted = true;
                            break;
                        }
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break; // no further progress possible at this parameter
            }
            if let Some((idx, level)) = early_stop {
                if u[idx] >= level {
                    return Ok(BarrierResult { u, hit_box: false });
                }
            }
        }
        if let Some((idx, level)) = early_stop {
            if u[idx] >= level {
                return Ok(BarrierResult { u, hit_box: false });
            }
        }
        if nu / t <= gap_tol {
            break;
        }
        t *= 30.0;
    }
    let hit_box = u.iter().any(|v| v.abs() >= 0.5 * box_radius);
    Ok(BarrierResult { u, hit_box })
}

fn solve_spd(h: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    let k = h.nrows();
    let ridge = 1e-12 * (h.trace().abs() / k as f64).max(1.0);
    let mut hr = h.clone();
    for i in 0..k {
        hr[(i, i)] += ridge;
    }
    hr.clone()
        .cholesky()
        .map(|ch| ch.solve(b))
        .or_else(|| hr.lu().solve(b))
        .ok_or_else(|| Error::Sdp("newton system singular".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn minimum_trace_with_pinned_corner() {
        // minimize tr X s.t. X >= 0 (2x2), X11 = 1
        let mut sdp = SemidefiniteProgram::new(2, 0);
        sdp.obj_gram = SymMatrix::identity(2);
        let mut a = SymMatrix::zeros(2);
        a.set(0, 0, 1.0);
        sdp.eqs.push(SdpEquality {
            gram_coeff: a,
            free_coeff: vec![],
            rhs: 1.0,
        });
        match solve_sdp(&sdp).unwrap() {
            SdpSolution::Optimal { gram, value, .. } => {
                assert_relative_eq!(value, 1.0, epsilon = 1e-6);
                assert_relative_eq!(gram.get(0, 0), 1.0, epsilon = 1e-6);
                assert!(gram.get(1, 1).abs() < 1e-6);
                assert!(gram.min_eigenvalue() >= -1e-8);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn quartic_plus_one_is_sum_of_squares() {
        // p(e) = e^4 + 1 with basis z = [1, e, e^2]: match all coefficients
        let mut sdp = SemidefiniteProgram::new(3, 0);
        let coeffs = [1.0, 0.0, 0.0, 0.0, 1.0]; // e^0 .. e^4
        for (deg, &c) in coeffs.iter().enumerate() {
            let mut a = SymMatrix::zeros(3);
            for i in 0..3 {
                for j in 0..3 {
                    if i + j == deg {
                        a.set(i, j, a.get(i, j).max(1.0));
                    }
                }
            }
            sdp.eqs.push(SdpEquality {
                gram_coeff: a,
                free_coeff: vec![],
                rhs: c,
            });
        }
        match solve_sdp(&sdp).unwrap() {
            SdpSolution::Optimal { gram, .. } => {
                assert!(gram.min_eigenvalue() >= -1e-8);
                // z' W z reproduces the polynomial
                for &e in &[-2.0, -0.5, 0.0, 1.0, 3.0] {
                    let z = nalgebra::DVector::from_vec(vec![1.0, e, e * e]);
                    assert_relative_eq!(gram.quad_form(&z), e.powi(4) + 1.0, epsilon = 1e-6);
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_pin_is_infeasible() {
        let mut sdp = SemidefiniteProgram::new(1, 0);
        let mut a = SymMatrix::zeros(1);
        a.set(0, 0, 1.0);
        sdp.eqs.push(SdpEquality {
            gram_coeff: a,
            free_coeff: vec![],
            rhs: -1.0,
        });
        match solve_sdp(&sdp).unwrap() {
            SdpSolution::Infeasible { .. } => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn free_variable_shifts_objective() {
        // minimize y s.t. W11 - y = 0, W 1x1 PSD: optimum y = 0 at W = 0
        let mut sdp = SemidefiniteProgram::new(1, 1);
        sdp.obj_free = vec![1.0];
        let mut a = SymMatrix::zeros(1);
        a.set(0, 0, 1.0);
        sdp.eqs.push(SdpEquality {
            gram_coeff: a,
            free_coeff: vec![-1.0],
            rhs: 0.0,
        });
        match solve_sdp(&sdp).unwrap() {
            SdpSolution::Optimal { free, value, .. } => {
                assert!(value.abs() < 1e-6);
                assert!(free[0].abs() < 1e-6);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
