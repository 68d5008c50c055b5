//! Frames of symmetric matrices: the positively-spanning P set, the PSD
//! rank-one U generators, and the dual-cone generators T with their Gram
//! matrix.
//!
//! The P frame consists of n + 1 unit-norm symmetric matrices (n the
//! dimension of the symmetric space) whose pairwise trace inner products
//! all equal -1/n and which sum to zero. Any n of them span, so for every
//! nonzero symmetric Z some member pairs strictly positively with Z; this
//! is what keeps the per-step derivative polytope bounded.
//!
//! The U set generates a polyhedral inner approximation of the PSD cone;
//! its dual cone is generated by the T set, obtained by solving the
//! orthogonality systems of every n-subset of the U's and filtering the
//! candidates down to a minimal generator set.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::solver::lp::{solve_lp, LinearProgram, LpSolution, Sense};
use crate::sym::{from_coords, sym_basis, sym_dim, to_coords, SymMatrix};

/// Tolerance for orthogonality residuals and duplicate detection.
const DUP_TOL: f64 = 1e-9;
/// A dual-cone candidate must pair with every U generator above this level.
const SIGN_TOL: f64 = -1e-9;

/// The n + 1 positively-spanning frame members for N x N symmetric matrices.
#[derive(Clone, Debug)]
pub struct PFrame {
    dim_state: usize,
    members: Vec<SymMatrix>,
}

impl PFrame {
    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    /// Dimension of the symmetric space, n = N (N + 1) / 2.
    pub fn dim_sym(&self) -> usize {
        sym_dim(self.dim_state)
    }

    pub fn members(&self) -> &[SymMatrix] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Generators of the inner PSD approximation (`u_gens`), the generators of
/// its dual cone (`t_gens`), and the Gram matrix L_ij = tr(T_i T_j).
#[derive(Clone, Debug)]
pub struct DualFrame {
    pub u_gens: Vec<SymMatrix>,
    pub t_gens: Vec<SymMatrix>,
    pub gram_l: DMatrix<f64>,
}

/// Offline frame bundle used by the bound propagation.
#[derive(Clone, Debug)]
pub struct Frames {
    pub p_frame: PFrame,
    pub dual: DualFrame,
}

/// Build the P frame by the unit-norm recursion.
///
/// The first member is pinned to the normalized identity direction and the
/// orthogonal complement directions are drawn from the canonical symmetric
/// basis in row-major order via Gram-Schmidt, so the output is canonical
/// and bit-reproducible.
pub fn build_p_frame(dim_state: usize) -> Result<PFrame> {
    if dim_state == 0 {
        return Err(Error::InvalidDimension("state dimension must be >= 1".into()));
    }
    let n_state = dim_state;
    let n = sym_dim(n_state);
    let p1 = SymMatrix::identity(n_state).scale(1.0 / (n_state as f64).sqrt());

    let mut members = vec![p1.clone()];
    let mut ortho = vec![p1.clone()];
    let mut running_sum = p1;
    let basis = sym_basis(n_state);

    for k in 1..n {
        let kf = k as f64;
        let nf = n as f64;
        let alpha = -1.0 / (nf - (kf - 1.0));
        let beta = (1.0 - kf / (nf * (nf - (kf - 1.0)))).sqrt();
        let s_k = orthogonal_complement_direction(&basis, &ortho)?;
        let next = running_sum.scale(alpha).add(&s_k.scale(beta));
        running_sum = running_sum.add(&next);
        members.push(next);
        ortho.push(s_k);
    }
    members.push(running_sum.scale(-1.0));
    Ok(PFrame { dim_state, members })
}

/// First canonical basis element with a nonzero residual against the
/// orthonormal set, normalized.
fn orthogonal_complement_direction(
    basis: &[SymMatrix],
    ortho: &[SymMatrix],
) -> Result<SymMatrix> {
    for b in basis {
        let mut r = b.clone();
        for o in ortho {
            r = r.sub(&o.scale(o.trace_dot(b)));
        }
        let norm = r.norm();
        if norm > DUP_TOL {
            return Ok(r.scale(1.0 / norm));
        }
    }
    Err(Error::DegenerateGenerators(
        "canonical basis exhausted during frame construction".into(),
    ))
}

/// Default rank-one PSD generators: e_i e_i', then (e_i + e_j)(e_i + e_j)'
/// and (e_i - e_j)(e_i - e_j)' for i < j. For N = 2 this is exactly the
/// four-matrix set used by the bundled example.
pub fn default_u_generators(dim_state: usize) -> Vec<SymMatrix> {
    let n = dim_state;
    let outer = |v: &DVector<f64>| {
        let m = v * v.transpose();
        SymMatrix::symmetric_part(&m)
    };
    let mut gens = Vec::new();
    for i in 0..n {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        gens.push(outer(&v));
    }
    for sign in [1.0, -1.0] {
        for i in 0..n {
            for j in (i + 1)..n {
                let mut v = DVector::zeros(n);
                v[i] = 1.0;
                v[j] = sign;
                gens.push(outer(&v));
            }
        }
    }
    gens
}

/// Compute the dual-cone generators from a spanning set of PSD generators.
///
/// Every n-subset of the U's with a nonsingular orthogonality system
/// contributes one candidate per subset member (unit pairing with that
/// member, zero with the rest). A candidate survives only if it pairs
/// nonnegatively with every U; positive multiples are deduplicated and
/// candidates expressible as nonnegative combinations of the rest are
/// dropped, leaving a minimal generator set.
pub fn dual_generators(u_gens: &[SymMatrix]) -> Result<Vec<SymMatrix>> {
    if u_gens.is_empty() {
        return Err(Error::DegenerateGenerators("empty generator set".into()));
    }
    let dim_state = u_gens[0].dim();
    let n = sym_dim(dim_state);
    if u_gens.len() < n {
        return Err(Error::DegenerateGenerators(format!(
            "{} generators cannot span a {}-dimensional symmetric space",
            u_gens.len(),
            n
        )));
    }
    let coords: Vec<DVector<f64>> = u_gens.iter().map(to_coords).collect();
    {
        let mut m = DMatrix::zeros(u_gens.len(), n);
        for (i, c) in coords.iter().enumerate() {
            m.row_mut(i).copy_from(&c.transpose());
        }
        if m.svd(false, false).rank(1e-10) < n {
            return Err(Error::DegenerateGenerators(
                "generators do not span the symmetric space".into(),
            ));
        }
    }

    let mut candidates: Vec<DVector<f64>> = Vec::new();
    for_each_combination(u_gens.len(), n, |subset| {
        let mut m = DMatrix::zeros(n, n);
        for (row, &k) in subset.iter().enumerate() {
            m.row_mut(row).copy_from(&coords[k].transpose());
        }
        let Some(inv) = m.clone().try_inverse() else {
            return;
        };
        for i in 0..n {
            let tau = inv.column(i).into_owned();
            // discard columns the inversion resolved poorly
            let mut rhs = DVector::zeros(n);
            rhs[i] = 1.0;
            if (&m * &tau - rhs).norm() > 1e-7 {
                continue;
            }
            if coords.iter().all(|u| u.dot(&tau) >= SIGN_TOL) {
                candidates.push(tau);
            }
        }
    });

    // deduplicate positive multiples, first occurrence wins
    let mut kept: Vec<DVector<f64>> = Vec::new();
    for c in candidates {
        let norm = c.norm();
        if norm <= DUP_TOL {
            continue;
        }
        let unit = &c / norm;
        let dup = kept.iter().any(|k| {
            let ku = k / k.norm();
            (&ku - &unit).norm() <= DUP_TOL
        });
        if !dup {
            kept.push(c);
        }
    }
    if kept.is_empty() {
        return Err(Error::DegenerateGenerators(
            "no dual-cone candidate survives the sign filter".into(),
        ));
    }

    // minimality: drop any candidate that is a nonnegative combination of
    // the others (detected by LP feasibility), scanning in construction order
    let mut idx = 0;
    while idx < kept.len() {
        let target = kept[idx].clone();
        let others: Vec<&DVector<f64>> = kept
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != idx)
            .map(|(_, v)| v)
            .collect();
        if !others.is_empty() && nonneg_combination_exists(&others, &target)? {
            kept.remove(idx);
        } else {
            idx += 1;
        }
    }

    Ok(kept.iter().map(|c| from_coords(dim_state, c)).collect())
}

/// L_ij = tr(T_i T_j).
pub fn gram_matrix(t_gens: &[SymMatrix]) -> DMatrix<f64> {
    let k = t_gens.len();
    DMatrix::from_fn(k, k, |i, j| t_gens[i].trace_dot(&t_gens[j]))
}

/// Build the dual frame (T generators plus Gram matrix) for a U set.
pub fn build_dual_frame(u_gens: Vec<SymMatrix>) -> Result<DualFrame> {
    let t_gens = dual_generators(&u_gens)?;
    let gram_l = gram_matrix(&t_gens);
    Ok(DualFrame {
        u_gens,
        t_gens,
        gram_l,
    })
}

/// Offline construction of both frames with the default U generators.
pub fn build_frames(dim_state: usize) -> Result<Frames> {
    let p_frame = build_p_frame(dim_state)?;
    let dual = build_dual_frame(default_u_generators(dim_state))?;
    Ok(Frames { p_frame, dual })
}

/// Express `m` as a nonnegative combination of the dual generators.
/// Returns the coefficients, or `None` when `m` lies outside the cone.
pub fn decompose_in_dual_cone(m: &SymMatrix, frame: &DualFrame) -> Result<Option<Vec<f64>>> {
    let coords: Vec<DVector<f64>> = frame.t_gens.iter().map(to_coords).collect();
    let refs: Vec<&DVector<f64>> = coords.iter().collect();
    let target = to_coords(m);
    match nonneg_combination(&refs, &target)? {
        Some(lambda) => {
            // verify the reconstruction to the documented tolerance
            let mut recon = DVector::zeros(target.len());
            for (l, c) in lambda.iter().zip(coords.iter()) {
                recon += c * *l;
            }
            if (recon - &target).norm() <= 1e-8 * (1.0 + target.norm()) {
                Ok(Some(lambda))
            } else {
                Ok(None)
            }
        }
        None => Ok(None),
    }
}

fn nonneg_combination_exists(gens: &[&DVector<f64>], target: &DVector<f64>) -> Result<bool> {
    Ok(nonneg_combination(gens, target)?.is_some())
}

/// Feasibility LP: find lambda >= 0 with sum lambda_i g_i = target.
fn nonneg_combination(
    gens: &[&DVector<f64>],
    target: &DVector<f64>,
) -> Result<Option<Vec<f64>>> {
    let k = gens.len();
    let n = target.len();
    let mut lp = LinearProgram::new(Sense::Minimize, vec![0.0; k]);
    for row in 0..n {
        let coeffs: Vec<f64> = gens.iter().map(|g| g[row]).collect();
        lp.add_row(coeffs.clone(), target[row]);
        lp.add_row(coeffs.iter().map(|c| -c).collect(), -target[row]);
    }
    for v in 0..k {
        lp.set_bounds(v, Some(0.0), None);
    }
    match solve_lp(&lp)? {
        LpSolution::Optimal { x, .. } => Ok(Some(x)),
        LpSolution::Infeasible => Ok(None),
        LpSolution::Unbounded => Err(Error::InvalidProblem(
            "feasibility LP reported unbounded".into(),
        )),
    }
}

fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        // advance to the next lexicographic combination
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in (i + 1)..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Plain-text dump of the frame matrices: named blocks, rows of
/// whitespace-separated decimals with 17 significant digits.
pub fn write_frames_text(frames: &Frames, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "dim {}", frames.p_frame.dim_state())?;
    writeln!(w)?;
    for (i, p) in frames.p_frame.members().iter().enumerate() {
        write_block(w, &format!("P {}", i + 1), p.as_matrix())?;
    }
    for (i, u) in frames.dual.u_gens.iter().enumerate() {
        write_block(w, &format!("U {}", i + 1), u.as_matrix())?;
    }
    for (i, t) in frames.dual.t_gens.iter().enumerate() {
        write_block(w, &format!("T {}", i + 1), t.as_matrix())?;
    }
    write_block(w, "L", &frames.dual.gram_l)?;
    Ok(())
}

fn write_block(w: &mut impl Write, name: &str, m: &DMatrix<f64>) -> std::io::Result<()> {
    writeln!(w, "{name}")?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    writeln!(w)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_frame_is_plus_minus_one() {
        let f = build_p_frame(1).unwrap();
        assert_eq!(f.len(), 2);
        assert_relative_eq!(f.members()[0].get(0, 0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(f.members()[1].get(0, 0), -1.0, epsilon = 1e-15);
        assert_relative_eq!(
            f.members()[0].trace_dot(&f.members()[1]),
            -1.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn two_state_frame_gram() {
        let f = build_p_frame(2).unwrap();
        assert_eq!(f.len(), 4);
        for i in 0..4 {
            for j in 0..4 {
                let g = f.members()[i].trace_dot(&f.members()[j]);
                let expect = if i == j { 1.0 } else { -1.0 / 3.0 };
                assert_relative_eq!(g, expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn frame_members_sum_to_zero() {
        for n in 1..=4 {
            let f = build_p_frame(n).unwrap();
            let mut sum = SymMatrix::zeros(n);
            for p in f.members() {
                sum = sum.add(p);
            }
            assert!(sum.norm() < 1e-12, "N={n}: |sum| = {}", sum.norm());
        }
    }

    #[test]
    fn rejects_zero_dimension() {
        assert!(build_p_frame(0).is_err());
    }

    #[test]
    fn default_generators_counts_and_rank_one() {
        assert_eq!(default_u_generators(1).len(), 1);
        assert_eq!(default_u_generators(2).len(), 4);
        assert_eq!(default_u_generators(3).len(), 9);
        for u in default_u_generators(3) {
            let ev = u.eigenvalues();
            assert!(ev[0] >= -1e-12);
            // one nonzero eigenvalue
            assert!(ev[ev.len() - 2] <= 1e-12 * ev[ev.len() - 1].max(1.0));
        }
    }

    #[test]
    fn paper_two_state_generators() {
        let gens = default_u_generators(2);
        let expect = [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [1.0, 1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0, 1.0],
        ];
        for (g, e) in gens.iter().zip(expect.iter()) {
            let m = SymMatrix::from_row_slice(2, e);
            assert!(g.sub(&m).norm() < 1e-15);
        }
    }

    #[test]
    fn dual_of_three_generator_set() {
        // {diag(1,0), diag(0,1), ones} is a spanning set of exactly n = 3
        let u = vec![
            SymMatrix::from_row_slice(2, &[1.0, 0.0, 0.0, 0.0]),
            SymMatrix::from_row_slice(2, &[0.0, 0.0, 0.0, 1.0]),
            SymMatrix::from_row_slice(2, &[1.0, 1.0, 1.0, 1.0]),
        ];
        let t = dual_generators(&u).unwrap();
        assert_eq!(t.len(), 3);
        let expected = SymMatrix::from_row_slice(2, &[1.0, -0.5, -0.5, 0.0]);
        assert!(
            t.iter().any(|g| g.sub(&expected).norm() < 1e-9),
            "expected generator missing: {t:?}"
        );
    }

    #[test]
    fn self_dual_scalar_ray() {
        let u = vec![SymMatrix::from_row_slice(1, &[1.0])];
        let t = dual_generators(&u).unwrap();
        assert_eq!(t.len(), 1);
        assert_relative_eq!(t[0].get(0, 0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn paper_set_retains_four_generators() {
        let dual = build_dual_frame(default_u_generators(2)).unwrap();
        assert_eq!(dual.t_gens.len(), 4);
        for e in [
            [1.0, -0.5, -0.5, 0.0],
            [0.0, -0.5, -0.5, 1.0],
            [1.0, 0.5, 0.5, 0.0],
            [0.0, 0.5, 0.5, 1.0],
        ] {
            let m = SymMatrix::from_row_slice(2, &e);
            assert!(
                dual.t_gens.iter().any(|g| g.sub(&m).norm() < 1e-9),
                "missing dual generator {e:?}"
            );
        }
    }

    #[test]
    fn gram_matrix_values() {
        let single = vec![SymMatrix::from_row_slice(1, &[1.0])];
        assert_relative_eq!(gram_matrix(&single)[(0, 0)], 1.0);
        let t = vec![SymMatrix::from_row_slice(2, &[1.0, -0.5, -0.5, 0.0])];
        assert_relative_eq!(gram_matrix(&t)[(0, 0)], 1.5, epsilon = 1e-14);
        let dual = build_dual_frame(default_u_generators(2)).unwrap();
        let l = &dual.gram_l;
        assert_eq!(l.transpose(), l.clone());
    }

    #[test]
    fn decompose_identity_and_reject_negative() {
        let dual = build_dual_frame(default_u_generators(2)).unwrap();
        let id = SymMatrix::identity(2);
        let lambda = decompose_in_dual_cone(&id, &dual).unwrap().unwrap();
        assert!(lambda.iter().all(|&l| l >= -1e-12));
        // unit coefficient on a generator reproduces that generator
        let t0 = dual.t_gens[0].clone();
        let l0 = decompose_in_dual_cone(&t0, &dual).unwrap().unwrap();
        let mut recon = SymMatrix::zeros(2);
        for (l, t) in l0.iter().zip(dual.t_gens.iter()) {
            recon = recon.add(&t.scale(*l));
        }
        assert!(recon.sub(&t0).norm() < 1e-8);
        // diag(-1, 0) pairs negatively with U_1 and must be rejected
        let neg = SymMatrix::from_row_slice(2, &[-1.0, 0.0, 0.0, 0.0]);
        assert!(decompose_in_dual_cone(&neg, &dual).unwrap().is_none());
    }

    #[test]
    fn frames_are_bit_reproducible() {
        let a = build_frames(3).unwrap();
        let b = build_frames(3).unwrap();
        for (x, y) in a.p_frame.members().iter().zip(b.p_frame.members()) {
            assert!(x.bit_eq(y));
        }
        for (x, y) in a.dual.t_gens.iter().zip(b.dual.t_gens.iter()) {
            assert!(x.bit_eq(y));
        }
    }
}
