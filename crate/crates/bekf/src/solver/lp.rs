//! Dense linear programming by the two-phase simplex method.
//!
//! The subproblems this crate generates are tiny (a handful of variables,
//! around a dozen rows), so a dense tableau with Bland's anti-cycling rule
//! is the right tool: deterministic, finite, and accurate enough that the
//! returned vertex can be re-solved exactly from the original data.
//!
//! Problems are stated over free variables with rows `a'x <= b` plus
//! optional per-variable box bounds. Internally each free variable is split
//! into a difference of nonnegative parts and bounds become extra rows.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// `a' x <= b` row.
#[derive(Clone, Debug)]
pub struct LpRow {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
    /// Optional per-variable bounds; entries are (lower, upper).
    pub bounds: Vec<(Option<f64>, Option<f64>)>,
}

impl LinearProgram {
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            sense,
            objective,
            rows: Vec::new(),
            bounds: vec![(None, None); n],
        }
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, rhs: f64) {
        self.rows.push(LpRow { coeffs, rhs });
    }

    pub fn set_bounds(&mut self, var: usize, lower: Option<f64>, upper: Option<f64>) {
        self.bounds[var] = (lower, upper);
    }

    fn validate(&self) -> Result<()> {
        let n = self.objective.len();
        if n == 0 {
            return Err(Error::InvalidProblem("no variables".into()));
        }
        if self.rows.is_empty() {
            return Err(Error::InvalidProblem("at least one constraint required".into()));
        }
        if self.bounds.len() != n {
            return Err(Error::InvalidProblem("bounds length mismatch".into()));
        }
        for r in &self.rows {
            if r.coeffs.len() != n {
                return Err(Error::InvalidProblem("row length mismatch".into()));
            }
            if !r.rhs.is_finite() || r.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidProblem("non-finite row data".into()));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidProblem("non-finite objective".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpSolution {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;

/// Equality-form tableau solver: min c'z s.t. Az = b, z >= 0, b >= 0.
struct Tableau {
    m: usize,
    n: usize,
    /// m x (n + 1) rows of [A | b]
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    /// One simplex phase on the current tableau for the cost vector `c`
    /// (length n). Bland's rule on both the entering and leaving choice.
    fn run(&mut self, c: &[f64]) -> PhaseOutcome {
        loop {
            // reduced costs: r_j = c_j - c_B' B^-1 A_j; the tableau is kept
            // in canonical form so B^-1 A is what the rows store.
            let mut reduced = c.to_vec();
            for (i, &bi) in self.basis.iter().enumerate() {
                let cb = c[bi];
                if cb != 0.0 {
                    for j in 0..self.n {
                        reduced[j] -= cb * self.rows[i][j];
                    }
                }
            }
            let entering = (0..self.n).find(|&j| reduced[j] < -PIVOT_TOL);
            let Some(enter) = entering else {
                return PhaseOutcome::Optimal;
            };
            // ratio test, ties broken by smallest basis variable index
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.m {
                let a = self.rows[i][enter];
                if a > PIVOT_TOL {
                    let ratio = self.rows[i][self.n] / a;
                    let better = ratio < best_ratio - 1e-15
                        || ((ratio - best_ratio).abs() <= 1e-15
                            && leave.map_or(true, |l| self.basis[i] < self.basis[l]));
                    if better {
                        best_ratio = ratio;
                        leave = Some(i);
                    }
                }
            }
            let Some(leave) = leave else {
                return PhaseOutcome::Unbounded;
            };
            self.pivot(leave, enter);
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v /= p;
        }
        for i in 0..self.m {
            if i != row {
                let f = self.rows[i][col];
                if f != 0.0 {
                    for j in 0..=self.n {
                        let delta = f * self.rows[row][j];
                        self.rows[i][j] -= delta;
                    }
                }
            }
        }
        self.basis[row] = col;
    }
}

/// Solve a small dense LP. Returns the optimum, or the `Infeasible` /
/// `Unbounded` status; never panics on validated input.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let nv = lp.objective.len();

    // assemble rows: user rows plus bound rows
    let mut rows: Vec<(Vec<f64>, f64)> = lp
        .rows
        .iter()
        .map(|r| (r.coeffs.clone(), r.rhs))
        .collect();
    for (v, &(lo, up)) in lp.bounds.iter().enumerate() {
        if let Some(u) = up {
            let mut a = vec![0.0; nv];
            a[v] = 1.0;
            rows.push((a, u));
        }
        if let Some(l) = lo {
            let mut a = vec![0.0; nv];
            a[v] = -1.0;
            rows.push((a, -l));
        }
    }

    // split x = x+ - x-, add one slack per row
    let m = rows.len();
    let n = 2 * nv + m;
    let mut tab_rows = vec![vec![0.0; n + 1]; m];
    for (i, (a, b)) in rows.iter().enumerate() {
        for j in 0..nv {
            tab_rows[i][j] = a[j];
            tab_rows[i][nv + j] = -a[j];
        }
        tab_rows[i][2 * nv + i] = 1.0;
        tab_rows[i][n] = *b;
        if *b < 0.0 {
            for v in tab_rows[i].iter_mut() {
                *v = -*v;
            }
        }
    }

    // phase 1: artificial basis
    let n1 = n + m;
    let mut t = Tableau {
        m,
        n: n1,
        rows: tab_rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut row = vec![0.0; n1 + 1];
                row[..n].copy_from_slice(&r[..n]);
                row[n + i] = 1.0;
                row[n1] = r[n];
                row
            })
            .collect(),
        basis: (n..n1).collect(),
    };
    let mut c1 = vec![0.0; n1];
    for j in n..n1 {
        c1[j] = 1.0;
    }
    match t.run(&c1) {
        PhaseOutcome::Unbounded => {
            return Err(Error::InvalidProblem(
                "phase-1 objective unbounded; tableau corrupt".into(),
            ))
        }
        PhaseOutcome::Optimal => {}
    }
    let phase1_value: f64 = t
        .basis
        .iter()
        .enumerate()
        .filter(|(_, &b)| b >= n)
        .map(|(i, _)| t.rows[i][n1])
        .sum();
    let scale = rows.iter().map(|(_, b)| b.abs()).fold(1.0_f64, f64::max);
    if phase1_value > FEAS_TOL * scale {
        return Ok(LpSolution::Infeasible);
    }

    // drive any residual artificial variables out of the basis
    for i in 0..m {
        if t.basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t.rows[i][j].abs() > PIVOT_TOL) {
                t.pivot(i, j);
            }
            // a row with no structural pivot is redundant; its artificial
            // stays basic at level zero and never re-enters phase 2 costs
        }
    }

    // phase 2 on the original columns (artificials kept at cost zero but
    // barred from entering via +inf cost surrogate: simply give them cost 0
    // and they never have negative reduced cost because they are basic at 0
    // in redundant rows only)
    let mut c2 = vec![0.0; n1];
    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    for j in 0..nv {
        c2[j] = sign * lp.objective[j];
        c2[nv + j] = -sign * lp.objective[j];
    }
    // forbid re-entry of artificial columns
    for i in 0..m {
        for j in n..n1 {
            if t.basis[i] != j {
                t.rows[i][j] = 0.0;
            }
        }
    }
    match t.run(&c2) {
        PhaseOutcome::Unbounded => return Ok(LpSolution::Unbounded),
        PhaseOutcome::Optimal => {}
    }

    // polish: re-solve the final basis against the original data to shed
    // accumulated tableau rounding
    let mut z = vec![0.0; n1];
    for (i, &b) in t.basis.iter().enumerate() {
        z[b] = t.rows[i][n1].max(0.0);
    }
    let polished = polish_basic_solution(&t.basis, &rows, n, nv);
    let zfinal = polished.unwrap_or(z);

    let x: Vec<f64> = (0..nv).map(|j| zfinal[j] - zfinal[nv + j]).collect();
    let value: f64 = x
        .iter()
        .zip(lp.objective.iter())
        .map(|(xi, ci)| xi * ci)
        .sum();
    Ok(LpSolution::Optimal { x, value })
}

/// Solve the square system defined by the final basis from original data.
/// Returns None when the basis matrix is singular to working precision, in
/// which case the tableau solution is used as-is.
fn polish_basic_solution(
    basis: &[usize],
    rows: &[(Vec<f64>, f64)],
    n: usize,
    nv: usize,
) -> Option<Vec<f64>> {
    let m = rows.len();
    let mut a = DMatrix::zeros(m, m);
    let mut b = nalgebra::DVector::zeros(m);
    for (i, (coef, rhs)) in rows.iter().enumerate() {
        b[i] = *rhs;
        for (k, &col) in basis.iter().enumerate() {
            a[(i, k)] = if col < nv {
                coef[col]
            } else if col < 2 * nv {
                -coef[col - nv]
            } else if col < n {
                // slack of row (col - 2nv)
                if col - 2 * nv == i {
                    1.0
                } else {
                    0.0
                }
            } else {
                // artificial in a redundant row
                if col - n == i {
                    1.0
                } else {
                    0.0
                }
            };
        }
    }
    let lu = a.lu();
    let sol = lu.solve(&b)?;
    if sol.iter().any(|v| !v.is_finite() || *v < -1e-7) {
        return None;
    }
    let mut z = vec![0.0; n + m];
    for (k, &col) in basis.iter().enumerate() {
        z[col] = sol[k].max(0.0);
    }
    Some(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bounded_single_variable() {
        // maximize x s.t. x <= 3, x >= -1
        let mut lp = LinearProgram::new(Sense::Maximize, vec![1.0]);
        lp.add_row(vec![1.0], 3.0);
        lp.set_bounds(0, Some(-1.0), None);
        match solve_lp(&lp).unwrap() {
            LpSolution::Optimal { value, x } => {
                assert_relative_eq!(value, 3.0, epsilon = 1e-9);
                assert_relative_eq!(x[0], 3.0, epsilon = 1e-9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn vertex_optimum() {
        // maximize x + y s.t. x <= 1, y <= 2, x + y <= 2.5
        let mut lp = LinearProgram::new(Sense::Maximize, vec![1.0, 1.0]);
        lp.add_row(vec![1.0, 0.0], 1.0);
        lp.add_row(vec![0.0, 1.0], 2.0);
        lp.add_row(vec![1.0, 1.0], 2.5);
        match solve_lp(&lp).unwrap() {
            LpSolution::Optimal { value, .. } => assert_relative_eq!(value, 2.5, epsilon = 1e-9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unbounded_ray() {
        // maximize x with only x >= 0
        let mut lp = LinearProgram::new(Sense::Maximize, vec![1.0]);
        lp.add_row(vec![-1.0], 0.0);
        assert_eq!(solve_lp(&lp).unwrap(), LpSolution::Unbounded);
    }

    #[test]
    fn infeasible_pair() {
        // x <= -1 and x >= 1
        let mut lp = LinearProgram::new(Sense::Minimize, vec![1.0]);
        lp.add_row(vec![1.0], -1.0);
        lp.add_row(vec![-1.0], -1.0);
        assert_eq!(solve_lp(&lp).unwrap(), LpSolution::Infeasible);
    }

    #[test]
    fn negative_region_optimum() {
        // minimize x + y s.t. x >= -2, y >= -3 (as rows), x + y >= -4
        let mut lp = LinearProgram::new(Sense::Minimize, vec![1.0, 1.0]);
        lp.add_row(vec![-1.0, 0.0], 2.0);
        lp.add_row(vec![0.0, -1.0], 3.0);
        lp.add_row(vec![-1.0, -1.0], 4.0);
        match solve_lp(&lp).unwrap() {
            LpSolution::Optimal { value, .. } => assert_relative_eq!(value, -4.0, epsilon = 1e-9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn equality_via_opposing_rows() {
        // x + y = 1 expressed as two rows, minimize x
        let mut lp = LinearProgram::new(Sense::Minimize, vec![1.0, 0.0]);
        lp.add_row(vec![1.0, 1.0], 1.0);
        lp.add_row(vec![-1.0, -1.0], -1.0);
        lp.set_bounds(0, Some(0.0), None);
        lp.set_bounds(1, Some(0.0), Some(0.75));
        match solve_lp(&lp).unwrap() {
            LpSolution::Optimal { x, value } => {
                assert_relative_eq!(value, 0.25, epsilon = 1e-9);
                assert_relative_eq!(x[1], 0.75, epsilon = 1e-9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
