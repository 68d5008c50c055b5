//! Sparse multivariate polynomials with f64 coefficients.
//!
//! Small fixed-variable-count polynomials are all the certificate machinery
//! needs: the error polynomial of a rational drift model is degree four in
//! two variables for the bundled example. Terms are kept in a BTreeMap keyed
//! by exponent vector under graded-lexicographic order, which makes every
//! iteration (evaluation, arithmetic, coefficient extraction) deterministic.

use std::collections::BTreeMap;

/// Exponent vector of one monomial. Ordering is graded lex: lower total
/// degree first, then lexicographic on the exponents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mono(pub Vec<u8>);

impl Mono {
    pub fn degree(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    fn mul(&self, other: &Mono) -> Mono {
        Mono(
            self.0
                .iter()
                .zip(other.0.iter())
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x.iter())
            .map(|(&e, &v)| v.powi(e as i32))
            .product()
    }
}

impl Ord for Mono {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Mono {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Mono, f64>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Poly::zero(nvars);
        if c != 0.0 {
            p.terms.insert(Mono(vec![0; nvars]), c);
        }
        p
    }

    /// The monomial x_i.
    pub fn var(nvars: usize, i: usize) -> Self {
        assert!(i < nvars, "variable index out of range");
        let mut exps = vec![0u8; nvars];
        exps[i] = 1;
        let mut p = Poly::zero(nvars);
        p.terms.insert(Mono(exps), 1.0);
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Largest total degree among the terms; zero for the zero polynomial.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    pub fn coefficient(&self, m: &Mono) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mono, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn add_term(&mut self, m: Mono, c: f64) {
        assert_eq!(m.0.len(), self.nvars, "monomial arity mismatch");
        let v = self.terms.get(&m).copied().unwrap_or(0.0) + c;
        // drop exact zeros so equal polynomials compare equal
        if v == 0.0 {
            self.terms.remove(&m);
        } else {
            self.terms.insert(m, v);
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        assert_eq!(self.nvars, other.nvars, "variable count mismatch");
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(m.clone(), c);
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> Poly {
        if c == 0.0 {
            return Poly::zero(self.nvars);
        }
        Poly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, &v)| (m.clone(), v * c)).collect(),
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        assert_eq!(self.nvars, other.nvars, "variable count mismatch");
        let mut out = Poly::zero(self.nvars);
        for (ma, ca) in self.terms() {
            for (mb, cb) in other.terms() {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Poly {
        let mut out = Poly::constant(self.nvars, 1.0);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    /// Evaluate at a point. Terms are visited in graded-lex order so the
    /// summation order is reproducible.
    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nvars, "point arity mismatch");
        self.terms().map(|(m, c)| c * m.eval(x)).sum()
    }

    /// Partial derivative with respect to variable `i`.
    pub fn partial_deriv(&self, i: usize) -> Poly {
        assert!(i < self.nvars, "variable index out of range");
        let mut out = Poly::zero(self.nvars);
        for (m, c) in self.terms() {
            let e = m.0[i];
            if e > 0 {
                let mut exps = m.0.clone();
                exps[i] = e - 1;
                out.add_term(Mono(exps), c * e as f64);
            }
        }
        out
    }

    /// Substitute each variable by a polynomial (composition). All
    /// replacement polynomials must share a variable count, which becomes
    /// the variable count of the result.
    pub fn substitute(&self, replacements: &[Poly]) -> Poly {
        assert_eq!(replacements.len(), self.nvars, "need one replacement per variable");
        let out_vars = if replacements.is_empty() {
            0
        } else {
            replacements[0].nvars
        };
        // cache powers of each replacement up to the needed exponent
        let mut max_exp = vec![0u8; self.nvars];
        for (m, _) in self.terms() {
            for (i, &e) in m.0.iter().enumerate() {
                max_exp[i] = max_exp[i].max(e);
            }
        }
        let powers: Vec<Vec<Poly>> = replacements
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut tower = vec![Poly::constant(out_vars, 1.0)];
                for k in 1..=max_exp[i] {
                    let prev = tower[(k - 1) as usize].clone();
                    tower.push(prev.mul(r));
                }
                tower
            })
            .collect();
        let mut out = Poly::zero(out_vars);
        for (m, c) in self.terms() {
            let mut term = Poly::constant(out_vars, c);
            for (i, &e) in m.0.iter().enumerate() {
                if e > 0 {
                    term = term.mul(&powers[i][e as usize]);
                }
            }
            out = out.add(&term);
        }
        out
    }

    /// Drop terms whose magnitude is below `rel_tol` times the largest
    /// coefficient magnitude. Cancellation in composed arithmetic leaves
    /// residue around 1e-16 relative; pruning keeps the degree honest.
    pub fn prune(&self, rel_tol: f64) -> Poly {
        let max_c = self
            .terms
            .values()
            .map(|c| c.abs())
            .fold(0.0_f64, f64::max);
        if max_c == 0.0 {
            return Poly::zero(self.nvars);
        }
        let cut = max_c * rel_tol;
        Poly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(_, &c)| c.abs() > cut)
                .map(|(m, &c)| (m.clone(), c))
                .collect(),
        }
    }
}

/// All monomials in `nvars` variables of total degree at most `max_deg`,
/// in graded-lex order.
pub fn monomials_up_to(nvars: usize, max_deg: usize) -> Vec<Mono> {
    let mut out = Vec::new();
    let mut current = vec![0u8; nvars];
    fn rec(out: &mut Vec<Mono>, current: &mut Vec<u8>, pos: usize, remaining: usize) {
        if pos == current.len() {
            out.push(Mono(current.clone()));
            return;
        }
        for e in 0..=remaining {
            current[pos] = e as u8;
            rec(out, current, pos + 1, remaining - e);
        }
        current[pos] = 0;
    }
    for d in 0..=max_deg {
        // enumerate exact-degree monomials lexicographically within the grade
        let mut grade = Vec::new();
        rec(&mut grade, &mut current, 0, d);
        let mut exact: Vec<Mono> = grade.into_iter().filter(|m| m.degree() == d).collect();
        exact.sort();
        out.extend(exact);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn xy() -> (Poly, Poly) {
        (Poly::var(2, 0), Poly::var(2, 1))
    }

    #[test]
    fn arithmetic_and_eval() {
        let (x, y) = xy();
        // p = 3xy + x^2 - 2
        let p = x
            .mul(&y)
            .scale(3.0)
            .add(&x.mul(&x))
            .add(&Poly::constant(2, -2.0));
        assert_eq!(p.degree(), 2);
        assert_relative_eq!(p.eval(&[2.0, 3.0]), 3.0 * 6.0 + 4.0 - 2.0);
        let q = p.mul(&p);
        assert_relative_eq!(q.eval(&[1.5, -0.5]), p.eval(&[1.5, -0.5]).powi(2), epsilon = 1e-12);
    }

    #[test]
    fn derivative() {
        let (x, y) = xy();
        let p = x.pow(3).mul(&y).add(&y.pow(2)); // x^3 y + y^2
        let px = p.partial_deriv(0); // 3 x^2 y
        let py = p.partial_deriv(1); // x^3 + 2y
        assert_relative_eq!(px.eval(&[2.0, 5.0]), 60.0);
        assert_relative_eq!(py.eval(&[2.0, 5.0]), 18.0);
    }

    #[test]
    fn substitution_matches_pointwise_composition() {
        let (x, y) = xy();
        let p = x.pow(2).mul(&y).add(&x.scale(4.0)); // x^2 y + 4x
        // x -> 1 - u, y -> u v  (two fresh variables u, v)
        let u = Poly::var(2, 0);
        let v = Poly::var(2, 1);
        let rx = Poly::constant(2, 1.0).sub(&u);
        let ry = u.mul(&v);
        let composed = p.substitute(&[rx, ry]);
        for &(a, b) in &[(0.3, -1.2), (2.0, 0.5), (-1.0, 3.0)] {
            let expect = {
                let xv = 1.0 - a;
                let yv = a * b;
                xv * xv * yv + 4.0 * xv
            };
            assert_relative_eq!(composed.eval(&[a, b]), expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn monomial_enumeration_counts() {
        // C(d + n, n) monomials of degree <= d in n variables
        assert_eq!(monomials_up_to(2, 4).len(), 15);
        assert_eq!(monomials_up_to(2, 2).len(), 6);
        assert_eq!(monomials_up_to(3, 2).len(), 10);
        // graded-lex: first the constant, then degree-1 terms
        let ms = monomials_up_to(2, 2);
        assert_eq!(ms[0], Mono(vec![0, 0]));
        assert_eq!(ms[1].degree(), 1);
    }

    #[test]
    fn exact_cancellation_is_removed() {
        let (x, _) = xy();
        let p = x.pow(2).sub(&x.pow(2));
        assert!(p.is_zero());
    }
}
