//! Certificates bounding the error-matrix derivative along one frame
//! direction.
//!
//! For a frame member P and anchor x the certificate is a pair (Q, q) with
//!
//! ```text
//!   [f(x) - f(x-e)]' P e + e' P [f(x) - f(x-e)]
//!       + tr( g'(x-e) P g(x-e) )  <=  e' Q e + q     for every e.
//! ```
//!
//! Taking expectations turns this pointwise inequality into the trace
//! inequality `tr(P dSigma/dt) <= tr(Q Sigma) + q` that feeds the
//! derivative polytope. For rational-polynomial drifts the inequality is
//! cleared of its denominator (strictly positive, so the sign survives) and
//! certified by a sum-of-squares Gram decomposition, optimizing
//! `tr(Q Sigma~) + q` so the bound is as tight as the relaxation allows.
//! Affine drifts with constant diffusion admit the exact closed form
//! `Q = A'P + PA`, `q = tr(B'PB)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::SystemModel;
use crate::poly::{monomials_up_to, Poly};
use crate::solver::sdp::{solve_sdp, SdpEquality, SdpSolution, SemidefiniteProgram};
use crate::sym::{sym_dim, SymMatrix};

/// Relative prune threshold for composed polynomial arithmetic.
const COEFF_PRUNE: f64 = 1e-14;

/// One certificate, valid for the frame member it was computed for at the
/// anchor state recorded here.
#[derive(Clone, Debug)]
pub struct Certificate {
    pub p_index: usize,
    pub q_matrix: SymMatrix,
    pub q_scalar: f64,
    pub anchor: DVector<f64>,
}

/// Tuning for the sum-of-squares relaxation.
#[derive(Clone, Copy, Debug)]
pub struct CertificateConfig {
    /// Extra half-degrees added to the Gram monomial basis beyond the
    /// minimum that covers the cleared polynomial.
    pub degree_extra: usize,
    /// Route affine models through the SOS solver instead of the closed
    /// form; used by equivalence tests.
    pub force_sos: bool,
}

impl Default for CertificateConfig {
    fn default() -> Self {
        CertificateConfig {
            degree_extra: 0,
            force_sos: false,
        }
    }
}

/// Denominator-cleared expansion of the certificate inequality at one
/// anchor, before a frame member is chosen. Building it once per anchor and
/// reusing it across the frame members avoids recomposing the drift.
#[derive(Clone, Debug)]
pub struct ErrorExpansion {
    anchor: DVector<f64>,
    /// Cleared drift difference: den(x-e) * [f(x) - f(x-e)] as polynomials
    /// in e (equals f(x) - f(x-e) itself when there is no denominator).
    f_cleared: Vec<Poly>,
    /// Diffusion entries composed at x - e.
    g_shifted: Vec<Vec<Poly>>,
    /// The clearing factor den(x-e), present only for genuine denominators.
    clearing: Option<Poly>,
}

/// The scalar polynomial certified against zero for a specific frame
/// member, together with its clearing-factor record.
#[derive(Clone, Debug)]
pub struct ErrorPolynomial {
    pub poly: Poly,
    /// den(x-e) when the inequality was multiplied through by it.
    pub clearing: Option<Poly>,
    /// How many times the clearing factor was applied.
    pub clearing_power: u32,
    pub anchor: DVector<f64>,
}

impl ErrorPolynomial {
    pub fn clearing_at(&self, e: &[f64]) -> f64 {
        match (&self.clearing, self.clearing_power) {
            (Some(c), k) => c.eval(e).powi(k as i32),
            (None, _) => 1.0,
        }
    }
}

/// Expand the drift and diffusion of a rational-polynomial model around an
/// anchor. Fails for models without polynomial data.
pub fn expand_error(model: &SystemModel, x_tilde: &DVector<f64>) -> Result<ErrorExpansion> {
    let n = model.dim();
    let (num, den) = model
        .rational_drift()
        .ok_or_else(|| Error::NonPolynomialModel("drift has no polynomial data".into()))?;
    let g_rows = model
        .polynomial_diffusion()
        .ok_or_else(|| Error::NonPolynomialModel("diffusion has no polynomial data".into()))?;
    let xs: Vec<f64> = x_tilde.iter().copied().collect();

    // x - e, componentwise, as degree-1 polynomials in e
    let shifted: Vec<Poly> = (0..n)
        .map(|j| Poly::constant(n, xs[j]).sub(&Poly::var(n, j)))
        .collect();

    let den_is_const = den.degree() == 0;
    let den_at_zero = den.eval(&vec![0.0; n]);
    let f_at_anchor: Vec<f64> = {
        let d = den.eval(&xs);
        num.iter().map(|p| p.eval(&xs) / d).collect()
    };

    let (f_cleared, clearing) = if den_is_const {
        // polynomial drift: no clearing needed, fold the constant in
        let f_cl = num
            .iter()
            .zip(f_at_anchor.iter())
            .map(|(p, &fa)| {
                Poly::constant(n, fa)
                    .sub(&p.substitute(&shifted).scale(1.0 / den_at_zero))
                    .prune(COEFF_PRUNE)
            })
            .collect();
        (f_cl, None)
    } else {
        let den_shifted = den.substitute(&shifted).prune(COEFF_PRUNE);
        let f_cl = num
            .iter()
            .zip(f_at_anchor.iter())
            .map(|(p, &fa)| {
                den_shifted
                    .scale(fa)
                    .sub(&p.substitute(&shifted))
                    .prune(COEFF_PRUNE)
            })
            .collect();
        (f_cl, Some(den_shifted))
    };

    let g_shifted: Vec<Vec<Poly>> = g_rows
        .iter()
        .map(|row| {
            row.iter()
                .map(|p| p.substitute(&shifted).prune(COEFF_PRUNE))
                .collect()
        })
        .collect();

    Ok(ErrorExpansion {
        anchor: x_tilde.clone(),
        f_cleared,
        g_shifted,
        clearing,
    })
}

impl ErrorExpansion {
    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }

    pub fn clearing(&self) -> Option<&Poly> {
        self.clearing.as_ref()
    }

    /// Assemble the cleared scalar polynomial for one frame member:
    /// `2 e' P F_cleared + [den] * tr(g' P g)` evaluated symbolically.
    pub fn cleared_polynomial(&self, p: &SymMatrix) -> ErrorPolynomial {
        let n = self.anchor.len();
        let mut total = Poly::zero(n);
        // 2 e' P F term (F already carries the clearing factor if any)
        for a in 0..n {
            let ea = Poly::var(n, a);
            for b in 0..n {
                let pab = p.get(a, b);
                if pab != 0.0 {
                    total = total.add(&ea.mul(&self.f_cleared[b]).scale(2.0 * pab));
                }
            }
        }
        // tr(g'(x-e) P g(x-e)) term
        let m = self.g_shifted.first().map_or(0, |r| r.len());
        let mut trace_term = Poly::zero(n);
        for k in 0..m {
            for a in 0..n {
                for b in 0..n {
                    let pab = p.get(a, b);
                    if pab != 0.0 {
                        trace_term =
                            trace_term.add(&self.g_shifted[a][k].mul(&self.g_shifted[b][k]).scale(pab));
                    }
                }
            }
        }
        match &self.clearing {
            Some(den) => total = total.add(&den.mul(&trace_term)),
            None => total = total.add(&trace_term),
        }
        ErrorPolynomial {
            poly: total.prune(COEFF_PRUNE),
            clearing: self.clearing.clone(),
            clearing_power: if self.clearing.is_some() { 1 } else { 0 },
            anchor: self.anchor.clone(),
        }
    }
}

/// Cleared certificate inequality polynomial for one frame member.
pub fn error_polynomial(
    model: &SystemModel,
    x_tilde: &DVector<f64>,
    p: &SymMatrix,
) -> Result<ErrorPolynomial> {
    Ok(expand_error(model, x_tilde)?.cleared_polynomial(p))
}

/// Exact certificate for `dx = A x dt + B dw`: `Q = A'P + PA`,
/// `q = tr(B'PB)`.
pub fn certify_linear(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    p: &SymMatrix,
    p_index: usize,
    anchor: DVector<f64>,
) -> Certificate {
    let q_full = a.transpose() * p.as_matrix() + p.as_matrix() * a;
    let q_matrix = SymMatrix::symmetric_part(&q_full);
    let q_scalar = (b.transpose() * p.as_matrix() * b).trace();
    Certificate {
        p_index,
        q_matrix,
        q_scalar,
        anchor,
    }
}

/// Optimal sum-of-squares certificate for one frame member at one anchor,
/// minimizing `tr(Q Sigma~) + q`.
pub fn certify_sos(
    model: &SystemModel,
    x_tilde: &DVector<f64>,
    sigma_tilde: &SymMatrix,
    p: &SymMatrix,
    p_index: usize,
    cfg: &CertificateConfig,
) -> Result<Certificate> {
    let expansion = expand_error(model, x_tilde)?;
    certify_sos_from_expansion(&expansion, sigma_tilde, p, p_index, cfg)
}

/// Same as [`certify_sos`] but reusing an existing anchor expansion.
pub fn certify_sos_from_expansion(
    expansion: &ErrorExpansion,
    sigma_tilde: &SymMatrix,
    p: &SymMatrix,
    p_index: usize,
    cfg: &CertificateConfig,
) -> Result<Certificate> {
    let n = expansion.anchor.len();
    let nq = sym_dim(n);
    let ep = expansion.cleared_polynomial(p);

    // weight polynomials multiplying the decision variables: the cleared
    // inequality subtracts clearing * (e' Q e + q)
    let clearing_poly = ep
        .clearing
        .clone()
        .unwrap_or_else(|| Poly::constant(n, 1.0));
    let mut q_weights: Vec<Poly> = Vec::with_capacity(nq);
    for a in 0..n {
        for b in a..n {
            let mono = Poly::var(n, a).mul(&Poly::var(n, b));
            let scale = if a == b { 1.0 } else { 2.0 };
            q_weights.push(clearing_poly.mul(&mono).scale(scale));
        }
    }
    let q_scalar_weight = clearing_poly.clone();

    // Gram basis: monomials up to half the certified degree
    let cleared_deg = ep
        .poly
        .degree()
        .max(clearing_poly.degree() + 2)
        .max(q_scalar_weight.degree());
    let half_deg = cleared_deg.div_ceil(2) + cfg.degree_extra;
    let basis = monomials_up_to(n, half_deg);
    let zdim = basis.len();

    // one equality per monomial of the full degree range:
    //   <A_mono, W> - sum_ab w_ab[mono] Q_ab - w_q[mono] q = -lhs[mono]
    let monos = monomials_up_to(n, 2 * half_deg);
    let mono_index: std::collections::BTreeMap<&crate::poly::Mono, usize> =
        monos.iter().enumerate().map(|(i, m)| (m, i)).collect();
    // basis pair products by exponent addition
    let mut pair_mats: Vec<SymMatrix> = vec![SymMatrix::zeros(zdim); monos.len()];
    for i in 0..zdim {
        for j in i..zdim {
            let prod = crate::poly::Mono(
                basis[i]
                    .0
                    .iter()
                    .zip(basis[j].0.iter())
                    .map(|(a, b)| a + b)
                    .collect(),
            );
            let idx = mono_index[&prod];
            pair_mats[idx].set(i, j, 1.0);
        }
    }
    let mut sdp = SemidefiniteProgram::new(zdim, nq + 1);
    for (mi, mono) in monos.iter().enumerate() {
        let mut free_coeff = Vec::with_capacity(nq + 1);
        for w in &q_weights {
            free_coeff.push(-w.coefficient(mono));
        }
        free_coeff.push(-q_scalar_weight.coefficient(mono));
        sdp.eqs.push(SdpEquality {
            gram_coeff: pair_mats[mi].clone(),
            free_coeff,
            rhs: -ep.poly.coefficient(mono),
        });
    }

    // objective: tr(Q Sigma~) + q
    let mut obj = Vec::with_capacity(nq + 1);
    for a in 0..n {
        for b in a..n {
            obj.push(if a == b {
                sigma_tilde.get(a, a)
            } else {
                2.0 * sigma_tilde.get(a, b)
            });
        }
    }
    obj.push(1.0);
    sdp.obj_free = obj;

    match solve_sdp(&sdp)? {
        SdpSolution::Optimal { free, .. } => {
            let mut q_matrix = SymMatrix::zeros(n);
            let mut idx = 0;
            for a in 0..n {
                for b in a..n {
                    q_matrix.set(a, b, free[idx]);
                    idx += 1;
                }
            }
            Ok(Certificate {
                p_index,
                q_matrix,
                q_scalar: free[nq],
                anchor: expansion.anchor.clone(),
            })
        }
        SdpSolution::Infeasible { .. } => Err(Error::CertificateInfeasible {
            p_index,
            anchor: expansion.anchor.iter().copied().collect(),
        }),
    }
}

/// Certificates for every member of a frame at a shared anchor. Affine
/// models take the exact closed form unless the config forces the SOS path.
pub fn certificates_for_frame(
    model: &SystemModel,
    x_tilde: &DVector<f64>,
    sigma_tilde: &SymMatrix,
    members: &[SymMatrix],
    cfg: &CertificateConfig,
) -> Result<Vec<Certificate>> {
    if !cfg.force_sos {
        if let Some((a, b)) = model.as_linear() {
            return Ok(members
                .iter()
                .enumerate()
                .map(|(i, p)| certify_linear(&a, &b, p, i, x_tilde.clone()))
                .collect());
        }
    }
    let expansion = expand_error(model, x_tilde)?;
    members
        .iter()
        .enumerate()
        .map(|(i, p)| certify_sos_from_expansion(&expansion, sigma_tilde, p, i, cfg))
        .collect()
}

/// Worst sampled value of the cleared inequality left-hand side
/// `clearing^k * [2 e'P F + tr(g'Pg) - e'Qe - q]`, evaluated from the model
/// callables rather than the expanded polynomial so it independently checks
/// the expansion. Nonpositive up to roundoff means the certificate held on
/// the sample set; values are reported raw so callers can assert their own
/// tolerance.
///
/// Sampling is uniform in the ball of the given radius around e = 0 plus
/// deterministic probes: the origin, axis points, and scaled corner points.
/// The PRNG is a fixed-stream counter generator seeded with `seed`, so
/// reported failures are reproducible.
pub fn validate_certificate(
    model: &SystemModel,
    x_tilde: &DVector<f64>,
    p: &SymMatrix,
    cert: &Certificate,
    n_samples: usize,
    radius: f64,
    seed: u64,
) -> f64 {
    use rand::{Rng, SeedableRng};
    let n = model.dim();
    let clearing_power = model
        .rational_drift()
        .map(|(_, den)| if den.degree() == 0 { 0 } else { 1 })
        .unwrap_or(0);
    let den = model.rational_drift().map(|(_, d)| d.clone());
    let f_anchor = model.drift_at(x_tilde);

    let lhs = |e: &DVector<f64>| -> f64 {
        let shifted = x_tilde - e;
        let f_diff = &f_anchor - model.drift_at(&shifted);
        let g = model.diffusion_at(&shifted);
        let gpg = (g.transpose() * p.as_matrix() * &g).trace();
        let quad = cert.q_matrix.quad_form(e);
        let raw = 2.0 * (e.transpose() * p.as_matrix() * &f_diff)[(0, 0)] + gpg
            - quad
            - cert.q_scalar;
        let factor = match (&den, clearing_power) {
            (Some(d), 1) => {
                let xs: Vec<f64> = shifted.iter().copied().collect();
                d.eval(&xs)
            }
            _ => 1.0,
        };
        raw * factor
    };

    let mut worst = f64::NEG_INFINITY;
    let mut probe = |e: DVector<f64>| {
        let v = lhs(&e);
        if v > worst {
            worst = v;
        }
    };

    probe(DVector::zeros(n));
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut e = DVector::zeros(n);
            e[i] = sign * radius;
            probe(e);
        }
    }
    // corner probes at radius
    let corners = 1usize << n.min(16);
    for c in 0..corners {
        let mut e = DVector::zeros(n);
        for i in 0..n {
            e[i] = if (c >> i) & 1 == 1 { 1.0 } else { -1.0 };
        }
        let norm = e.norm();
        probe(e * (radius / norm));
    }

    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    for _ in 0..n_samples {
        // uniform in the ball: gaussian direction, radial cdf inverse
        let dir = DVector::from_fn(n, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let norm = dir.norm();
        if norm == 0.0 {
            continue;
        }
        let u: f64 = rng.gen();
        let r = radius * u.powf(1.0 / n as f64);
        probe(dir * (r / norm));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::example_model;
    use approx::assert_relative_eq;

    fn scalar_linear() -> SystemModel {
        SystemModel::linear(
            DMatrix::from_row_slice(1, 1, &[-1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            SymMatrix::from_row_slice(1, &[1.0]),
        )
        .unwrap()
    }

    #[test]
    fn linear_closed_form_values() {
        let p = SymMatrix::from_row_slice(1, &[1.0]);
        let cert = certify_linear(
            &DMatrix::from_row_slice(1, 1, &[-1.0]),
            &DMatrix::from_row_slice(1, 1, &[1.0]),
            &p,
            0,
            DVector::zeros(1),
        );
        assert_relative_eq!(cert.q_matrix.get(0, 0), -2.0);
        assert_relative_eq!(cert.q_scalar, 1.0);

        let zero = certify_linear(
            &DMatrix::zeros(1, 1),
            &DMatrix::zeros(1, 1),
            &p,
            0,
            DVector::zeros(1),
        );
        assert_relative_eq!(zero.q_matrix.get(0, 0), 0.0);
        assert_relative_eq!(zero.q_scalar, 0.0);
    }

    #[test]
    fn linear_error_polynomial_is_quadratic() {
        let model = scalar_linear();
        let p = SymMatrix::from_row_slice(1, &[1.0]);
        let x = DVector::from_vec(vec![0.7]);
        let ep = error_polynomial(&model, &x, &p).unwrap();
        assert_eq!(ep.poly.degree(), 2);
        assert!(ep.clearing.is_none());
        // e'(A'P + PA)e + tr(B'PB) = -2 e^2 + 1
        assert_relative_eq!(ep.poly.eval(&[0.5]), -2.0 * 0.25 + 1.0, epsilon = 1e-12);
        // value at e = 0 is the diffusion trace term
        assert_relative_eq!(ep.poly.eval(&[0.0]), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn example_error_polynomial_degree_and_anchor_value() {
        let model = example_model();
        let x = DVector::from_vec(vec![8.0, 0.0]);
        let p = SymMatrix::from_row_slice(2, &[1.0, 0.0, 0.0, -1.0]).scale(1.0 / 2f64.sqrt());
        let ep = error_polynomial(&model, &x, &p).unwrap();
        assert_eq!(ep.poly.degree(), 4);
        assert_eq!(ep.clearing_power, 1);
        // at e = 0 the cleared value is m(x) * tr(G'PG)
        let m_x = 65.0 / 25.0;
        let g = DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.0, 0.2]);
        let tr = (g.transpose() * p.as_matrix() * &g).trace();
        assert_relative_eq!(ep.poly.eval(&[0.0, 0.0]), m_x * tr, epsilon = 1e-12);
    }

    #[test]
    fn sos_matches_closed_form_for_scalar_linear() {
        let model = scalar_linear();
        let x = DVector::zeros(1);
        let sigma = SymMatrix::from_row_slice(1, &[0.3]);
        let p = SymMatrix::from_row_slice(1, &[1.0]);
        let cfg = CertificateConfig {
            force_sos: true,
            ..Default::default()
        };
        let cert = certify_sos(&model, &x, &sigma, &p, 0, &cfg).unwrap();
        assert_relative_eq!(cert.q_matrix.get(0, 0), -2.0, epsilon = 1e-5);
        assert_relative_eq!(cert.q_scalar, 1.0, epsilon = 1e-5);
    }

    #[test]
    fn quadratic_growth_has_no_certificate() {
        // dx = (1 + x^2) dt + dw: cubic terms in e defeat any (Q, q)
        let n = 1;
        let num = vec![Poly::constant(n, 1.0).add(&Poly::var(n, 0).pow(2))];
        let model = SystemModel::new(
            crate::model::Drift::Rational {
                num,
                den: Poly::constant(n, 1.0),
            },
            crate::model::Diffusion::Constant(DMatrix::from_row_slice(1, 1, &[1.0])),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            SymMatrix::from_row_slice(1, &[1.0]),
        )
        .unwrap();
        let p = SymMatrix::from_row_slice(1, &[1.0]);
        let err = certify_sos(
            &model,
            &DVector::zeros(1),
            &SymMatrix::identity(1),
            &p,
            0,
            &CertificateConfig::default(),
        );
        assert!(matches!(err, Err(Error::CertificateInfeasible { .. })));
    }

    #[test]
    fn validator_flags_corrupted_certificate() {
        let model = scalar_linear();
        let x = DVector::zeros(1);
        let p = SymMatrix::from_row_slice(1, &[1.0]);
        let (a, b) = model.as_linear().unwrap();
        let good = certify_linear(&a, &b, &p, 0, x.clone());
        let slack = validate_certificate(&model, &x, &p, &good, 2000, 5.0, 7);
        assert!(slack <= 1e-12, "valid certificate has slack {slack}");

        let mut bad = good.clone();
        bad.q_scalar -= 1.0;
        let bad_slack = validate_certificate(&model, &x, &p, &bad, 2000, 5.0, 7);
        assert!(bad_slack >= 0.9, "corruption not detected: {bad_slack}");
    }

    #[test]
    fn example_certificate_validates() {
        let model = example_model();
        let x = DVector::from_vec(vec![8.0, 0.0]);
        let sigma = SymMatrix::identity(2).scale(0.5);
        let frame = crate::frames::build_p_frame(2).unwrap();
        let expansion = expand_error(&model, &x).unwrap();
        for (i, p) in frame.members().iter().enumerate() {
            let cert = certify_sos_from_expansion(
                &expansion,
                &sigma,
                p,
                i,
                &CertificateConfig::default(),
            )
            .unwrap();
            let slack = validate_certificate(&model, &x, p, &cert, 20_000, 20.0, 11);
            assert!(slack <= 1e-6, "member {i}: slack {slack}");
        }
    }
}
