//! Reconstruction of `f(A)_ii` from Green-function data, and an exact
//! verifier for the cumulant expansion formula on two-point laws.
//!
//! The reconstruction integrates `(2/π)·Re[∂_z̄ f̃(z) · G_ii(z)]` over the
//! upper half-plane with the strip `{0 < y < N^{α-1}}` excluded; conjugate
//! symmetry of `G` accounts for the lower half-plane. The integrand is
//! evaluated from the spectral sum, so one decomposition serves the whole
//! grid.

use crate::ensemble::TwoPointLaw;
use crate::error::{Error, Result};
use crate::quad;
use crate::spectral::{green_diag_at, SpectralDecomposition};
use crate::testfunc::{dbar_extension, CutoffProfile, TestFunction};
use crate::util::pairwise_sum;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Quadrature controls shared by the reconstruction and the variance
/// kernel integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadParams {
    /// Axis exclusion exponent: the strip `|y| < N^{alpha-1}` is dropped.
    pub alpha: f64,
    /// Absolute tolerance target.
    pub tol: f64,
    /// Refinement budget (adaptive depth / grid level).
    pub max_refinement: usize,
}

impl QuadParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }

    /// Default exclusion exponent for a regime parameter `tau`.
    pub fn for_tau(tau: f64) -> Self {
        Self {
            alpha: tau / 100.0,
            tol: 1e-7,
            max_refinement: 2,
        }
    }
}

/// Result of one reconstruction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HsResult {
    pub value: f64,
    /// Size estimate for the dropped strip: `N^{2α-2}·‖f''‖₁`.
    pub truncation_estimate: f64,
    /// Accumulated quadrature error estimate.
    pub quadrature_error: f64,
}

/// Reconstruct `f(A)_ii` from the resolvent of one decomposition.
pub fn hs_reconstruct(
    spec: &SpectralDecomposition,
    tf: &TestFunction,
    cp: &CutoffProfile,
    i: usize,
    qp: &QuadParams,
) -> Result<HsResult> {
    qp.validate()?;
    let n = spec.n() as f64;
    let y_min = n.powf(qp.alpha - 1.0);
    let y_max = 2.0 * tf.max_eta();
    if y_min >= y_max {
        return Err(Error::InvalidInput(format!(
            "excluded strip {y_min:.3e} swallows the cutoff range {y_max:.3e}"
        )));
    }
    let (x_lo, x_hi) = tf.support();
    let depth = 14 + 4 * qp.max_refinement;
    let n_oct = (y_max / y_min).log2().ceil().max(1.0);
    let inner_tol = qp.tol / (8.0 * n_oct);

    let mut y_breaks = quad::geometric_breaks(y_min, y_max, 2.0);
    for b in tf.bumps() {
        for s in [b.eta_star, 2.0 * b.eta_star] {
            if s > y_min && s < y_max {
                y_breaks.push(s);
            }
        }
    }
    y_breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    y_breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

    let mut parts = Vec::new();
    let mut errors = Vec::new();
    for w in y_breaks.windows(2) {
        let (ya, yb) = (w[0], w[1]);
        let mut line_err = 0.0f64;
        let mut outer = |y: f64| -> f64 {
            let mut inner = |x: f64| -> f64 {
                let z = Complex64::new(x, y);
                let d = dbar_extension(tf, cp, z);
                if d.norm_sqr() == 0.0 {
                    return 0.0;
                }
                let g = green_diag_at(spec, z, i);
                (d * g).re
            };
            match quad::integrate(&mut inner, x_lo, x_hi, inner_tol, depth) {
                Ok((v, e)) => {
                    line_err = line_err.max(e);
                    v
                }
                Err(_) => f64::NAN,
            }
        };
        let (v, e) = quad::integrate(&mut outer, ya, yb, qp.tol / 4.0, depth)?;
        if v.is_nan() {
            return Err(Error::QuadratureNonConvergence {
                requested: inner_tol,
                achieved: f64::NAN,
            });
        }
        parts.push(v);
        errors.push(e + line_err * (yb - ya));
    }
    let integral = pairwise_sum(&parts);
    let err = pairwise_sum(&errors);
    let (_, _, f2_l1) = tf.l1_norms()?;
    Ok(HsResult {
        value: integral * 2.0 / PI,
        truncation_estimate: y_min * y_min * f2_l1,
        quadrature_error: err * 2.0 / PI,
    })
}

/// Both sides of the cumulant expansion of `E[h·f(h)]` for a polynomial `f`
/// and a two-point law `h`: every expectation is an exact two-term sum, so
/// for `ell ≥ deg f` the identity is exact and the gap is pure rounding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CumulantExpansionReport {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    /// `terms[r] = C_{r+1}(h)/r! · E[f^{(r)}(h)]`, r = 0..=ell.
    pub terms: Vec<f64>,
}

/// Evaluate the expansion for `h = (χ_p - p)·scale` and
/// `f(x) = Σ poly_coeffs[k]·x^k`, truncated at order `ell`.
pub fn cumulant_expansion_check(
    p: f64,
    scale: f64,
    poly_coeffs: &[f64],
    ell: usize,
) -> Result<CumulantExpansionReport> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "p must lie in (0,1), got {p}"
        )));
    }
    if ell < 1 {
        return Err(Error::InvalidParameter("ell must be at least 1".into()));
    }
    let law = TwoPointLaw::centered_bernoulli(p, scale);
    let lhs = law.expect(|x| x * poly_eval(poly_coeffs, x));
    let kappa = law.cumulants(ell + 1);
    let mut deriv: Vec<f64> = poly_coeffs.to_vec();
    let mut factorial = 1.0f64;
    let mut terms = Vec::with_capacity(ell + 1);
    for r in 0..=ell {
        if r > 0 {
            deriv = poly_derive(&deriv);
            factorial *= r as f64;
        }
        let expectation = law.expect(|x| poly_eval(&deriv, x));
        terms.push(kappa[r] / factorial * expectation);
    }
    let rhs = pairwise_sum(&terms);
    Ok(CumulantExpansionReport {
        lhs,
        rhs,
        gap: lhs - rhs,
        terms,
    })
}

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

fn poly_derive(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| k as f64 * c)
        .collect()
}
