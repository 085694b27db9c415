//! Semicircle law: density, Stieltjes transform, and the variance /
//! expectation formulas for diagonal functional statistics, together with
//! the double-contour variance kernel that cross-checks them.

use crate::ensemble::{c4_coefficient, EnsembleParams};
use crate::error::{Error, Result};
use crate::hsquad::QuadParams;
use crate::quad::{self, PanelGrid};
use crate::testfunc::{dbar_extension, Calibration, CutoffProfile, TestFunction, TestFunctionSpec};
use crate::util::pairwise_sum;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Semicircle density `(1/2π)·sqrt((4 - x²)₊)`.
pub fn rho_sc(x: f64) -> f64 {
    let d = 4.0 - x * x;
    if d <= 0.0 {
        0.0
    } else {
        d.sqrt() / (2.0 * PI)
    }
}

/// A point of the Stieltjes transform together with its argument.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StieltjesValue {
    pub z: Complex64,
    pub m: Complex64,
}

/// Stieltjes transform of the semicircle law: the root of `m² + zm + 1 = 0`
/// with `Im m · Im z > 0`.
///
/// The square root of `z² - 4` is taken continuous on the cut plane
/// `C ∖ [-2, 2]` with `sqrt(z² - 4) ~ z` at infinity, realized as
/// `sqrt(z-2)·sqrt(z+2)` with principal roots. The rationalized form
/// `m = -2/(z + sqrt(z²-4))` avoids cancellation for large |z|.
pub fn stieltjes_m(z: Complex64) -> Result<StieltjesValue> {
    if z.im == 0.0 {
        return Err(Error::InvalidInput(
            "stieltjes transform evaluated on the real axis".into(),
        ));
    }
    Ok(StieltjesValue {
        z,
        m: m_value(z),
    })
}

/// Raw transform value; the caller guarantees `Im z ≠ 0`.
#[inline]
pub fn m_value(z: Complex64) -> Complex64 {
    let root = (z - 2.0).sqrt() * (z + 2.0).sqrt();
    -2.0 / (z + root)
}

/// `m'(z) = m²/(1 - m²)`, from differentiating the defining quadratic.
#[inline]
pub fn m_prime(m: Complex64) -> Complex64 {
    let m2 = m * m;
    m2 / (1.0 - m2)
}

/// Expectation `∫ g(x) ρ_sc(x) dx` over [-2, 2].
///
/// The substitution `x = 2 sin θ` absorbs the square-root edge factor
/// exactly: the integrand becomes `(2/π) g(2 sin θ) cos² θ` on
/// [-π/2, π/2], which is smooth whenever `g` is. For integrands with
/// narrow support use [`sc_expectation_against`], which brackets it.
pub fn sc_expectation(g: impl Fn(f64) -> f64, tol: f64) -> Result<f64> {
    let mut integrand = |theta: f64| {
        let c = theta.cos();
        g(2.0 * theta.sin()) * c * c * (2.0 / PI)
    };
    let (v, _) = quad::integrate(&mut integrand, -PI / 2.0, PI / 2.0, tol, 40)?;
    Ok(v)
}

/// `∫ f(x)·g(x)·ρ_sc(x) dx` with the quadrature bracketed at the bump
/// edges of `f`, so arbitrarily narrow test functions integrate correctly.
pub fn sc_expectation_against(
    tf: &TestFunction,
    g: impl Fn(f64) -> f64,
    tol: f64,
) -> Result<f64> {
    let to_theta = |x: f64| (x.clamp(-2.0, 2.0) / 2.0).asin();
    let mut breaks = Vec::with_capacity(3 * tf.bumps().len());
    for b in tf.bumps() {
        let (lo, hi) = b.support();
        breaks.push(to_theta(lo));
        breaks.push(to_theta(b.center));
        breaks.push(to_theta(hi));
    }
    let mut integrand = |theta: f64| {
        let c = theta.cos();
        let x = 2.0 * theta.sin();
        tf.eval(x, 0) * g(x) * c * c * (2.0 / PI)
    };
    let (v, _) = quad::integrate_with_breaks(&mut integrand, -PI / 2.0, PI / 2.0, &breaks, tol, 44)?;
    Ok(v)
}

/// The two-term variance prediction for `f(A)_ii` plus the mean.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VarianceBreakdown {
    /// `∫ f ρ_sc`
    pub mean: f64,
    /// `(2/N)·Var f(S)`
    pub gauss_term: f64,
    /// `N·C₄(H₁₂)·(E[f(S)(1-S²)])²` — negative when `1 - 6p + 6p² < 0`
    pub c4_term: f64,
    /// `gauss_term + c4_term`
    pub total: f64,
}

impl VarianceBreakdown {
    /// A nonpositive total lies outside the verified regime and cannot be
    /// used to standardize.
    pub fn check_positive(&self) -> Result<()> {
        if self.total == 0.0 {
            Err(Error::ZeroVariance)
        } else if self.total < 0.0 {
            Err(Error::NegativeVariance {
                gauss: self.gauss_term,
                c4: self.c4_term,
            })
        } else {
            Ok(())
        }
    }
}

const SC_TOL: f64 = 1e-10;

/// Theory values for mean and variance of `f(A)_ii`.
pub fn variance_formula(tf: &TestFunction, params: &EnsembleParams) -> Result<VarianceBreakdown> {
    let mean = sc_expectation_against(tf, |_| 1.0, SC_TOL)?;
    let second = sc_expectation_against(tf, |x| tf.eval(x, 0), SC_TOL)?;
    let weight = sc_expectation_against(tf, |x| 1.0 - x * x, SC_TOL)?;
    let n = params.n() as f64;
    let gauss_term = 2.0 / n * (second - mean * mean);
    let c4_term = c4_coefficient(params) * weight * weight;
    Ok(VarianceBreakdown {
        mean,
        gauss_term,
        c4_term,
        total: gauss_term + c4_term,
    })
}

/// `E[f(A)_ii] = ∫ f ρ_sc` to leading order.
pub fn expected_fii(tf: &TestFunction) -> Result<f64> {
    sc_expectation_against(tf, |_| 1.0, SC_TOL)
}

/// Build a test function from its spec, applying the requested weight
/// calibration to the last bump.
pub fn build_test_function(spec: &TestFunctionSpec) -> Result<TestFunction> {
    let mut tf = spec.build_raw()?;
    match spec.calibration {
        Calibration::None => {}
        Calibration::ZeroMean => calibrate_last_weight(&mut tf, |_| 1.0)?,
        Calibration::ZeroC4Weight => calibrate_last_weight(&mut tf, |x| 1.0 - x * x)?,
    }
    Ok(tf)
}

/// Adjust the last bump's weight so that `∫ f g ρ_sc = 0`.
fn calibrate_last_weight(tf: &mut TestFunction, g: impl Fn(f64) -> f64 + Copy) -> Result<()> {
    let nb = tf.bumps().len();
    if nb < 2 {
        return Err(Error::InvalidParameter(
            "weight calibration needs at least two bumps".into(),
        ));
    }
    let mut partial = 0.0;
    let mut last = 0.0;
    for (k, b) in tf.bumps().to_vec().iter().enumerate() {
        let single = TestFunction::new(vec![*b])?;
        let i_k = sc_expectation_against(&single, g, SC_TOL)?;
        if k + 1 == nb {
            last = i_k;
        } else {
            partial += i_k;
        }
    }
    if last.abs() < 1e-14 * (1.0 + partial.abs()) {
        return Err(Error::InvalidParameter(
            "calibration bump has vanishing weight integral".into(),
        ));
    }
    let w = tf.bumps()[nb - 1].weight;
    tf.bumps_mut()[nb - 1].weight = -w * partial / last;
    Ok(())
}

/// The variance kernel integral split into its two parts, with the
/// imaginary residue of the quadrature and the difference between the two
/// finest refinement levels.
///
/// The evaluation pairs every quadrature node with its complex conjugate
/// analytically, so the imaginary part of the computed integral vanishes
/// identically; `refinement_delta` is the live convergence diagnostic.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KernelIntegral {
    pub gauss: f64,
    pub c4: f64,
    pub total: f64,
    pub imag_residual: f64,
    pub refinement_delta: f64,
}

/// Double-contour variance kernel
///
/// `(1/π²) ∬∬ ∂̄f̃(z) ∂̄f̃(z') [ 2N⁻¹ m(z)m(z') (m(z')-m(z))/(z'-z)
///                              + N C₄ m³(z) m³(z') ] d²z' d²z`,
///
/// integrated over `{|y| > N^{α-1}} ∩ {|y| < 2η}` in both variables. The
/// removable singularity on the diagonal is evaluated through the divided
/// difference limit `m'(z)`. Equals the closed-form variance for admissible
/// test functions.
pub fn variance_kernel_integral(
    tf: &TestFunction,
    params: &EnsembleParams,
    qp: &QuadParams,
) -> Result<KernelIntegral> {
    let coarse = kernel_at_level(tf, params, qp, qp.max_refinement.saturating_sub(1))?;
    let fine = kernel_at_level(tf, params, qp, qp.max_refinement)?;
    let total = fine.0.re + fine.1.re;
    let imag = (fine.0.im + fine.1.im).abs();
    if imag > 1e-6 * total.abs().max(1e-300) {
        return Err(Error::KernelImaginaryResidual {
            imag,
            real: total.abs(),
        });
    }
    Ok(KernelIntegral {
        gauss: fine.0.re,
        c4: fine.1.re,
        total,
        imag_residual: imag,
        refinement_delta: (total - (coarse.0.re + coarse.1.re)).abs(),
    })
}

/// Upper-half-plane tensor grid carrying everything the kernel pair sum
/// needs per node.
struct KernelGrid {
    /// weight · ∂̄f̃(z)
    wd: Vec<Complex64>,
    m: Vec<Complex64>,
    m3: Vec<Complex64>,
    z: Vec<Complex64>,
}

fn build_kernel_grid(
    tf: &TestFunction,
    params: &EnsembleParams,
    qp: &QuadParams,
    level: usize,
) -> KernelGrid {
    let cp = CutoffProfile;
    let y_min = (params.n() as f64).powf(qp.alpha - 1.0);
    let y_max = 2.0 * tf.max_eta();

    // x panels: per-bump uniform subdivision, merged into one sorted break
    // list so overlapping supports are never double counted
    let panels_per_bump = 12usize << level.min(6);
    let mut xb: Vec<f64> = Vec::new();
    for b in tf.bumps() {
        let (lo, hi) = b.support();
        xb.extend(quad::uniform_breaks(lo, hi, panels_per_bump));
    }
    xb.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xb.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let xgrid = PanelGrid::composite(&xb, 8);

    // y panels: geometric toward the axis exclusion, with breakpoints at the
    // cutoff scales of every bump
    let mut yb = quad::geometric_breaks(y_min, y_max, 2.0);
    for b in tf.bumps() {
        for s in [b.eta_star, 2.0 * b.eta_star] {
            if s > y_min && s < y_max {
                yb.push(s);
            }
        }
    }
    yb.sort_by(|a, b| a.partial_cmp(b).unwrap());
    yb.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    // octave-wide panels need a high-order rule: 6 points leave ~1e-2
    // relative error in the vertical integral, 12 reach ~1e-7
    let ygrid = PanelGrid::composite(&yb, 12);

    let cap = xgrid.len() * ygrid.len();
    let mut grid = KernelGrid {
        wd: Vec::with_capacity(cap),
        m: Vec::with_capacity(cap),
        m3: Vec::with_capacity(cap),
        z: Vec::with_capacity(cap),
    };
    for (&y, &wy) in ygrid.nodes.iter().zip(&ygrid.weights) {
        for (&x, &wx) in xgrid.nodes.iter().zip(&xgrid.weights) {
            let z = Complex64::new(x, y);
            let d = dbar_extension(tf, &cp, z);
            if d.norm_sqr() == 0.0 {
                continue;
            }
            let m = m_value(z);
            grid.wd.push(d * (wx * wy));
            grid.m.push(m);
            grid.m3.push(m * m * m);
            grid.z.push(z);
        }
    }
    grid
}

/// Returns (gauss part, c4 part) as complex numbers at one refinement
/// level, without the imaginary-residual gate. Diagnostic entry point; the
/// gated [`variance_kernel_integral`] is the production surface.
pub fn kernel_at_level(
    tf: &TestFunction,
    params: &EnsembleParams,
    qp: &QuadParams,
    level: usize,
) -> Result<(Complex64, Complex64)> {
    let grid = build_kernel_grid(tf, params, qp, level);
    let n_nodes = grid.wd.len();
    if n_nodes == 0 {
        return Ok((Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)));
    }

    // Gauss part: pair sum over (upper, upper) and (lower, upper)
    // quadrants; the remaining two quadrants are their complex conjugates,
    // so the full-plane value is 2·Re of the accumulated sums and its
    // imaginary part cancels identically. Both quadrant sums are symmetric
    // under index swap (the kernel is symmetric; the swapped mixed term is
    // the conjugate), so only pairs a ≤ b are visited.
    let rows: Vec<f64> = (0..n_nodes)
        .into_par_iter()
        .map(|a| {
            let za = grid.z[a];
            let ma = grid.m[a];
            let wda = grid.wd[a];
            let cza = za.conj();
            let cma = ma.conj();
            let cwda = wda.conj();
            // diagonal terms once
            let mut acc = (wda * wda * (ma * ma * m_prime(ma))).re
                + (cwda * wda * (cma * ma * (ma - cma) / (za - cza))).re;
            for b in (a + 1)..n_nodes {
                let zb = grid.z[b];
                let mb = grid.m[b];
                let wdb = grid.wd[b];
                let dd_same = (mb - ma) / (zb - za);
                let dd_mix = (mb - cma) / (zb - cza);
                let t_same = wda * wdb * (ma * mb * dd_same);
                let t_mix = cwda * wdb * (cma * mb * dd_mix);
                acc += 2.0 * (t_same.re + t_mix.re);
            }
            acc
        })
        .collect();
    let pair_sum = pairwise_sum(&rows);

    // c4 part factorizes: ∬ over C equals the upper-half sum plus its
    // conjugate, i.e. 2·Re of the single-plane sum
    let s_re: Vec<f64> = grid
        .wd
        .iter()
        .zip(&grid.m3)
        .map(|(wd, m3)| (wd * m3).re)
        .collect();
    let full = 2.0 * pairwise_sum(&s_re); // ∬_C ∂̄f̃ m³, real by pairing
    let c4_pair = full * full;

    let n = params.n() as f64;
    let inv_pi2 = 1.0 / (PI * PI);
    let gauss = 2.0 * pair_sum * (2.0 / n) * inv_pi2;
    let c4 = c4_pair * c4_coefficient(params) * inv_pi2;
    Ok((
        Complex64::new(gauss, 0.0),
        Complex64::new(c4, 0.0),
    ))
}

/// Residual of Green's theorem `∮_∂Ω F dz = 2i ∬_Ω ∂_z̄ F d²z` for
/// `F(z) = z̄·m(z)` (so `∂_z̄F = m`) on the rectangle
/// `[x0, x1] × [y0, y1]` in the upper half-plane. Exercises both the
/// contour and the area quadrature; returns the relative residual.
pub fn greens_theorem_residual(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<f64> {
    assert!(y0 > 0.0 && y1 > y0 && x1 > x0);
    let f = |z: Complex64| z.conj() * m_value(z);
    let tol = 1e-12;

    // counter-clockwise boundary
    let mut contour = Complex64::new(0.0, 0.0);
    let (bottom, _) = quad::integrate_complex(&mut |x| f(Complex64::new(x, y0)), x0, x1, tol, 30)?;
    contour += bottom;
    let (right, _) = quad::integrate_complex(
        &mut |y| f(Complex64::new(x1, y)) * Complex64::i(),
        y0,
        y1,
        tol,
        30,
    )?;
    contour += right;
    let (top, _) = quad::integrate_complex(&mut |x| f(Complex64::new(x, y1)), x0, x1, tol, 30)?;
    contour -= top;
    let (left, _) = quad::integrate_complex(
        &mut |y| f(Complex64::new(x0, y)) * Complex64::i(),
        y0,
        y1,
        tol,
        30,
    )?;
    contour -= left;

    // area integral of m over the rectangle on a composite tensor grid
    let xg = PanelGrid::composite(&quad::uniform_breaks(x0, x1, 24), 8);
    let yg = PanelGrid::composite(&quad::uniform_breaks(y0, y1, 24), 8);
    let mut re = Vec::with_capacity(xg.len() * yg.len());
    let mut im = Vec::with_capacity(xg.len() * yg.len());
    for (&y, &wy) in yg.nodes.iter().zip(&yg.weights) {
        for (&x, &wx) in xg.nodes.iter().zip(&xg.weights) {
            let v = m_value(Complex64::new(x, y)) * (wx * wy);
            re.push(v.re);
            im.push(v.im);
        }
    }
    let area = Complex64::new(pairwise_sum(&re), pairwise_sum(&im));
    let lhs = contour;
    let rhs = 2.0 * Complex64::i() * area;
    Ok((lhs - rhs).norm() / rhs.norm().max(1e-300))
}
