//! The analytic identity suite behind `rmtlab selfcheck`: exact and
//! near-exact identities that any healthy build must satisfy. Each suite is
//! a handful of named checks with pinned thresholds; the command exits
//! nonzero if any suite fails.
//!
//! `--sabotage m-branch` deliberately feeds the wrong square-root branch of
//! the Stieltjes transform into the residual suite, as an end-to-end test
//! that the harness actually catches faults.

use num_complex::Complex64;
use rmtlab_core::ensemble::{entry_cumulants, sample_er, EnsembleParams, SeedInfo};
use rmtlab_core::hsquad::{cumulant_expansion_check, hs_reconstruct, QuadParams};
use rmtlab_core::rng::{prf_u01, stream_for};
use rmtlab_core::semicircle::{
    greens_theorem_residual, m_prime, m_value, rho_sc, sc_expectation,
    stieltjes_m,
};
use rmtlab_core::spectral::{eigendecompose, f_ii, resolvent_derivative_check};
use rmtlab_core::testfunc::{CutoffProfile, ProfileKind, TestFunction};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Suite {
    pub name: String,
    pub checks: Vec<Check>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelfcheckReport {
    pub schema: String,
    pub suites: Vec<Suite>,
    pub all_passed: bool,
}

fn suite(name: &str, checks: Vec<Check>) -> Suite {
    let passed = checks.iter().all(|c| c.passed);
    Suite {
        name: name.to_string(),
        checks,
        passed,
    }
}

fn upper(name: &str, value: f64, threshold: f64) -> Check {
    Check {
        name: name.to_string(),
        value,
        threshold,
        passed: value <= threshold && value.is_finite(),
    }
}

pub fn run(sabotage: Option<&str>) -> SelfcheckReport {
    let sabotage_m_branch = matches!(sabotage, Some("m-branch"));
    let mut suites = Vec::new();

    // Stieltjes transform: residual of the defining quadratic and the
    // half-plane branch condition on a 1000-point grid
    {
        let mut worst_residual = 0.0f64;
        let mut branch_violations = 0usize;
        for i in 0..25 {
            for j in 0..20 {
                for sgn in [1.0, -1.0] {
                    let x = -4.0 + 8.0 * i as f64 / 24.0;
                    let y = sgn * 4.0 * (2.5e-7f64).powf(j as f64 / 19.0);
                    let z = Complex64::new(x, y);
                    let mut m = stieltjes_m(z).expect("off-axis").m;
                    if sabotage_m_branch {
                        // the other quadratic root
                        m = -z - m;
                    }
                    worst_residual = worst_residual.max((m * m + z * m + 1.0).norm());
                    if m.im * y <= 0.0 {
                        branch_violations += 1;
                    }
                }
            }
        }
        suites.push(suite(
            "stieltjes_residual",
            vec![
                upper("max |m^2+zm+1| on grid", worst_residual, 1e-12),
                upper("branch violations", branch_violations as f64, 0.0),
            ],
        ));
    }

    // Green's theorem on a rectangle: contour vs area quadrature
    {
        let res = greens_theorem_residual(-1.2, 1.4, 0.15, 1.1).unwrap_or(f64::INFINITY);
        suites.push(suite(
            "greens_theorem",
            vec![upper("relative residual", res, 1e-9)],
        ));
    }

    // Cumulant expansion: exact identity for polynomials on the two-point law
    {
        let mut worst = 0.0f64;
        for case in 0..100u64 {
            let u = |slot: u64| prf_u01(777, stream_for(3, case), slot);
            let p = 0.05 + 0.9 * u(0);
            let scale = 0.1 + 1.9 * u(1);
            let coeffs: Vec<f64> = (0..6).map(|k| 2.0 * u(2 + k) - 1.0).collect();
            match cumulant_expansion_check(p, scale, &coeffs, 5) {
                Ok(rep) => worst = worst.max(rep.gap.abs()),
                Err(_) => worst = f64::INFINITY,
            }
        }
        suites.push(suite(
            "cumulant_exactness",
            vec![upper("max |lhs - rhs| over 100 cases", worst, 1e-12)],
        ));
    }

    // Resolvent differential rule: finite difference vs closed formula
    {
        let params = EnsembleParams::new(100, 0.2, 0.1, true).expect("admissible");
        let sample = sample_er(&params, SeedInfo { master: 11, replica: 0 });
        let z = Complex64::new(0.0, 1.0);
        let mut worst = 0.0f64;
        for &(k, l) in &[(3usize, 11usize), (40, 41), (7, 7)] {
            let rel = resolvent_derivative_check(&sample, &params, k, l, z, 1e-6)
                .unwrap_or(f64::INFINITY);
            worst = worst.max(rel);
        }
        suites.push(suite(
            "resolvent_rule",
            vec![upper("max relative error", worst, 1e-6)],
        ));
    }

    // Semicircle moments through the edge-absorbing substitution
    {
        let norm = sc_expectation(|_| 1.0, 1e-12).unwrap_or(f64::NAN);
        let second = sc_expectation(|x| x * x, 1e-12).unwrap_or(f64::NAN);
        let weight = sc_expectation(|x| 1.0 - x * x, 1e-12).unwrap_or(f64::NAN);
        suites.push(suite(
            "semicircle_moments",
            vec![
                upper("|∫ρ - 1|", (norm - 1.0).abs(), 1e-10),
                upper("|∫x²ρ - 1|", (second - 1.0).abs(), 1e-9),
                upper("|∫(1-x²)ρ|", weight.abs(), 1e-9),
                upper("|ρ(0) - 1/π|", (rho_sc(0.0) - 1.0 / std::f64::consts::PI).abs(), 1e-15),
            ],
        ));
    }

    // Stieltjes derivative: implicit-function value vs finite differences
    {
        let h = 1e-6;
        let mut worst = 0.0f64;
        for &(x, y) in &[(0.0, 0.5), (1.2, 0.4), (-0.7, 1.0), (0.3, 0.08)] {
            let z = Complex64::new(x, y);
            let m = m_value(z);
            let fd = (m_value(z + h) - m_value(z - h)) / (2.0 * h);
            let rel = (fd - m_prime(m)).norm() / m_prime(m).norm();
            worst = worst.max(rel);
        }
        suites.push(suite(
            "stieltjes_derivative",
            vec![upper("max relative error", worst, 1e-6)],
        ));
    }

    // Resolvent-based reconstruction of f(A)_ii against the spectral sum
    {
        let params = EnsembleParams::new(120, 0.2, 0.1, true).expect("admissible");
        let sample = sample_er(&params, SeedInfo { master: 5, replica: 0 });
        let check = (|| -> Result<f64, rmtlab_core::Error> {
            let spec = eigendecompose(&sample)?;
            let tf = TestFunction::bump(ProfileKind::Mollifier, 0.0, 0.5)?;
            let qp = QuadParams {
                alpha: 0.001,
                tol: 1e-7,
                max_refinement: 2,
            };
            let exact = f_ii(&spec, &tf, 7);
            let hs = hs_reconstruct(&spec, &tf, &CutoffProfile, 7, &qp)?;
            Ok((hs.value - exact).abs() / exact.abs().max(0.5))
        })()
        .unwrap_or(f64::INFINITY);
        suites.push(suite(
            "hs_reconstruction",
            vec![upper("relative deviation", check, 1e-3)],
        ));
    }

    // Cumulant scaling window for the sampled ensemble family
    {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for &(n, p) in &[(1000usize, 0.02f64), (1000, 0.2), (100_000, 0.002)] {
            let params = EnsembleParams::new_unchecked(n, p, 0.1, true).expect("params");
            let cum = entry_cumulants(&params, 8);
            for r in 3..=8 {
                let scaled = cum.order(r).abs() * n as f64 * params.q().powi(r as i32 - 2);
                lo = lo.min(scaled);
                hi = hi.max(scaled);
            }
        }
        suites.push(suite(
            "cumulant_scaling",
            vec![
                upper("1/min scaled cumulant", 1.0 / lo, 1e3),
                upper("max scaled cumulant", hi, 1e3),
            ],
        ));
    }

    let all_passed = suites.iter().all(|s| s.passed);
    SelfcheckReport {
        schema: "rmtlab.selfcheck.v1".into(),
        suites,
        all_passed,
    }
}
