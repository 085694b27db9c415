//! Acceptance suite: every verification gate of the laboratory, each as one
//! test printing a pass line with its measured quantities. Exact identities
//! are pinned at tight tolerances; Monte Carlo gates use the calibrated
//! desk-scale thresholds. Runtime notes in the comments are guidance on an
//! unloaded 2-core box, not assertions.

use num_complex::Complex64;
use rmtlab_core::ensemble::{sample_er, EnsembleParams, SeedInfo};
use rmtlab_core::hsquad::{cumulant_expansion_check, hs_reconstruct, QuadParams};
use rmtlab_core::mcstats::{
    phase_sweep, run_clt, CltResult, ExperimentConfig, FiiEngine, IndexPolicy, Standardization,
};
use rmtlab_core::rng::{prf_u01, prf_u64, stream_for};
use rmtlab_core::semicircle::{
    build_test_function, stieltjes_m, variance_formula, variance_kernel_integral,
};
use rmtlab_core::spectral::{
    eigendecompose, f_ii, law_diagnostics, resolvent_derivative_check, LawRow,
};
use rmtlab_core::testfunc::{Bump, Calibration, CutoffProfile, ProfileKind, TestFunctionSpec};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

// ---------------------------------------------------------------- helpers

fn elapsed(t0: Instant) -> f64 {
    t0.elapsed().as_secs_f64()
}

fn clt_config(
    n: usize,
    p: f64,
    eta: f64,
    master_seed: u64,
    engine: FiiEngine,
) -> ExperimentConfig {
    ExperimentConfig {
        params: EnsembleParams::new(n, p, 0.1, true).expect("admissible ensemble"),
        tf: TestFunctionSpec::single(ProfileKind::Mollifier, 0.0, eta),
        replicas: 2000,
        index_policy: IndexPolicy::Fixed { index: 0 },
        master_seed,
        standardization: Standardization::EmpiricalMeanTheoryVar,
        engine,
        workers: 0,
    }
}

/// #6 runs are shared with the expectation gate (#11).
fn global_clt_runs() -> &'static Vec<CltResult> {
    static RUNS: OnceLock<Vec<CltResult>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let engine = FiiEngine::LanczosQuadrature {
            tol: 1e-6,
            max_steps: 2048,
            reorth: true,
        };
        (1..=10u64)
            .map(|seed| run_clt(&clt_config(1000, 0.05, 1.0, seed, engine)).expect("clt run"))
            .collect()
    })
}

/// Per-replica law rows at z = i for the three sizes of the local-law trend
/// (shared between #9 and #10).
fn law_rows() -> &'static Vec<(usize, Vec<LawRow>)> {
    static ROWS: OnceLock<Vec<(usize, Vec<LawRow>)>> = OnceLock::new();
    ROWS.get_or_init(|| {
        use rayon::prelude::*;
        let z = Complex64::new(0.0, 1.0);
        [500usize, 1000, 2000]
            .iter()
            .map(|&n| {
                let params = EnsembleParams::new(n, 0.05, 0.1, true).expect("admissible");
                let rows: Vec<LawRow> = (0..20u64)
                    .into_par_iter()
                    .map(|r| {
                        let sample = sample_er(&params, SeedInfo { master: 42, replica: r });
                        let spec = eigendecompose(&sample).expect("eigensolver");
                        law_diagnostics(&spec, &params, &[z]).expect("diagnostics").rows[0]
                    })
                    .collect();
                (n, rows)
            })
            .collect()
    })
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

// ---------------------------------------------------------------- criteria

/// Stieltjes identity on a 1000-point grid of the spectral domain.
#[test]
fn c01_stieltjes_identity() {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    let mut sign_violations = 0usize;
    for i in 0..25 {
        for j in 0..20 {
            for sgn in [1.0, -1.0] {
                let x = -4.0 + 8.0 * i as f64 / 24.0;
                let y = sgn * 4.0 * (2.5e-7f64).powf(j as f64 / 19.0);
                let z = Complex64::new(x, y);
                let m = stieltjes_m(z).unwrap().m;
                worst = worst.max((m * m + z * m + 1.0).norm());
                if m.im * y <= 0.0 {
                    sign_violations += 1;
                }
            }
        }
    }
    assert!(worst <= 1e-12, "max residual {worst:.3e}");
    assert_eq!(sign_violations, 0);
    println!(
        "[c01] stieltjes identity: pass (max residual {worst:.2e}) in {:.2}s",
        elapsed(t0)
    );
}

/// Cumulant expansion is exact for polynomials on the two-point law.
#[test]
fn c02_cumulant_expansion_exactness() {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for case in 0..100u64 {
        let u = |slot: u64| prf_u01(777, stream_for(3, case), slot);
        let p = 0.05 + 0.9 * u(0);
        let scale = 0.1 + 1.9 * u(1);
        let coeffs: Vec<f64> = (0..6).map(|k| 2.0 * u(2 + k) - 1.0).collect();
        let rep = cumulant_expansion_check(p, scale, &coeffs, 5).unwrap();
        worst = worst.max(rep.gap.abs());
    }
    assert!(worst <= 1e-12, "max |lhs - rhs| {worst:.3e}");
    println!(
        "[c02] cumulant expansion exactness: pass (max gap {worst:.2e}) in {:.2}s",
        elapsed(t0)
    );
}

/// Resolvent differential rule: finite difference vs formula at z = i.
#[test]
fn c03_resolvent_differential_rule() {
    let t0 = Instant::now();
    let params = EnsembleParams::new(200, 0.2, 0.1, true).unwrap();
    let sample = sample_er(&params, SeedInfo { master: 314, replica: 0 });
    let z = Complex64::new(0.0, 1.0);
    let n = params.n();
    let mut worst = 0.0f64;
    for draw in 0..20u64 {
        let k = (prf_u64(555, stream_for(3, draw), 0) % n as u64) as usize;
        let l = (prf_u64(555, stream_for(3, draw), 1) % n as u64) as usize;
        let rel = resolvent_derivative_check(&sample, &params, k, l, z, 1e-6).unwrap();
        worst = worst.max(rel);
    }
    assert!(worst <= 1e-6, "max relative error {worst:.3e}");
    println!(
        "[c03] resolvent differential rule: pass (max rel err {worst:.2e}) in {:.2}s",
        elapsed(t0)
    );
}

/// Resolvent-based reconstruction against the spectral sum, 5 seeds,
/// two scales.
#[test]
fn c04_hs_reconstruction() {
    let t0 = Instant::now();
    let params = EnsembleParams::new(500, 0.1, 0.1, true).unwrap();
    let qp = QuadParams {
        alpha: 0.001,
        tol: 1e-7,
        max_refinement: 2,
    };
    let cp = CutoffProfile;
    let mut worst_ratio = 0.0f64;
    for master in 1..=5u64 {
        let sample = sample_er(&params, SeedInfo { master, replica: 0 });
        let spec = eigendecompose(&sample).unwrap();
        for &eta in &[1.0f64, 0.3] {
            let tf = build_test_function(&TestFunctionSpec::single(
                ProfileKind::Mollifier,
                0.0,
                eta,
            ))
            .unwrap();
            let exact = f_ii(&spec, &tf, 0);
            let hs = hs_reconstruct(&spec, &tf, &cp, 0, &qp).unwrap();
            let tol = 1e-3 * exact.abs().max(eta);
            let dev = (hs.value - exact).abs();
            assert!(
                dev <= tol,
                "seed {master}, eta {eta}: |hs - f_ii| = {dev:.3e} > {tol:.3e}"
            );
            worst_ratio = worst_ratio.max(dev / tol);
        }
    }
    println!(
        "[c04] reconstruction vs spectral sum: pass (worst dev/tol {worst_ratio:.2}) in {:.1}s",
        elapsed(t0)
    );
}

/// Double-contour kernel integral matches the closed-form variance for two
/// test functions: one with vanishing fourth-cumulant weight, one without.
#[test]
fn c05_kernel_closed_form_equivalence() {
    let t0 = Instant::now();
    let params = EnsembleParams::new(1000, 0.05, 0.1, true).unwrap();
    let qp = QuadParams {
        alpha: 0.001,
        tol: 1e-7,
        max_refinement: 2,
    };

    let plain = TestFunctionSpec::single(ProfileKind::Mollifier, 0.2, 0.25);
    let zero_c4 = TestFunctionSpec {
        bumps: vec![
            Bump::plain(1.0, ProfileKind::Mollifier, -0.9, 0.25),
            Bump::plain(1.0, ProfileKind::Mollifier, 0.6, 0.25),
        ],
        calibration: Calibration::ZeroC4Weight,
    };

    let mut gaps = Vec::new();
    for (name, spec) in [("mixed", &plain), ("zero-c4", &zero_c4)] {
        let tf = build_test_function(spec).unwrap();
        let vb = variance_formula(&tf, &params).unwrap();
        let ki = variance_kernel_integral(&tf, &params, &qp).unwrap();
        let rel = (ki.total - vb.total).abs() / vb.total.abs();
        assert!(
            rel <= 1e-3,
            "{name}: kernel {:.8e} vs formula {:.8e} (rel {rel:.2e})",
            ki.total,
            vb.total
        );
        gaps.push(rel);
        if name == "mixed" {
            // the factorized kernel part alone reproduces the c4 term
            let c4_rel = (ki.c4 - vb.c4_term).abs() / vb.c4_term.abs();
            assert!(c4_rel <= 1e-4, "c4 part rel {c4_rel:.2e}");
        }
        if name == "zero-c4" {
            assert!(
                ki.c4.abs() <= 1e-6 * ki.total.abs(),
                "calibrated function keeps a c4 part: {:.3e}",
                ki.c4
            );
        }
    }
    println!(
        "[c05] kernel vs closed form: pass (rel gaps {:.2e}, {:.2e}) in {:.1}s",
        gaps[0],
        gaps[1],
        elapsed(t0)
    );
}

/// Global-scale CLT: 10 master seeds, KS normality and variance ratio.
#[test]
fn c06_clt_global_scale() {
    let t0 = Instant::now();
    let runs = global_clt_runs();
    let ks_passes = runs.iter().filter(|r| r.ks_pvalue > 0.01).count();
    let ratio_ok = runs
        .iter()
        .filter(|r| r.var_ratio >= 0.8 && r.var_ratio <= 1.25)
        .count();
    let ratios: Vec<f64> = runs.iter().map(|r| r.var_ratio).collect();
    let pvals: Vec<f64> = runs.iter().map(|r| r.ks_pvalue).collect();
    assert!(
        ks_passes >= 8,
        "KS p > 0.01 in only {ks_passes}/10 seeds (p-values {pvals:.3?})"
    );
    assert_eq!(
        ratio_ok, 10,
        "var_ratio outside [0.8, 1.25] in {} seeds (ratios {ratios:.3?})",
        10 - ratio_ok
    );
    println!(
        "[c06] global-scale CLT: pass (KS {ks_passes}/10, var ratios {:.3}..{:.3}) in {:.0}s",
        ratios.iter().cloned().fold(f64::INFINITY, f64::min),
        ratios.iter().cloned().fold(0.0, f64::max),
        elapsed(t0)
    );
}

/// Mesoscopic CLT: same gates, smaller scale, 7 of 10 seeds.
#[test]
fn c07_clt_mesoscopic() {
    let t0 = Instant::now();
    let engine = FiiEngine::LanczosQuadrature {
        tol: 1e-6,
        max_steps: 2048,
        reorth: false,
    };
    let mut passing = 0usize;
    let mut summaries = Vec::new();
    for seed in 1..=10u64 {
        let run = run_clt(&clt_config(2000, 0.1, 0.1, seed, engine)).expect("clt run");
        let ok = run.ks_pvalue > 0.01 && run.var_ratio >= 0.8 && run.var_ratio <= 1.25;
        if ok {
            passing += 1;
        }
        summaries.push(format!(
            "seed {seed}: ks_p {:.3} ratio {:.3}{}",
            run.ks_pvalue,
            run.var_ratio,
            if ok { "" } else { " ✗" }
        ));
    }
    assert!(
        passing >= 7,
        "only {passing}/10 seeds pass both gates:\n{}",
        summaries.join("\n")
    );
    println!(
        "[c07] mesoscopic CLT: pass ({passing}/10 seeds) in {:.0}s",
        elapsed(t0)
    );
}

/// Phase transition: the normalized variance-term ratio follows p/η* and
/// the crossing sits within a factor 3 of p.
#[test]
fn c08_phase_transition_sweep() {
    let t0 = Instant::now();
    let n = 4000usize;
    let p = (n as f64).powf(-0.5);
    let config = ExperimentConfig {
        params: EnsembleParams::new(n, p, 0.02, true).unwrap(),
        tf: TestFunctionSpec {
            bumps: vec![
                Bump {
                    weight: 1.0,
                    profile: ProfileKind::Mollifier,
                    center: 0.0,
                    eta_star: 1.0,
                    halfwidth: 0.73,
                },
                Bump {
                    weight: -1.0472,
                    profile: ProfileKind::Mollifier,
                    center: 1.46,
                    eta_star: 1.0,
                    halfwidth: 0.51,
                },
                Bump {
                    weight: -1.0472,
                    profile: ProfileKind::Mollifier,
                    center: -1.46,
                    eta_star: 1.0,
                    halfwidth: 0.51,
                },
            ],
            calibration: Calibration::ZeroMean,
        },
        replicas: 0,
        index_policy: IndexPolicy::Fixed { index: 0 },
        master_seed: 1,
        standardization: Standardization::EmpiricalMeanTheoryVar,
        engine: FiiEngine::Eigendecomposition,
        workers: 0,
    };
    // low rows bracket the crossing; the flatness gate reads the
    // [10p, 1] subgrid
    let mut grid: Vec<f64> = vec![p / 3.0, 2.0 * p / 3.0, 4.0 * p / 3.0, 8.0 * p / 3.0, 16.0 * p / 3.0];
    for i in 0..9 {
        grid.push(10.0 * p * (1.0 / (10.0 * p)).powf(i as f64 / 8.0));
    }
    let sweep = phase_sweep(&config, &grid).unwrap();
    for row in &sweep.rows {
        assert!(row.error.is_none(), "row eta {} failed: {:?}", row.eta_star, row.error);
    }
    let logs: Vec<f64> = sweep
        .rows
        .iter()
        .filter(|r| r.eta_star >= 10.0 * p * (1.0 - 1e-9))
        .map(|r| (r.gauss_term / r.c4_term * r.eta_star / p).ln())
        .collect();
    assert_eq!(logs.len(), 9);
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = logs.iter().cloned().fold(f64::INFINITY, f64::min);
    // proportionality to p/eta with the constant fitted minimax: the band
    // half-width must stay within 10%
    let band = (0.5 * (max - min)).exp() - 1.0;
    assert!(band <= 0.10, "ratio band ±{:.1}% exceeds 10%", band * 100.0);
    let crossing = sweep.crossing_estimate.expect("crossing bracketed by the grid");
    assert!(
        crossing >= p / 3.0 && crossing <= 3.0 * p,
        "crossing {crossing:.5} outside [{:.5}, {:.5}]",
        p / 3.0,
        3.0 * p
    );
    println!(
        "[c08] phase transition: pass (band ±{:.1}%, crossing {:.2}·p) in {:.1}s",
        band * 100.0,
        crossing / p,
        elapsed(t0)
    );
}

/// Local-law trend: the diagonal resolvent deviation shrinks with N and
/// stays under the envelope.
#[test]
fn c09_local_law_trend() {
    let t0 = Instant::now();
    let rows = law_rows();
    let mut medians = Vec::new();
    for (n, per_replica) in rows.iter() {
        let med = median(per_replica.iter().map(|r| r.max_diag_dev).collect());
        let q = (*n as f64 * 0.05).sqrt();
        let bound = 10.0 * (1.0 / q + 1.0 / (*n as f64).sqrt());
        assert!(
            med <= bound,
            "N = {n}: median diag deviation {med:.4} above 10(1/q + 1/sqrt(N)) = {bound:.4}"
        );
        medians.push((*n, med));
    }
    assert!(
        medians[0].1 > medians[1].1 && medians[1].1 > medians[2].1,
        "medians not decreasing: {medians:?}"
    );
    println!(
        "[c09] local law trend: pass (medians {:.4} > {:.4} > {:.4}) in {:.0}s",
        medians[0].1, medians[1].1, medians[2].1,
        elapsed(t0)
    );
}

/// Isotropic law: normalized resolvent row sums stay within 10/q.
#[test]
fn c10_isotropic_law() {
    let t0 = Instant::now();
    let rows = law_rows();
    let (_, per_replica) = rows.iter().find(|(n, _)| *n == 1000).unwrap();
    let med = median(per_replica.iter().map(|r| r.iso_dev).collect());
    let q = (1000.0f64 * 0.05).sqrt();
    let bound = 10.0 / q;
    assert!(med <= bound, "median iso deviation {med:.4} above {bound:.4}");
    println!(
        "[c10] isotropic law: pass (median {med:.4} ≤ {bound:.4}) in {:.0}s",
        elapsed(t0)
    );
}

/// Expectation formula: the empirical mean sits within 4 standard errors of
/// the semicircle prediction on the global-scale runs.
#[test]
fn c11_expectation_formula() {
    let t0 = Instant::now();
    let runs = global_clt_runs();
    let mut within = 0usize;
    let mut worst = 0.0f64;
    for run in runs.iter() {
        let se = (run.theory.total / run.samples.len() as f64).sqrt();
        let dev = (run.emp_mean - run.theory.mean).abs() / se;
        worst = worst.max(dev);
        if dev <= 4.0 {
            within += 1;
        }
    }
    assert!(
        within >= 8,
        "empirical mean within 4 SE in only {within}/10 seeds (worst {worst:.2} SE)"
    );
    println!(
        "[c11] expectation formula: pass ({within}/10 seeds, worst {worst:.2} SE) in {:.0}s",
        elapsed(t0)
    );
}

/// Byte-identical payloads on re-run with the same config and seed.
#[test]
fn c12_reproducibility() {
    let t0 = Instant::now();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/clt_small.toml");
    let digests = |dir: &PathBuf| -> Vec<(String, String)> {
        let text = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
        let man: serde_json::Value = serde_json::from_str(&text).unwrap();
        man["outputs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|o| {
                (
                    o["path"].as_str().unwrap().to_string(),
                    o["sha256"].as_str().unwrap().to_string(),
                )
            })
            .collect()
    };
    let mut all = Vec::new();
    for tag in ["a", "b"] {
        let dir = std::env::temp_dir().join(format!("rmtlab-accept-repro-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        let output = std::process::Command::new(env!("CARGO_BIN_EXE_rmtlab"))
            .arg("--out")
            .arg(&dir)
            .args(["clt", "--config"])
            .arg(&config)
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        all.push(digests(&dir));
    }
    assert_eq!(all[0], all[1], "payload digests differ between reruns");
    println!(
        "[c12] reproducibility: pass ({} payloads byte-identical) in {:.0}s",
        all[0].len(),
        elapsed(t0)
    );
}
