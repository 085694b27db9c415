//! Monte Carlo orchestration: CLT verification runs, normality tests,
//! bootstrap intervals, and the scale-vs-sparsity phase sweep.
//!
//! Replicas are embarrassingly parallel; replica r owns the generator
//! stream (master_seed, r) and results are merged in replica order, so the
//! worker count never changes any output.

use crate::ensemble::{sample_er, EnsembleParams, SeedInfo};
use crate::error::{Error, Result};
use crate::rng::{stream_for, CounterRng, LANE_BOOTSTRAP, LANE_INDEX};
use crate::semicircle::{build_test_function, variance_formula, VarianceBreakdown};
use crate::spectral::{eigendecompose, f_ii, f_ii_lanczos, LanczosSettings};
use crate::testfunc::TestFunctionSpec;
use crate::util::{central_moment, mean, pairwise_sum, sample_variance};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Which diagonal index each replica evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum IndexPolicy {
    Fixed { index: usize },
    RandomPerReplica,
}

/// How samples are centered and scaled before the normality test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Standardization {
    TheoryMeanTheoryVar,
    /// Default: empirical centering isolates the variance and Gaussianity
    /// claims from the finite-size bias of the mean.
    #[default]
    EmpiricalMeanTheoryVar,
    FullyEmpirical,
}

/// Evaluation engine for `f(A)_ii`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "snake_case")]
pub enum FiiEngine {
    /// Dense eigendecomposition; the reference route.
    Eigendecomposition,
    /// Lanczos quadrature; cross-validated against the dense route.
    LanczosQuadrature {
        tol: f64,
        max_steps: usize,
        #[serde(default = "default_reorth")]
        reorth: bool,
    },
}

fn default_reorth() -> bool {
    true
}

impl Default for FiiEngine {
    fn default() -> Self {
        FiiEngine::Eigendecomposition
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub params: EnsembleParams,
    pub tf: TestFunctionSpec,
    pub replicas: usize,
    pub index_policy: IndexPolicy,
    pub master_seed: u64,
    #[serde(default)]
    pub standardization: Standardization,
    #[serde(default)]
    pub engine: FiiEngine,
    /// 0 = use the global thread pool.
    #[serde(default)]
    pub workers: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CltResult {
    pub samples: Vec<f64>,
    pub emp_mean: f64,
    pub emp_var: f64,
    pub emp_skew: f64,
    pub emp_kurt: f64,
    pub ci_mean: (f64, f64),
    pub ci_var: (f64, f64),
    pub ci_skew: (f64, f64),
    pub ci_kurt: (f64, f64),
    pub ks_stat: f64,
    pub ks_pvalue: f64,
    /// Anderson–Darling statistic, reported without p-value calibration.
    pub ad_stat: f64,
    pub theory: VarianceBreakdown,
    pub var_ratio: f64,
}

/// Draw all replica values of `f(A)_ii`, in replica order.
fn replica_values(config: &ExperimentConfig) -> Result<Vec<f64>> {
    let tf = build_test_function(&config.tf)?;
    tf.validate_for(&config.params)?;
    let n = config.params.n();
    let evaluate = |r: u64| -> Result<f64> {
        let sample = sample_er(
            &config.params,
            SeedInfo {
                master: config.master_seed,
                replica: r,
            },
        );
        let index = match config.index_policy {
            IndexPolicy::Fixed { index } => {
                if index >= n {
                    return Err(Error::InvalidParameter(format!(
                        "index {index} out of range for N = {n}"
                    )));
                }
                index
            }
            IndexPolicy::RandomPerReplica => {
                CounterRng::new(config.master_seed, stream_for(LANE_INDEX, r)).next_index(n)
            }
        };
        match config.engine {
            FiiEngine::Eigendecomposition => {
                let spec = eigendecompose(&sample)?;
                Ok(f_ii(&spec, &tf, index))
            }
            FiiEngine::LanczosQuadrature {
                tol,
                max_steps,
                reorth,
            } => f_ii_lanczos(
                &sample,
                &tf,
                index,
                &LanczosSettings {
                    tol,
                    max_steps,
                    reorth,
                },
            ),
        }
    };

    let run = || -> Result<Vec<f64>> {
        (0..config.replicas as u64)
            .into_par_iter()
            .map(evaluate)
            .collect()
    };
    if config.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
        pool.install(run)
    } else {
        run()
    }
}

/// Run one CLT experiment: sample M replicas, standardize, test normality.
pub fn run_clt(config: &ExperimentConfig) -> Result<CltResult> {
    if config.replicas < 100 {
        return Err(Error::InvalidParameter(format!(
            "normality testing needs at least 100 replicas, got {}",
            config.replicas
        )));
    }
    let tf = build_test_function(&config.tf)?;
    let theory = variance_formula(&tf, &config.params)?;
    theory.check_positive()?;

    let samples = replica_values(config)?;

    let emp_mean = mean(&samples);
    let emp_var = sample_variance(&samples);
    let m2 = central_moment(&samples, 2);
    let emp_skew = central_moment(&samples, 3) / m2.powf(1.5);
    let emp_kurt = central_moment(&samples, 4) / (m2 * m2) - 3.0;

    let b = 1000;
    let ci_mean = bootstrap_ci(&samples, mean, b, config.master_seed)?;
    let ci_var = bootstrap_ci(&samples, sample_variance, b, config.master_seed ^ 1)?;
    let skew_stat = |xs: &[f64]| {
        let v = central_moment(xs, 2);
        central_moment(xs, 3) / v.powf(1.5)
    };
    let kurt_stat = |xs: &[f64]| {
        let v = central_moment(xs, 2);
        central_moment(xs, 4) / (v * v) - 3.0
    };
    let ci_skew = bootstrap_ci(&samples, skew_stat, b, config.master_seed ^ 2)?;
    let ci_kurt = bootstrap_ci(&samples, kurt_stat, b, config.master_seed ^ 3)?;

    let (center, scale) = match config.standardization {
        Standardization::TheoryMeanTheoryVar => (theory.mean, theory.total.sqrt()),
        Standardization::EmpiricalMeanTheoryVar => (emp_mean, theory.total.sqrt()),
        Standardization::FullyEmpirical => {
            if emp_var == 0.0 {
                return Err(Error::ZeroVariance);
            }
            (emp_mean, emp_var.sqrt())
        }
    };
    let standardized: Vec<f64> = samples.iter().map(|x| (x - center) / scale).collect();
    let (ks_stat, ks_pvalue) = ks_normal(&standardized)?;
    let ad_stat = anderson_darling(&standardized);

    Ok(CltResult {
        emp_mean,
        emp_var,
        emp_skew,
        emp_kurt,
        ci_mean,
        ci_var,
        ci_skew,
        ci_kurt,
        ks_stat,
        ks_pvalue,
        ad_stat,
        theory,
        var_ratio: emp_var / theory.total,
        samples,
    })
}

/// One-sample Kolmogorov–Smirnov test against the standard normal law.
pub fn ks_normal(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 100 {
        return Err(Error::InvalidParameter(format!(
            "KS test needs at least 100 samples, got {}",
            samples.len()
        )));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = normal.cdf(x);
        d = d.max(cdf - i as f64 / n);
        d = d.max((i + 1) as f64 / n - cdf);
    }
    let p = kolmogorov_pvalue(n.sqrt() * d);
    Ok((d, p))
}

/// Two-sample KS test (used by the index-policy invariance check).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameter("empty sample".into()));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|u, v| u.partial_cmp(v).unwrap());
    ys.sort_by(|u, v| u.partial_cmp(v).unwrap());
    let (mut i, mut j) = (0usize, 0usize);
    let (m, n) = (xs.len() as f64, ys.len() as f64);
    let mut d = 0.0f64;
    while i < xs.len() && j < ys.len() {
        if xs[i] <= ys[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / m - j as f64 / n).abs());
    }
    let lambda = (m * n / (m + n)).sqrt() * d;
    Ok((d, kolmogorov_pvalue(lambda)))
}

/// Tail probability of the Kolmogorov distribution,
/// `Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} e^{-2k²λ²}`, with the theta-inverted form
/// on the small-λ side where the direct series converges slowly.
pub fn kolmogorov_pvalue(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    if lambda < 0.755 {
        // 1 - sqrt(2π)/λ Σ_{odd k} exp(-k²π²/(8λ²))
        let v = 1.0 / (lambda * lambda);
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let sum: f64 = (0..5)
            .map(|k| {
                let odd = (2 * k + 1) as f64;
                (-odd * odd * pi2 / 8.0 * v).exp()
            })
            .sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum).clamp(0.0, 1.0);
    }
    if lambda > 6.8116 {
        return 0.0;
    }
    let mut acc = 0.0f64;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        acc += if k % 2 == 1 { term } else { -term };
    }
    (2.0 * acc).clamp(0.0, 1.0)
}

/// Anderson–Darling statistic against the standard normal law.
fn anderson_darling(samples: &[f64]) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let nf = n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let phi_lo = normal.cdf(sorted[i]).clamp(1e-300, 1.0 - 1e-16);
        let phi_hi = normal.cdf(sorted[n - 1 - i]).clamp(1e-300, 1.0 - 1e-16);
        acc += (2.0 * i as f64 + 1.0) * (phi_lo.ln() + (1.0 - phi_hi).ln());
    }
    -nf - acc / nf
}

/// Percentile bootstrap 95% interval for an arbitrary statistic.
/// Deterministic in `seed`.
pub fn bootstrap_ci(
    samples: &[f64],
    statistic: impl Fn(&[f64]) -> f64,
    b: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if b < 200 {
        return Err(Error::InvalidParameter(format!(
            "bootstrap needs at least 200 resamples, got {b}"
        )));
    }
    if samples.is_empty() {
        return Err(Error::InvalidParameter("empty sample".into()));
    }
    let n = samples.len();
    let mut rng = CounterRng::new(seed, stream_for(LANE_BOOTSTRAP, 0));
    let mut stats = Vec::with_capacity(b);
    let mut resample = vec![0.0f64; n];
    for _ in 0..b {
        for slot in resample.iter_mut() {
            *slot = samples[rng.next_index(n)];
        }
        stats.push(statistic(&resample));
    }
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantile = |q: f64| -> f64 {
        let pos = q * (b - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        stats[lo] * (1.0 - frac) + stats[hi] * frac
    };
    Ok((quantile(0.025), quantile(0.975)))
}

/// One row of the phase-transition sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub eta_star: f64,
    pub gauss_term: f64,
    pub c4_term: f64,
    pub emp_var: Option<f64>,
    pub var_ratio: Option<f64>,
    pub ks_pvalue: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Scale where the Gaussian and fourth-cumulant terms cross, by
    /// log-linear interpolation of their ratio; None without a sign change.
    pub crossing_estimate: Option<f64>,
}

/// Sweep the test-function scale over `eta_grid`. With `replicas = 0` only
/// theory columns are produced. Per-row failures are recorded and the sweep
/// continues.
pub fn phase_sweep(base: &ExperimentConfig, eta_grid: &[f64]) -> Result<SweepResult> {
    if eta_grid.is_empty() {
        return Err(Error::InvalidParameter("empty eta grid".into()));
    }
    let mut etas = eta_grid.to_vec();
    etas.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut rows = Vec::with_capacity(etas.len());
    for &eta in &etas {
        let spec_eta = base.tf.at_eta(eta);
        let row = match build_test_function(&spec_eta)
            .and_then(|tf| tf.validate_for(&base.params).map(|_| tf))
        {
            Ok(tf) => match variance_formula(&tf, &base.params) {
                Ok(theory) => {
                    let mut row = SweepRow {
                        eta_star: eta,
                        gauss_term: theory.gauss_term,
                        c4_term: theory.c4_term,
                        emp_var: None,
                        var_ratio: None,
                        ks_pvalue: None,
                        error: None,
                    };
                    if base.replicas > 0 {
                        let cfg = ExperimentConfig {
                            tf: spec_eta.clone(),
                            ..base.clone()
                        };
                        match run_clt(&cfg) {
                            Ok(res) => {
                                row.emp_var = Some(res.emp_var);
                                row.var_ratio = Some(res.var_ratio);
                                row.ks_pvalue = Some(res.ks_pvalue);
                            }
                            Err(e) => row.error = Some(e.to_string()),
                        }
                    }
                    row
                }
                Err(e) => error_row(eta, e),
            },
            Err(e) => error_row(eta, e),
        };
        rows.push(row);
    }

    // crossing of gauss/c4 = 1, log-linear in eta
    let mut crossing = None;
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.c4_term <= 0.0 || b.c4_term <= 0.0 || a.gauss_term <= 0.0 || b.gauss_term <= 0.0 {
            continue;
        }
        let ra = (a.gauss_term / a.c4_term).ln();
        let rb = (b.gauss_term / b.c4_term).ln();
        if ra == 0.0 {
            crossing = Some(a.eta_star);
            break;
        }
        if ra.signum() != rb.signum() {
            let la = a.eta_star.ln();
            let lb = b.eta_star.ln();
            let t = ra / (ra - rb);
            crossing = Some((la + t * (lb - la)).exp());
            break;
        }
    }

    Ok(SweepResult {
        rows,
        crossing_estimate: crossing,
    })
}

fn error_row(eta: f64, e: Error) -> SweepRow {
    SweepRow {
        eta_star: eta,
        gauss_term: f64::NAN,
        c4_term: f64::NAN,
        emp_var: None,
        var_ratio: None,
        ks_pvalue: None,
        error: Some(e.to_string()),
    }
}

/// Deterministic replica aggregation helper exposed for tests: pairwise sum
/// in replica order.
pub fn ordered_sum(values: &[f64]) -> f64 {
    pairwise_sum(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfunc::ProfileKind;

    fn quick_config() -> ExperimentConfig {
        ExperimentConfig {
            params: EnsembleParams::new(120, 0.2, 0.1, true).unwrap(),
            tf: TestFunctionSpec::single(ProfileKind::Mollifier, 0.0, 0.8),
            replicas: 150,
            index_policy: IndexPolicy::Fixed { index: 0 },
            master_seed: 7,
            standardization: Standardization::EmpiricalMeanTheoryVar,
            engine: FiiEngine::Eigendecomposition,
            workers: 0,
        }
    }

    #[test]
    fn ks_on_exact_normal_quantiles() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let m = 1000;
        let samples: Vec<f64> = (1..=m)
            .map(|k| normal.inverse_cdf((k as f64 - 0.5) / m as f64))
            .collect();
        let (stat, p) = ks_normal(&samples).unwrap();
        assert!(stat <= 0.001, "stat {stat}");
        assert!(p > 0.99);
    }

    #[test]
    fn ks_on_degenerate_samples() {
        let samples = vec![0.3; 200];
        let (stat, p) = ks_normal(&samples).unwrap();
        assert!(stat >= 0.5, "stat {stat}");
        assert!(p < 1e-10);
    }

    #[test]
    fn ks_uniform_samples_rejected() {
        // uniform (0,1) quantile grid vs normal: sup distance ≈ 0.5 at 0⁺
        let m = 10_000;
        let samples: Vec<f64> = (1..=m).map(|k| (k as f64 - 0.5) / m as f64).collect();
        // oracle CDF distance: max |x - Φ(x)| over [0,1] at x→0⁺ is Φ(0)=0.5
        let (stat, p) = ks_normal(&samples).unwrap();
        assert!(stat > 0.45, "stat {stat}");
        assert!(p < 1e-6);
    }

    #[test]
    fn kolmogorov_pvalue_reference_points() {
        // the two branch formulas agree at the switch point
        let a = kolmogorov_pvalue(0.75499);
        let b = kolmogorov_pvalue(0.75501);
        assert!((a - b).abs() < 5e-4, "{a} vs {b}");
        // median of the Kolmogorov law
        let mid = kolmogorov_pvalue(0.82757);
        assert!((mid - 0.5).abs() < 1e-3, "median {mid}");
        // classical critical values
        assert!((kolmogorov_pvalue(1.358) - 0.05).abs() < 2e-3);
        assert!((kolmogorov_pvalue(1.628) - 0.01).abs() < 1e-3);
        assert!(kolmogorov_pvalue(0.1) == 1.0);
        assert!(kolmogorov_pvalue(7.0) == 0.0);
    }

    #[test]
    fn bootstrap_properties() {
        // constant samples → zero-width interval at the constant
        let constant = vec![2.5; 300];
        let ci = bootstrap_ci(&constant, mean, 500, 1).unwrap();
        assert_eq!(ci, (2.5, 2.5));

        // normal quantile grid: CI width close to 2·1.96/sqrt(M)
        let normal = Normal::new(0.0, 1.0).unwrap();
        let m = 10_000;
        let samples: Vec<f64> = (1..=m)
            .map(|k| normal.inverse_cdf((k as f64 - 0.5) / m as f64))
            .collect();
        let (lo, hi) = bootstrap_ci(&samples, mean, 1000, 99).unwrap();
        let width = hi - lo;
        let theory = 2.0 * 1.96 / (m as f64).sqrt();
        assert!(
            (width / theory - 1.0).abs() < 0.3,
            "width {width:.5} vs theory {theory:.5}"
        );
        // contains the point estimate
        let point = mean(&samples);
        assert!(lo <= point && point <= hi);
        // deterministic in the seed
        let again = bootstrap_ci(&samples, mean, 1000, 99).unwrap();
        assert_eq!((lo, hi), again);
    }

    #[test]
    fn run_clt_smoke_and_determinism() {
        let cfg = quick_config();
        let a = run_clt(&cfg).unwrap();
        let b = run_clt(&cfg).unwrap();
        assert_eq!(a.samples, b.samples, "bit-identical replicas");
        assert_eq!(a.ks_stat.to_bits(), b.ks_stat.to_bits());
        assert!(a.ks_stat > 0.0 && a.ks_stat < 1.0);
        assert!(a.ci_mean.0 <= a.emp_mean && a.emp_mean <= a.ci_mean.1);
        assert!(a.var_ratio.is_finite());
        // worker count must not change results
        let mut cfg2 = cfg.clone();
        cfg2.workers = 2;
        let c = run_clt(&cfg2).unwrap();
        assert_eq!(a.samples, c.samples);
    }

    #[test]
    fn run_clt_rejects_zero_variance() {
        let mut cfg = quick_config();
        // zero-weight bump → theory variance identically zero
        cfg.tf.bumps[0].weight = 0.0;
        let err = run_clt(&cfg).unwrap_err();
        assert!(
            err.to_string().contains("zero"),
            "unexpected error: {err}"
        );
    }

    #[test]
    fn engines_agree() {
        let mut cfg = quick_config();
        cfg.replicas = 100;
        let dense = run_clt(&cfg).unwrap();
        cfg.engine = FiiEngine::LanczosQuadrature {
            tol: 1e-10,
            max_steps: 512,
            reorth: true,
        };
        let fast = run_clt(&cfg).unwrap();
        for (a, b) in dense.samples.iter().zip(&fast.samples) {
            assert!((a - b).abs() <= 1e-8 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn sweep_theory_only() {
        let mut cfg = quick_config();
        cfg.replicas = 0;
        let grid = [0.05, 0.1, 0.2, 0.4, 0.8];
        let sweep = phase_sweep(&cfg, &grid).unwrap();
        assert_eq!(sweep.rows.len(), 5);
        for row in &sweep.rows {
            assert!(row.error.is_none(), "row error: {:?}", row.error);
            assert!(row.gauss_term > 0.0 && row.c4_term > 0.0);
            assert!(row.emp_var.is_none());
        }
        // rows sorted ascending
        for w in sweep.rows.windows(2) {
            assert!(w[0].eta_star < w[1].eta_star);
        }
        // crossing bracketed by a sign change when present
        if let Some(c) = sweep.crossing_estimate {
            assert!(c >= grid[0] && c <= grid[4]);
        }
    }

    #[test]
    fn sweep_continues_past_bad_rows() {
        let mut cfg = quick_config();
        cfg.replicas = 0;
        // the largest eta pushes the bump support outside the window
        let grid = [0.2, 0.4, 5.0];
        let sweep = phase_sweep(&cfg, &grid).unwrap();
        assert_eq!(sweep.rows.len(), 3);
        assert!(sweep.rows[2].error.is_some());
        assert!(sweep.rows[0].error.is_none());
    }

    #[test]
    fn index_policies_statistically_indistinguishable() {
        let mut base = quick_config();
        base.params = EnsembleParams::new(200, 0.15, 0.1, true).unwrap();
        base.tf = TestFunctionSpec::single(ProfileKind::Mollifier, 0.0, 0.6);
        base.replicas = 600;
        base.engine = FiiEngine::LanczosQuadrature {
            tol: 1e-10,
            max_steps: 512,
            reorth: true,
        };
        let fixed = run_clt(&base).unwrap();
        let mut random = base.clone();
        random.index_policy = IndexPolicy::RandomPerReplica;
        random.master_seed = base.master_seed + 1;
        let rnd = run_clt(&random).unwrap();
        let (_, p) = ks_two_sample(&fixed.samples, &rnd.samples).unwrap();
        assert!(p > 0.01, "two-sample KS p = {p}");
    }
}
