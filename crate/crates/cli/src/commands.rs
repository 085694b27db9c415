//! Implementations of the CLI subcommands on top of the core library.

use crate::config::{Config, Format};
use crate::output::{csv_escape, fmt_f64, CsvTable, Emitter};
use num_complex::Complex64;
use rmtlab_core::ensemble::{sample_er, SeedInfo};
use rmtlab_core::mcstats::{phase_sweep, run_clt, CltResult, SweepResult};
use rmtlab_core::semicircle::{
    build_test_function, variance_formula, variance_kernel_integral, KernelIntegral,
    VarianceBreakdown,
};
use rmtlab_core::spectral::{eigendecompose, law_diagnostics, LawRow};
use serde::Serialize;

pub fn effective_seed(config: &Config, seed_override: Option<u64>) -> u64 {
    seed_override.unwrap_or(config.experiment.master_seed)
}

fn apply_overrides(config: &mut Config, seed: Option<u64>, workers: Option<usize>) {
    if let Some(s) = seed {
        config.experiment.master_seed = s;
    }
    if let Some(w) = workers {
        config.experiment.workers = w;
    }
}

#[derive(Serialize)]
struct VarianceDoc {
    schema: &'static str,
    n: usize,
    p: f64,
    tau: f64,
    breakdown: VarianceBreakdown,
    kernel: KernelIntegral,
    /// |kernel.total - breakdown.total| / |breakdown.total|
    rel_gap: f64,
}

pub fn cmd_variance(
    mut config: Config,
    emitter: &mut Emitter,
    seed: Option<u64>,
    workers: Option<usize>,
) -> Result<(), rmtlab_core::Error> {
    apply_overrides(&mut config, seed, workers);
    let params = config.ensemble_params();
    let tf = build_test_function(&config.testfunction)?;
    tf.validate_for(&params)?;
    let breakdown = variance_formula(&tf, &params)?;
    let qp = config.quad_params()?;
    let kernel = variance_kernel_integral(&tf, &params, &qp)?;
    let doc = VarianceDoc {
        schema: "rmtlab.variance.v1",
        n: params.n(),
        p: params.p(),
        tau: params.tau(),
        breakdown,
        kernel,
        rel_gap: (kernel.total - breakdown.total).abs() / breakdown.total.abs().max(1e-300),
    };
    emitter
        .write_json("variance.json", &doc)
        .map_err(rmtlab_core::Error::InvalidInput)?;
    Ok(())
}

#[derive(Serialize)]
struct CltDoc<'a> {
    schema: &'static str,
    config_echo: &'a crate::config::ExperimentSection,
    n: usize,
    p: f64,
    #[serde(flatten)]
    result: &'a CltResult,
}

pub fn cmd_clt(
    mut config: Config,
    emitter: &mut Emitter,
    seed: Option<u64>,
    workers: Option<usize>,
    format: Format,
) -> Result<(), rmtlab_core::Error> {
    apply_overrides(&mut config, seed, workers);
    let cfg = config.experiment_config();
    let result = run_clt(&cfg)?;
    if format.json() {
        let doc = CltDoc {
            schema: "rmtlab.clt.v1",
            config_echo: &config.experiment,
            n: cfg.params.n(),
            p: cfg.params.p(),
            result: &result,
        };
        emitter
            .write_json("clt.json", &doc)
            .map_err(rmtlab_core::Error::InvalidInput)?;
    }
    if format.csv() {
        emitter
            .write_csv("clt_hist.csv", &histogram_table(&result))
            .map_err(rmtlab_core::Error::InvalidInput)?;
    }
    Ok(())
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Histogram of standardized samples over fixed bins with the standard
/// normal density as a reference column.
fn histogram_table(result: &CltResult) -> CsvTable {
    let center = result.emp_mean;
    let scale = result.theory.total.sqrt();
    let bins = 60usize;
    let (lo, hi) = (-6.0f64, 6.0f64);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &s in &result.samples {
        let z = (s - center) / scale;
        if z >= lo && z < hi {
            counts[((z - lo) / width) as usize] += 1;
        }
    }
    let rows = (0..bins)
        .map(|b| {
            let a = lo + b as f64 * width;
            let mid = a + width / 2.0;
            vec![
                fmt_f64(a),
                fmt_f64(a + width),
                counts[b].to_string(),
                fmt_f64(normal_pdf(mid)),
            ]
        })
        .collect();
    CsvTable {
        columns: vec!["bin_lo", "bin_hi", "count", "normal_ref_density"],
        rows,
    }
}

pub fn cmd_sweep(
    mut config: Config,
    emitter: &mut Emitter,
    seed: Option<u64>,
    workers: Option<usize>,
    format: Format,
) -> Result<(), rmtlab_core::Error> {
    apply_overrides(&mut config, seed, workers);
    if config.experiment.eta_grid.is_empty() {
        return Err(rmtlab_core::Error::InvalidParameter(
            "[experiment].eta_grid must be set for the sweep command".into(),
        ));
    }
    let cfg = config.experiment_config();
    let sweep = phase_sweep(&cfg, &config.experiment.eta_grid)?;
    if format.csv() {
        emitter
            .write_csv("sweep.csv", &sweep_table(&sweep))
            .map_err(rmtlab_core::Error::InvalidInput)?;
    }
    if format.json() {
        #[derive(Serialize)]
        struct SweepDoc<'a> {
            schema: &'static str,
            #[serde(flatten)]
            sweep: &'a SweepResult,
        }
        emitter
            .write_json(
                "sweep.json",
                &SweepDoc {
                    schema: "rmtlab.sweep.v1",
                    sweep: &sweep,
                },
            )
            .map_err(rmtlab_core::Error::InvalidInput)?;
    }
    Ok(())
}

fn sweep_table(sweep: &SweepResult) -> CsvTable {
    let rows = sweep
        .rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.eta_star),
                fmt_f64(r.gauss_term),
                fmt_f64(r.c4_term),
                r.emp_var.map(fmt_f64).unwrap_or_default(),
                r.var_ratio.map(fmt_f64).unwrap_or_default(),
                r.ks_pvalue.map(fmt_f64).unwrap_or_default(),
                csv_escape(r.error.as_deref().unwrap_or("")),
            ]
        })
        .collect();
    CsvTable {
        columns: vec![
            "eta_star",
            "gauss_term",
            "c4_term",
            "emp_var",
            "var_ratio",
            "ks_pvalue",
            "error",
        ],
        rows,
    }
}

pub fn cmd_laws(
    mut config: Config,
    emitter: &mut Emitter,
    seed: Option<u64>,
    workers: Option<usize>,
) -> Result<(), rmtlab_core::Error> {
    apply_overrides(&mut config, seed, workers);
    if config.experiment.law_grid.is_empty() {
        return Err(rmtlab_core::Error::InvalidParameter(
            "[experiment].law_grid must be set for the laws command".into(),
        ));
    }
    let params = config.ensemble_params();
    let grid: Vec<Complex64> = config
        .experiment
        .law_grid
        .iter()
        .map(|&[re, im]| Complex64::new(re, im))
        .collect();
    let replicas = config
        .experiment
        .law_replicas
        .unwrap_or(config.experiment.replicas)
        .max(1);
    let master = config.experiment.master_seed;

    // per-replica reports, replica-order aggregation
    let mut per_replica: Vec<Vec<LawRow>> = Vec::with_capacity(replicas);
    for r in 0..replicas as u64 {
        let sample = sample_er(&params, SeedInfo { master, replica: r });
        let spec = eigendecompose(&sample)?;
        per_replica.push(law_diagnostics(&spec, &params, &grid)?.rows);
    }

    let median = |mut xs: Vec<f64>| -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len();
        if n % 2 == 1 {
            xs[n / 2]
        } else {
            0.5 * (xs[n / 2 - 1] + xs[n / 2])
        }
    };

    let mut rows = Vec::with_capacity(grid.len());
    for (gi, &z) in grid.iter().enumerate() {
        let collect = |f: &dyn Fn(&LawRow) -> f64| -> Vec<f64> {
            per_replica.iter().map(|rep| f(&rep[gi])).collect()
        };
        let diag: Vec<f64> = collect(&|r| r.max_diag_dev);
        let offdiag = collect(&|r| r.max_offdiag);
        let iso = collect(&|r| r.iso_dev);
        let avg = collect(&|r| r.avg_dev);
        let envelope = per_replica[0][gi].entry_envelope;
        let avg_envelope = per_replica[0][gi].avg_envelope;
        rows.push(vec![
            fmt_f64(z.re),
            fmt_f64(z.im),
            fmt_f64(median(diag.clone())),
            fmt_f64(diag.iter().cloned().fold(0.0, f64::max)),
            fmt_f64(median(offdiag)),
            fmt_f64(median(iso)),
            fmt_f64(median(avg)),
            fmt_f64(envelope),
            fmt_f64(avg_envelope),
        ]);
    }
    emitter
        .write_csv(
            "laws.csv",
            &CsvTable {
                columns: vec![
                    "z_re",
                    "z_im",
                    "diag_dev_median",
                    "diag_dev_max",
                    "offdiag_median",
                    "iso_dev_median",
                    "avg_dev_median",
                    "entry_envelope",
                    "avg_envelope",
                ],
                rows,
            },
        )
        .map_err(rmtlab_core::Error::InvalidInput)?;
    Ok(())
}

/// Text dump of one sampled matrix with a documented header.
pub fn cmd_sample(
    mut config: Config,
    emitter: &mut Emitter,
    seed: Option<u64>,
    replica: u64,
) -> Result<(), rmtlab_core::Error> {
    apply_overrides(&mut config, seed, None);
    let params = config.ensemble_params();
    let master = config.experiment.master_seed;
    let sample = sample_er(&params, SeedInfo { master, replica });
    let n = params.n();
    let mut text = String::new();
    text.push_str("# rmtlab matrix dump v1\n");
    text.push_str(&format!(
        "# n={} p={} tau={} include_diagonal={} master_seed={} replica={}\n",
        n,
        fmt_f64(params.p()),
        fmt_f64(params.tau()),
        params.include_diagonal(),
        master,
        replica
    ));
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| fmt_f64(sample.get(i, j))).collect();
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    emitter
        .write_text("sample.txt", &text)
        .map_err(rmtlab_core::Error::InvalidInput)?;
    Ok(())
}
