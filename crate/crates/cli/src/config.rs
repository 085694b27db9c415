//! Configuration file schema. One TOML document with sections
//! `[ensemble]`, `[testfunction]`, `[experiment]`, `[quadrature]`,
//! `[output]`. Unknown keys are hard errors: a silent typo in an
//! experiment definition is worse than a loud one.

use rmtlab_core::ensemble::EnsembleParams;
use rmtlab_core::hsquad::QuadParams;
use rmtlab_core::mcstats::{ExperimentConfig, FiiEngine, IndexPolicy, Standardization};
use rmtlab_core::testfunc::TestFunctionSpec;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub ensemble: EnsembleSection,
    pub testfunction: TestFunctionSpec,
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub quadrature: Option<QuadSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub n: usize,
    pub p: f64,
    /// regime parameter; defaults to 0.1
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Bernoulli self-loops on the diagonal (default true, which makes the
    /// rank-one mean split exact)
    #[serde(default = "default_true")]
    pub include_diagonal: bool,
}

fn default_tau() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// Monte Carlo replicas; 0 means theory-only where supported.
    pub replicas: usize,
    pub master_seed: u64,
    #[serde(default = "default_index_policy")]
    pub index_policy: IndexPolicy,
    #[serde(default)]
    pub standardization: Standardization,
    #[serde(default)]
    pub engine: FiiEngine,
    /// 0 = one worker per core.
    #[serde(default)]
    pub workers: usize,
    /// Scale grid for the sweep command.
    #[serde(default)]
    pub eta_grid: Vec<f64>,
    /// Spectral-domain grid for the laws command, pairs (re, im).
    #[serde(default)]
    pub law_grid: Vec<[f64; 2]>,
    /// Replicas for the laws command (defaults to `replicas`).
    #[serde(default)]
    pub law_replicas: Option<usize>,
}

fn default_index_policy() -> IndexPolicy {
    IndexPolicy::Fixed { index: 0 }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSection {
    /// Axis-exclusion exponent; defaults to tau/100.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_refinement")]
    pub max_refinement: usize,
}

fn default_tol() -> f64 {
    1e-7
}

fn default_refinement() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Defaults to $RMTLAB_OUT or ./rmtlab-out.
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    #[default]
    Both,
}

impl Format {
    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let config: Config = toml::from_str(&text)
            .map_err(|e| ConfigError(format!("config error in {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        EnsembleParams::new(
            self.ensemble.n,
            self.ensemble.p,
            self.ensemble.tau,
            self.ensemble.include_diagonal,
        )
        .map_err(|e| ConfigError(format!("[ensemble]: {e}")))?;
        if self.testfunction.bumps.is_empty() {
            return Err(ConfigError("[testfunction]: needs at least one bump".into()));
        }
        if let Some(q) = &self.quadrature {
            self.quad_params().map_err(|e| ConfigError(format!("[quadrature]: {e}")))?;
            if q.tol <= 0.0 {
                return Err(ConfigError("[quadrature]: tol must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn ensemble_params(&self) -> EnsembleParams {
        EnsembleParams::new(
            self.ensemble.n,
            self.ensemble.p,
            self.ensemble.tau,
            self.ensemble.include_diagonal,
        )
        .expect("validated at load time")
    }

    pub fn quad_params(&self) -> Result<QuadParams, rmtlab_core::Error> {
        let qp = match &self.quadrature {
            Some(q) => QuadParams {
                alpha: q.alpha.unwrap_or(self.ensemble.tau / 100.0),
                tol: q.tol,
                max_refinement: q.max_refinement,
            },
            None => QuadParams::for_tau(self.ensemble.tau),
        };
        qp.validate()?;
        Ok(qp)
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            params: self.ensemble_params(),
            tf: self.testfunction.clone(),
            replicas: self.experiment.replicas,
            index_policy: self.experiment.index_policy,
            master_seed: self.experiment.master_seed,
            standardization: self.experiment.standardization,
            engine: self.experiment.engine,
            workers: self.experiment.workers,
        }
    }
}
