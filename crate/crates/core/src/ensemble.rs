//! Sparse Erdős–Rényi matrix ensemble.
//!
//! `sample_er` draws the normalized adjacency matrix `A = 𝒜 / sqrt(p(1-p)N)`
//! with i.i.d. Bernoulli(p) upper-triangle entries, symmetrized. Subtracting
//! the rank-one mean `f_shift · ee*` (with `e = (1,…,1)/sqrt(N)`) yields the
//! centered matrix `H`, whose off-diagonal entries are centered, rescaled
//! Bernoulli variables with second moment exactly `1/N`.
//!
//! The entry-cumulant machinery is generic over any two-point law so that
//! variants of the Bernoulli ensemble can reuse it.

use crate::error::{Error, Result};
use crate::rng::{self, LANE_MATRIX};
use serde::{Deserialize, Serialize};

/// Parameters of the ensemble.
///
/// `q = sqrt(N p)` must lie in the window `[N^{tau/2}, N^{1/2 - tau/2}]`;
/// the strict constructor rejects anything else.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    n: usize,
    p: f64,
    tau: f64,
    include_diagonal: bool,
}

impl EnsembleParams {
    pub fn new(n: usize, p: f64, tau: f64, include_diagonal: bool) -> Result<Self> {
        let params = Self::new_unchecked(n, p, tau, include_diagonal)?;
        let q = params.q();
        let (lo, hi) = params.q_window();
        if !(q >= lo && q <= hi) {
            return Err(Error::SparsityWindow { q, lo, hi, n, p, tau });
        }
        Ok(params)
    }

    /// Validates only `n`, `p` and `tau`, skipping the sparsity window.
    /// Intended for degenerate identity tests (tiny N) that the window
    /// excludes; all production paths use [`EnsembleParams::new`].
    pub fn new_unchecked(n: usize, p: f64, tau: f64, include_diagonal: bool) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "matrix dimension must be at least 2, got {n}"
            )));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "p must lie in (0,1), got {p}"
            )));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tau must lie in (0,1), got {tau}"
            )));
        }
        Ok(Self {
            n,
            p,
            tau,
            include_diagonal,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn include_diagonal(&self) -> bool {
        self.include_diagonal
    }

    /// Sparsity parameter `q = sqrt(N p)`.
    pub fn q(&self) -> f64 {
        (self.n as f64 * self.p).sqrt()
    }

    /// Admissible window for `q`.
    pub fn q_window(&self) -> (f64, f64) {
        let n = self.n as f64;
        (n.powf(self.tau / 2.0), n.powf(0.5 - self.tau / 2.0))
    }

    /// Magnitude of the rank-one mean component, `sqrt(N p / (1-p))`.
    /// Comparable to `q`: the ratio is `1/sqrt(1-p) ∈ [1, ∞)`.
    pub fn f_shift(&self) -> f64 {
        (self.n as f64 * self.p / (1.0 - self.p)).sqrt()
    }

    /// Normalization of a single entry, `s = 1/sqrt(p(1-p)N)`.
    pub fn entry_scale(&self) -> f64 {
        1.0 / (self.p * (1.0 - self.p) * self.n as f64).sqrt()
    }

    /// The centered two-point law of an off-diagonal entry of `H`.
    pub fn entry_law(&self) -> TwoPointLaw {
        TwoPointLaw::centered_bernoulli(self.p, self.entry_scale())
    }
}

/// Seed pair identifying one replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedInfo {
    pub master: u64,
    pub replica: u64,
}

/// One sampled matrix, stored dense row-major. Exactly symmetric by
/// construction; every entry is either `0` or `entry_scale`.
#[derive(Debug, Clone)]
pub struct MatrixSample {
    n: usize,
    entries: Vec<f64>,
    seed: SeedInfo,
}

impl MatrixSample {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed_info(&self) -> SeedInfo {
        self.seed
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Mutable access for perturbation experiments (finite differences).
    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn from_entries(n: usize, entries: Vec<f64>, seed: SeedInfo) -> Self {
        assert_eq!(entries.len(), n * n);
        Self { n, entries, seed }
    }
}

/// Draw one normalized adjacency matrix. Deterministic in `(params, seed)`:
/// entry (i, j), i ≤ j, is decided by the counter function at counter
/// `i * n + j` on the replica's matrix lane, so the result does not depend
/// on evaluation order or thread scheduling.
pub fn sample_er(params: &EnsembleParams, seed: SeedInfo) -> MatrixSample {
    let n = params.n;
    let p = params.p;
    let s = params.entry_scale();
    let stream = rng::stream_for(LANE_MATRIX, seed.replica);
    let mut entries = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i..n {
            if i == j && !params.include_diagonal {
                continue;
            }
            let u = rng::prf_u01(seed.master, stream, (i * n + j) as u64);
            if u < p {
                entries[i * n + j] = s;
                entries[j * n + i] = s;
            }
        }
    }
    MatrixSample { n, entries, seed }
}

/// Split `A = H + f_shift · ee*`. The returned `H` has exactly centered
/// entries when the diagonal is sampled (`include_diagonal = true`); with a
/// zero diagonal the diagonal of `H` keeps a deterministic `-f_shift/N`
/// offset and the split is only approximately mean-zero.
pub fn decompose(sample: &MatrixSample, params: &EnsembleParams) -> Result<(Vec<f64>, f64)> {
    let n = sample.n();
    if n != params.n {
        return Err(Error::InvalidInput(format!(
            "sample dimension {} does not match params dimension {}",
            n, params.n
        )));
    }
    let f_shift = params.f_shift();
    let shift = f_shift / n as f64; // f_shift * (ee*)_ij with (ee*)_ij = 1/N
    let mut h = sample.entries.clone();
    for v in h.iter_mut() {
        *v -= shift;
    }
    Ok((h, f_shift))
}

/// A law taking value `lo` with probability `1 - p_hi` and `hi` with
/// probability `p_hi`. Moments and cumulants are exact rational-in-f64
/// expressions, no sampling involved.
#[derive(Debug, Clone, Copy)]
pub struct TwoPointLaw {
    pub lo: f64,
    pub hi: f64,
    pub p_hi: f64,
}

impl TwoPointLaw {
    /// The law of `(χ_p - p) * scale` for `χ_p ~ Bernoulli(p)`.
    pub fn centered_bernoulli(p: f64, scale: f64) -> Self {
        Self {
            lo: -p * scale,
            hi: (1.0 - p) * scale,
            p_hi: p,
        }
    }

    /// E[g(h)] for arbitrary g — a two-term sum.
    pub fn expect(&self, g: impl Fn(f64) -> f64) -> f64 {
        (1.0 - self.p_hi) * g(self.lo) + self.p_hi * g(self.hi)
    }

    /// Raw moment E[h^r].
    pub fn moment(&self, r: u32) -> f64 {
        self.expect(|x| x.powi(r as i32))
    }

    /// Cumulants of orders 1..=max_order via the moment-to-cumulant
    /// recursion  m_n = Σ_{j=1}^{n} C(n-1, j-1) κ_j m_{n-j}.
    pub fn cumulants(&self, max_order: usize) -> Vec<f64> {
        let moments: Vec<f64> = (0..=max_order).map(|r| self.moment(r as u32)).collect();
        let mut kappa = vec![0.0f64; max_order + 1];
        for n in 1..=max_order {
            let mut acc = moments[n];
            for j in 1..n {
                acc -= binomial(n - 1, j - 1) * kappa[j] * moments[n - j];
            }
            kappa[n] = acc;
        }
        kappa.remove(0);
        kappa
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Exact cumulants of an off-diagonal entry of `H`.
#[derive(Debug, Clone)]
pub struct EntryCumulants {
    /// `values[r - 1]` is the cumulant of order `r`, r = 1..=max_order.
    pub values: Vec<f64>,
}

impl EntryCumulants {
    pub fn order(&self, r: usize) -> f64 {
        self.values[r - 1]
    }
}

/// Cumulants of the centered entry law up to `max_order` (≤ 8).
pub fn entry_cumulants(params: &EnsembleParams, max_order: usize) -> EntryCumulants {
    assert!(
        (1..=8).contains(&max_order),
        "cumulant order must be in 1..=8"
    );
    EntryCumulants {
        values: params.entry_law().cumulants(max_order),
    }
}

/// The coefficient `N · C₄(H₁₂) = (1 - 6p + 6p²) / (N p (1-p))` entering the
/// fourth-cumulant variance term; approximately `1/(Np) = 1/q²` for small p.
pub fn c4_coefficient(params: &EnsembleParams) -> f64 {
    let p = params.p;
    let n = params.n as f64;
    (1.0 - 6.0 * p + 6.0 * p * p) / (n * p * (1.0 - p))
}
