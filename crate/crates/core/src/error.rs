use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "sparsity parameter q = {q:.6} outside the admissible window [{lo:.6}, {hi:.6}] \
         (n = {n}, p = {p}, tau = {tau})"
    )]
    SparsityWindow {
        q: f64,
        lo: f64,
        hi: f64,
        n: usize,
        p: f64,
        tau: f64,
    },

    #[error("test function violates the support condition: {0}")]
    SupportCondition(String),

    #[error("quadrature did not converge: requested tol {requested:.3e}, achieved {achieved:.3e}")]
    QuadratureNonConvergence { requested: f64, achieved: f64 },

    #[error("eigensolver failed (LAPACK info = {info}) for sample seed ({master}, {replica})")]
    EigensolverFailure { info: i32, master: u64, replica: u64 },

    #[error("variance kernel integral has a non-negligible imaginary part: |Im| = {imag:.3e} vs |Re| = {real:.3e}")]
    KernelImaginaryResidual { imag: f64, real: f64 },

    #[error("theoretical variance is zero; cannot standardize a degenerate statistic")]
    ZeroVariance,

    #[error(
        "theoretical variance is negative (gauss = {gauss:.3e}, c4 = {c4:.3e}); \
         configuration lies outside the verified regime"
    )]
    NegativeVariance { gauss: f64, c4: f64 },

    #[error("{0}")]
    InvalidInput(String),
}
