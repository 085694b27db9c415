//! Smooth compactly supported test functions.
//!
//! A test function is a weighted sum of bumps `w · F((x - E)/η)` built from
//! one of the profile families below. Derivatives up to order three are
//! closed-form rational–exponential expressions (no finite differences), so
//! they stay accurate near the support edge where the profiles flatten out.
//!
//! The quasi-analytic extension of `f` used by the resolvent machinery is
//! `f̃(x + iy) = χ(y/η)(f(x) + iy f'(x))` with the fixed cutoff `χ` below;
//! [`dbar_extension`] evaluates its antiholomorphic derivative.

use crate::ensemble::EnsembleParams;
use crate::error::{Error, Result};
use crate::quad;
use serde::{Deserialize, Serialize};

/// `exp(1/(u²-1))` on (-1, 1), extended by zero. The usual mollifier bump.
///
/// Below this margin in `1 - u²` the bump underflows; treat it as zero so
/// the rational prefactors of the derivatives never meet an`exp` underflow.
const MOLLIFIER_EDGE: f64 = 1.4e-3;

/// Profile families. All are even, C^∞, supported on [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileKind {
    /// `exp(1/(u²-1))`.
    Mollifier,
    /// 1 on [-core, core], C^∞ smoothstep transition to 0 at |u| = 1.
    Plateau { core: f64 },
}

impl ProfileKind {
    /// F^{(order)}(u), order ≤ 3.
    pub fn eval(&self, u: f64, order: usize) -> f64 {
        debug_assert!(order <= 3);
        match *self {
            ProfileKind::Mollifier => mollifier(u, order),
            ProfileKind::Plateau { core } => plateau(u, core, order),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ProfileKind::Plateau { core } = *self {
            if !(core > 0.0 && core < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "plateau core must lie in (0,1), got {core}"
                )));
            }
        }
        Ok(())
    }
}

fn mollifier(u: f64, order: usize) -> f64 {
    let s = u * u - 1.0;
    if s >= -MOLLIFIER_EDGE {
        return 0.0;
    }
    let f = (1.0 / s).exp();
    match order {
        0 => f,
        _ => {
            let s2 = s * s;
            let p1 = -2.0 * u / s2; // φ'
            match order {
                1 => p1 * f,
                2 => {
                    let p2 = (6.0 * u * u + 2.0) / (s2 * s); // φ''
                    (p2 + p1 * p1) * f
                }
                3 => {
                    let p2 = (6.0 * u * u + 2.0) / (s2 * s);
                    let p3 = -24.0 * u * (u * u + 1.0) / (s2 * s2); // φ'''
                    (p3 + 3.0 * p1 * p2 + p1 * p1 * p1) * f
                }
                _ => unreachable!(),
            }
        }
    }
}

/// C^∞ step on (0, 1): 0 at t = 0, 1 at t = 1, via 1/(1 + e^{1/t - 1/(1-t)}).
/// Returns (s, s', s'', s''').
fn smoothstep(t: f64) -> (f64, f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0, 0.0, 0.0);
    }
    let g = 1.0 / t - 1.0 / (1.0 - t);
    let e = g.exp();
    if !e.is_finite() {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let s = 1.0 / (1.0 + e);
    let t2 = t * t;
    let r2 = (1.0 - t) * (1.0 - t);
    let g1 = -1.0 / t2 - 1.0 / r2;
    let g2 = 2.0 / (t2 * t) - 2.0 / (r2 * (1.0 - t));
    let g3 = -6.0 / (t2 * t2) - 6.0 / (r2 * r2);
    let u = s * (1.0 - s);
    let s1 = -u * g1;
    let u1 = s1 * (1.0 - 2.0 * s);
    let s2 = -(u1 * g1 + u * g2);
    let u2 = s2 * (1.0 - 2.0 * s) - 2.0 * s1 * s1;
    let s3 = -(u2 * g1 + 2.0 * u1 * g2 + u * g3);
    (s, s1, s2, s3)
}

fn plateau(u: f64, core: f64, order: usize) -> f64 {
    let a = u.abs();
    if a >= 1.0 {
        return 0.0;
    }
    if a <= core {
        return if order == 0 { 1.0 } else { 0.0 };
    }
    let width = 1.0 - core;
    let t = (1.0 - a) / width;
    let (s0, s1, s2, s3) = smoothstep(t);
    let d = -u.signum() / width; // dt/du
    match order {
        0 => s0,
        1 => s1 * d,
        2 => s2 * d * d,
        3 => s3 * d * d * d,
        _ => unreachable!(),
    }
}

/// One scaled bump `weight · F((x - center)/(eta_star · halfwidth))`.
///
/// `halfwidth` (in F-units, default 1) narrows the bump relative to its
/// nominal scale `eta_star`; the support is `center ± eta_star·halfwidth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub weight: f64,
    pub profile: ProfileKind,
    pub center: f64,
    pub eta_star: f64,
    #[serde(default = "default_halfwidth")]
    pub halfwidth: f64,
}

fn default_halfwidth() -> f64 {
    1.0
}

impl Bump {
    pub fn plain(weight: f64, profile: ProfileKind, center: f64, eta_star: f64) -> Self {
        Self {
            weight,
            profile,
            center,
            eta_star,
            halfwidth: 1.0,
        }
    }

    /// The scale the bump actually lives on.
    #[inline]
    pub fn width(&self) -> f64 {
        self.eta_star * self.halfwidth
    }

    fn eval(&self, x: f64, order: usize) -> f64 {
        let w = self.width();
        let u = (x - self.center) / w;
        self.weight * self.profile.eval(u, order) / w.powi(order as i32)
    }

    /// Support interval in x.
    pub fn support(&self) -> (f64, f64) {
        (self.center - self.width(), self.center + self.width())
    }
}

/// A test function: finite superposition of bumps.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    bumps: Vec<Bump>,
}

impl TestFunction {
    pub fn new(bumps: Vec<Bump>) -> Result<Self> {
        if bumps.is_empty() {
            return Err(Error::InvalidParameter(
                "test function needs at least one bump".into(),
            ));
        }
        for b in &bumps {
            b.profile.validate()?;
            if !(b.eta_star > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "eta_star must be positive, got {}",
                    b.eta_star
                )));
            }
            if !(b.halfwidth > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "halfwidth must be positive, got {}",
                    b.halfwidth
                )));
            }
        }
        Ok(Self { bumps })
    }

    /// Single bump.
    pub fn bump(profile: ProfileKind, center: f64, eta_star: f64) -> Result<Self> {
        Self::new(vec![Bump::plain(1.0, profile, center, eta_star)])
    }

    /// a·f + b·g.
    pub fn superpose(a: f64, f: &TestFunction, b: f64, g: &TestFunction) -> Self {
        let mut bumps = Vec::with_capacity(f.bumps.len() + g.bumps.len());
        for t in &f.bumps {
            bumps.push(Bump {
                weight: a * t.weight,
                ..*t
            });
        }
        for t in &g.bumps {
            bumps.push(Bump {
                weight: b * t.weight,
                ..*t
            });
        }
        Self { bumps }
    }

    pub fn bumps(&self) -> &[Bump] {
        &self.bumps
    }

    pub fn bumps_mut(&mut self) -> &mut [Bump] {
        &mut self.bumps
    }

    /// f^{(order)}(x) by exact chain-rule scaling, order ≤ 3.
    pub fn eval(&self, x: f64, order: usize) -> f64 {
        assert!(order <= 3, "derivatives supported up to order 3");
        self.bumps.iter().map(|b| b.eval(x, order)).sum()
    }

    /// Convex hull of the bump supports.
    pub fn support(&self) -> (f64, f64) {
        let lo = self
            .bumps
            .iter()
            .map(|b| b.support().0)
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .bumps
            .iter()
            .map(|b| b.support().1)
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Largest effective bump width; the extension vanishes for
    /// |y| ≥ 2·max_eta.
    pub fn max_eta(&self) -> f64 {
        self.bumps.iter().map(|b| b.width()).fold(0.0, f64::max)
    }

    pub fn min_eta(&self) -> f64 {
        self.bumps
            .iter()
            .map(|b| b.width())
            .fold(f64::INFINITY, f64::min)
    }

    /// Rescale every bump by `eta / eta_ref` where `eta_ref` is the scale of
    /// the first bump; relative scales between bumps are preserved.
    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        let eta_ref = self.bumps[0].eta_star;
        let factor = eta / eta_ref;
        if !(factor > 0.0) {
            return Err(Error::InvalidParameter(format!("bad eta {eta}")));
        }
        let bumps = self
            .bumps
            .iter()
            .map(|b| Bump {
                eta_star: b.eta_star * factor,
                ..*b
            })
            .collect();
        Ok(Self { bumps })
    }

    /// Check the experiment-binding constraints: every bump support inside
    /// `(-2 + tau, 2 - tau)` and every scale at least `N^{tau - 1}`.
    pub fn validate_for(&self, params: &EnsembleParams) -> Result<()> {
        let tau = params.tau();
        let eta_min_allowed = (params.n() as f64).powf(tau - 1.0);
        for b in &self.bumps {
            let (lo, hi) = b.support();
            if lo <= -2.0 + tau || hi >= 2.0 - tau {
                return Err(Error::SupportCondition(format!(
                    "bump support [{lo:.4}, {hi:.4}] not inside ({:.4}, {:.4})",
                    -2.0 + tau,
                    2.0 - tau
                )));
            }
            if b.width() < eta_min_allowed {
                return Err(Error::SupportCondition(format!(
                    "bump width {:.3e} below the admissible scale {:.3e}",
                    b.width(),
                    eta_min_allowed
                )));
            }
        }
        Ok(())
    }

    /// L1 norms (‖f‖₁, ‖f'‖₁, ‖f''‖₁) over the support by adaptive
    /// quadrature bracketed at the bump edges.
    pub fn l1_norms(&self) -> Result<(f64, f64, f64)> {
        let (lo, hi) = self.support();
        let eta = self.min_eta();
        let mut breaks = Vec::with_capacity(3 * self.bumps.len());
        for b in &self.bumps {
            let (blo, bhi) = b.support();
            breaks.extend([blo, b.center, bhi]);
        }
        let mut out = [0.0f64; 3];
        for (order, slot) in out.iter_mut().enumerate() {
            // ‖f^{(k)}‖₁ scales like eta^{1-k}; keep the tolerance relative
            let tol = 1e-11 * eta.powi(1 - order as i32).max(1e-6);
            let mut f = |x: f64| self.eval(x, order).abs();
            let (v, _) = quad::integrate_with_breaks(&mut f, lo, hi, &breaks, tol, 44)?;
            *slot = v;
        }
        Ok((out[0], out[1], out[2]))
    }
}

/// The fixed vertical cutoff: 1 on |y| ≤ 1, 0 on |y| ≥ 2, C^∞ smoothstep
/// transition in between. The Gaussian limit does not depend on the choice,
/// so one documented profile is enough.
#[derive(Debug, Clone, Copy, Default)]
pub struct CutoffProfile;

impl CutoffProfile {
    pub fn chi(&self, y: f64) -> f64 {
        let a = y.abs();
        if a <= 1.0 {
            1.0
        } else if a >= 2.0 {
            0.0
        } else {
            smoothstep(2.0 - a).0
        }
    }

    pub fn chi_prime(&self, y: f64) -> f64 {
        let a = y.abs();
        if a <= 1.0 || a >= 2.0 {
            0.0
        } else {
            -y.signum() * smoothstep(2.0 - a).1
        }
    }
}

/// ∂_z̄ of the quasi-analytic extension, evaluated bump-by-bump so each bump
/// carries its own vertical scale:
///
/// `(1/2) [ i y χ(y/η) f''(x) + (i/η)(f(x) + i y f'(x)) χ'(y/η) ]`.
///
/// Vanishes identically for |y| ≥ 2η and outside the support of f.
pub fn dbar_extension(tf: &TestFunction, cp: &CutoffProfile, z: num_complex::Complex64) -> num_complex::Complex64 {
    let (x, y) = (z.re, z.im);
    let mut re = 0.0;
    let mut im = 0.0;
    for b in tf.bumps() {
        let eta = b.width();
        let yr = y / eta;
        if yr.abs() >= 2.0 {
            continue;
        }
        let chi = cp.chi(yr);
        let chi_p = cp.chi_prime(yr);
        if chi == 0.0 && chi_p == 0.0 {
            continue;
        }
        let f0 = b.eval(x, 0);
        let f1 = b.eval(x, 1);
        let f2 = b.eval(x, 2);
        // (i/2)·[ y χ f'' + (f + i y f')(χ'/η) ]
        //   real part: -(1/2)·y f' χ'/η
        //   imag part:  (1/2)·( y χ f'' + f χ'/η )
        re += -0.5 * y * f1 * chi_p / eta;
        im += 0.5 * (y * chi * f2 + f0 * chi_p / eta);
    }
    num_complex::Complex64::new(re, im)
}

/// Serializable description of a test function, used by configs and sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionSpec {
    pub bumps: Vec<Bump>,
    #[serde(default)]
    pub calibration: Calibration,
}

/// Optional weight calibration applied to the *last* bump when the spec is
/// built (see `semicircle::build_test_function`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    #[default]
    None,
    /// make ∫ f ρ_sc = 0
    ZeroMean,
    /// make ∫ f (1 - x²) ρ_sc = 0
    ZeroC4Weight,
}

impl TestFunctionSpec {
    pub fn single(profile: ProfileKind, center: f64, eta_star: f64) -> Self {
        Self {
            bumps: vec![Bump::plain(1.0, profile, center, eta_star)],
            calibration: Calibration::None,
        }
    }

    /// The same spec with the common scale replaced (relative scales kept).
    pub fn at_eta(&self, eta: f64) -> Self {
        let eta_ref = self.bumps[0].eta_star;
        let factor = eta / eta_ref;
        Self {
            bumps: self
                .bumps
                .iter()
                .map(|b| Bump {
                    eta_star: b.eta_star * factor,
                    ..*b
                })
                .collect(),
            calibration: self.calibration,
        }
    }

    /// Build without calibration.
    pub fn build_raw(&self) -> Result<TestFunction> {
        TestFunction::new(self.bumps.clone())
    }
}
