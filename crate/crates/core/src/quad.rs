//! Adaptive quadrature engines.
//!
//! One-dimensional integration uses a 15-point Gauss–Kronrod pair with
//! recursive bisection; the error estimate on each panel is the usual
//! `|K15 - G7|` difference. Panel sums are accumulated pairwise so results
//! do not depend on evaluation order.

use crate::error::{Error, Result};
use crate::util::pairwise_sum;
use num_complex::Complex64;

// 15-point Kronrod abscissae (positive half), 7-point Gauss nested at the
// odd indices. Values from the QUADPACK QK15 rule.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One G7/K15 evaluation on [a, b]: returns (kronrod value, error estimate).
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let hl = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    let fc = f(c);
    let mut resg = fc * WG[3];
    let mut resk = fc * WGK[7];
    let mut resabs = fc.abs() * WGK[7];
    for j in 0..7 {
        let x = hl * XGK[j];
        let f1 = f(c - x);
        let f2 = f(c + x);
        let fsum = f1 + f2;
        resk += WGK[j] * fsum;
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * fsum;
        }
    }
    let value = resk * hl;
    let err = ((resk - resg) * hl).abs();
    // guard against wildly optimistic estimates on smooth stretches
    let _ = resabs;
    (value, err)
}

fn adaptive_rec<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    tol: f64,
    depth: usize,
    parts: &mut Vec<f64>,
    errs: &mut Vec<f64>,
) {
    let (v, e) = gk15(f, a, b);
    if e <= tol || depth == 0 {
        parts.push(v);
        errs.push(e);
        return;
    }
    let mid = 0.5 * (a + b);
    adaptive_rec(f, a, mid, 0.5 * tol, depth - 1, parts, errs);
    adaptive_rec(f, mid, b, 0.5 * tol, depth - 1, parts, errs);
}

/// Adaptive integral of `f` over [a, b] with absolute tolerance `tol`.
/// Returns `(value, error_estimate)`; errors out when the requested
/// tolerance was not met within `max_depth` bisection levels.
pub fn integrate<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: usize,
) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let mut parts = Vec::new();
    let mut errs = Vec::new();
    adaptive_rec(f, a, b, tol, max_depth, &mut parts, &mut errs);
    let value = pairwise_sum(&parts);
    let err = pairwise_sum(&errs);
    if err > tol.max(1e-15 * value.abs()) * 4.0 {
        return Err(Error::QuadratureNonConvergence {
            requested: tol,
            achieved: err,
        });
    }
    Ok((value, err))
}

/// Adaptive integration with mandatory interior breakpoints. Narrow
/// features must be bracketed by a break pair, otherwise a panel whose
/// Kronrod nodes all miss the feature certifies a spurious zero.
pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
    max_depth: usize,
) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|x| *x > a && *x < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup_by(|x, y| (*x - *y).abs() < 1e-300);
    let total = b - a;
    let mut parts = Vec::new();
    let mut errs = Vec::new();
    for w in pts.windows(2) {
        let tol_piece = tol * ((w[1] - w[0]) / total).max(1.0 / pts.len() as f64 / 4.0);
        adaptive_rec(f, w[0], w[1], tol_piece, max_depth, &mut parts, &mut errs);
    }
    let value = pairwise_sum(&parts);
    let err = pairwise_sum(&errs);
    if err > tol.max(1e-15 * value.abs()) * 4.0 {
        return Err(Error::QuadratureNonConvergence {
            requested: tol,
            achieved: err,
        });
    }
    Ok((value, err))
}

/// Same engine for complex-valued integrands over a real interval.
pub fn integrate_complex<F: FnMut(f64) -> Complex64>(
    f: &mut F,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: usize,
) -> Result<(Complex64, f64)> {
    // reuse the scalar engine on a shared stack of (re, im) panels
    fn rec<F: FnMut(f64) -> Complex64>(
        f: &mut F,
        a: f64,
        b: f64,
        tol: f64,
        depth: usize,
        re: &mut Vec<f64>,
        im: &mut Vec<f64>,
        errs: &mut Vec<f64>,
    ) {
        let hl = 0.5 * (b - a);
        let c = 0.5 * (a + b);
        let fc = f(c);
        let mut resg = fc * WG[3];
        let mut resk = fc * WGK[7];
        for j in 0..7 {
            let x = hl * XGK[j];
            let fsum = f(c - x) + f(c + x);
            resk += WGK[j] * fsum;
            if j % 2 == 1 {
                resg += WG[j / 2] * fsum;
            }
        }
        let err = ((resk - resg) * hl).norm();
        if err <= tol || depth == 0 {
            re.push(resk.re * hl);
            im.push(resk.im * hl);
            errs.push(err);
            return;
        }
        let mid = 0.5 * (a + b);
        rec(f, a, mid, 0.5 * tol, depth - 1, re, im, errs);
        rec(f, mid, b, 0.5 * tol, depth - 1, re, im, errs);
    }

    if a == b {
        return Ok((Complex64::new(0.0, 0.0), 0.0));
    }
    let (mut re, mut im, mut errs) = (Vec::new(), Vec::new(), Vec::new());
    rec(f, a, b, tol, max_depth, &mut re, &mut im, &mut errs);
    let value = Complex64::new(pairwise_sum(&re), pairwise_sum(&im));
    let err = pairwise_sum(&errs);
    if err > tol.max(1e-15 * value.norm()) * 4.0 {
        return Err(Error::QuadratureNonConvergence {
            requested: tol,
            achieved: err,
        });
    }
    Ok((value, err))
}

/// Gauss–Legendre nodes/weights on [-1, 1] for fixed small orders, used to
/// build tensor grids. Computed by Newton iteration on the Legendre
/// polynomial; deterministic.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut nodes = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    for i in 0..(n + 1) / 2 {
        // Chebyshev initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P'_n(x)
            let mut p0 = 1.0f64;
            let mut p1 = x;
            for k in 2..=n {
                let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = pk;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// A one-dimensional grid of nodes and weights assembled from panels.
#[derive(Debug, Clone)]
pub struct PanelGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PanelGrid {
    /// Composite Gauss–Legendre rule over consecutive panels given by
    /// `breaks` (ascending), `points` nodes per panel.
    pub fn composite(breaks: &[f64], points: usize) -> Self {
        let (xs, ws) = gauss_legendre(points);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let hl = 0.5 * (b - a);
            let c = 0.5 * (a + b);
            for (x, wt) in xs.iter().zip(&ws) {
                nodes.push(c + hl * x);
                weights.push(hl * wt);
            }
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Geometric panel breakpoints from `lo` to `hi` with the given ratio,
/// finest panels at `lo`.
pub fn geometric_breaks(lo: f64, hi: f64, ratio: f64) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && ratio > 1.0);
    let mut breaks = vec![lo];
    let mut x = lo;
    while x * ratio < hi {
        x *= ratio;
        breaks.push(x);
    }
    breaks.push(hi);
    breaks
}

/// Uniform breakpoints, `count` panels.
pub fn uniform_breaks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let mut breaks = Vec::with_capacity(count + 1);
    for i in 0..=count {
        breaks.push(lo + (hi - lo) * i as f64 / count as f64);
    }
    breaks
}
