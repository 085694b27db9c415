//! Thin wrappers over the system LAPACK/BLAS plus a dense complex LU solver.
//!
//! The eigensolvers come from OpenBLAS' bundled LAPACK (`dsyevd` for dense
//! symmetric matrices, `dstev` for the small tridiagonal systems produced by
//! the Lanczos recursion). BLAS threading is pinned to a single thread at
//! first use; parallelism lives at the replica level instead, which keeps
//! results independent of the worker count.

use num_complex::Complex64;
use std::ffi::c_char;
use std::sync::Once;

static BLAS_INIT: Once = Once::new();

fn ensure_single_threaded_blas() {
    BLAS_INIT.call_once(|| {
        // OpenBLAS reads this at initialization time. Per-call threading
        // would fight the replica-level rayon pool and make timings erratic.
        std::env::set_var("OPENBLAS_NUM_THREADS", "1");
        std::env::set_var("OMP_NUM_THREADS", "1");
    });
}

extern "C" {
    // BLAS level 3; column-major
    fn dgemm_(
        transa: *const c_char,
        transb: *const c_char,
        m: *const i32,
        n: *const i32,
        k: *const i32,
        alpha: *const f64,
        a: *const f64,
        lda: *const i32,
        b: *const f64,
        ldb: *const i32,
        beta: *const f64,
        c: *mut f64,
        ldc: *const i32,
    );
}

/// Symmetric eigendecomposition of a dense matrix, ascending eigenvalues.
/// `a` is row-major n×n (symmetry makes the storage order immaterial).
/// Returns `(eigenvalues, eigenvectors)` with eigenvector k stored in
/// column-major order: component i of vector k at `vectors[k * n + i]`.
pub fn syevd(n: usize, a: &[f64]) -> Result<(Vec<f64>, Vec<f64>), i32> {
    ensure_single_threaded_blas();
    assert_eq!(a.len(), n * n);
    let mut vectors = a.to_vec();
    let mut values = vec![0.0f64; n];
    let ni = n as i32;
    let mut info = 0i32;
    let jobz = b'V' as c_char;
    let uplo = b'L' as c_char;

    let mut wkopt = 0.0f64;
    let mut iwkopt = 0i32;
    let query = -1i32;
    unsafe {
        lapack_sys::dsyevd_(
            &jobz,
            &uplo,
            &ni,
            vectors.as_mut_ptr(),
            &ni,
            values.as_mut_ptr(),
            &mut wkopt,
            &query,
            &mut iwkopt,
            &query,
            &mut info,
        );
    }
    if info != 0 {
        return Err(info);
    }
    let lwork = wkopt as i32;
    let liwork = iwkopt;
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        lapack_sys::dsyevd_(
            &jobz,
            &uplo,
            &ni,
            vectors.as_mut_ptr(),
            &ni,
            values.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(info);
    }
    Ok((values, vectors))
}

/// Eigendecomposition of a symmetric tridiagonal matrix (diagonal `d`,
/// off-diagonal `e`), ascending eigenvalues, eigenvectors column-major.
/// Divide-and-conquer (`dstevd`): much faster than QR iteration for the
/// Krylov dimensions the quadrature reaches.
pub fn stev(d: &[f64], e: &[f64]) -> Result<(Vec<f64>, Vec<f64>), i32> {
    ensure_single_threaded_blas();
    let n = d.len();
    assert_eq!(e.len(), n.saturating_sub(1));
    let mut values = d.to_vec();
    let mut off = e.to_vec();
    let mut vectors = vec![0.0f64; n * n];
    let ni = n as i32;
    let mut info = 0i32;
    let jobz = b'V' as c_char;
    // workspace query
    let mut wkopt = 0.0f64;
    let mut iwkopt = 0i32;
    let query = -1i32;
    unsafe {
        lapack_sys::dstevd_(
            &jobz,
            &ni,
            values.as_mut_ptr(),
            off.as_mut_ptr(),
            vectors.as_mut_ptr(),
            &ni,
            &mut wkopt,
            &query,
            &mut iwkopt,
            &query,
            &mut info,
        );
    }
    if info != 0 {
        return Err(info);
    }
    let lwork = wkopt as i32;
    let liwork = iwkopt;
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        lapack_sys::dstevd_(
            &jobz,
            &ni,
            values.as_mut_ptr(),
            off.as_mut_ptr(),
            vectors.as_mut_ptr(),
            &ni,
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(info);
    }
    Ok((values, vectors))
}

/// C = A · B for row-major square matrices (delegates to dgemm by swapping
/// the operand order, since BLAS is column-major).
pub fn matmul_square(n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    ensure_single_threaded_blas();
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n * n);
    assert_eq!(c.len(), n * n);
    let ni = n as i32;
    let one = 1.0f64;
    let zero = 0.0f64;
    let tn = b'N' as c_char;
    // row-major C = A·B  ⇔  column-major C^T = B^T · A^T
    unsafe {
        dgemm_(
            &tn,
            &tn,
            &ni,
            &ni,
            &ni,
            &one,
            b.as_ptr(),
            &ni,
            a.as_ptr(),
            &ni,
            &zero,
            c.as_mut_ptr(),
            &ni,
        );
    }
}

/// Dense complex LU solve with partial pivoting: overwrites nothing, returns
/// the solution of `M x = rhs` for each right-hand side. `m` is row-major.
/// Used for resolvent evaluations independent of the eigendecomposition.
pub struct ComplexLu {
    n: usize,
    lu: Vec<Complex64>,
    pivots: Vec<usize>,
}

impl ComplexLu {
    pub fn factor(n: usize, m: &[Complex64]) -> Option<Self> {
        assert_eq!(m.len(), n * n);
        let mut lu = m.to_vec();
        let mut pivots = vec![0usize; n];
        for k in 0..n {
            // partial pivot
            let mut piv = k;
            let mut maxv = lu[k * n + k].norm_sqr();
            for r in (k + 1)..n {
                let v = lu[r * n + k].norm_sqr();
                if v > maxv {
                    maxv = v;
                    piv = r;
                }
            }
            if maxv == 0.0 {
                return None;
            }
            pivots[k] = piv;
            if piv != k {
                for c in 0..n {
                    lu.swap(k * n + c, piv * n + c);
                }
            }
            let diag = lu[k * n + k];
            for r in (k + 1)..n {
                let factor = lu[r * n + k] / diag;
                lu[r * n + k] = factor;
                for c in (k + 1)..n {
                    let v = lu[k * n + c];
                    lu[r * n + c] -= factor * v;
                }
            }
        }
        Some(Self { n, lu, pivots })
    }

    pub fn solve(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        assert_eq!(rhs.len(), n);
        let mut x = rhs.to_vec();
        for k in 0..n {
            x.swap(k, self.pivots[k]);
            let xk = x[k];
            if xk != Complex64::new(0.0, 0.0) {
                for r in (k + 1)..n {
                    let f = self.lu[r * n + k];
                    x[r] -= f * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut acc = x[k];
            for c in (k + 1)..n {
                acc -= self.lu[k * n + c] * x[c];
            }
            x[k] = acc / self.lu[k * n + k];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn syevd_two_by_two() {
        let a = vec![0.0, 1.0, 1.0, 0.0];
        let (vals, vecs) = syevd(2, &a).unwrap();
        assert!((vals[0] + 1.0).abs() < 1e-14);
        assert!((vals[1] - 1.0).abs() < 1e-14);
        // columns orthonormal
        let dot = vecs[0] * vecs[2] + vecs[1] * vecs[3];
        assert!(dot.abs() < 1e-14);
    }

    #[test]
    fn stev_matches_syevd() {
        let n = 12;
        let d: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let e: Vec<f64> = (0..n - 1).map(|i| 0.5 + (i as f64 * 0.3).cos()).collect();
        let mut dense = vec![0.0f64; n * n];
        for i in 0..n {
            dense[i * n + i] = d[i];
            if i + 1 < n {
                dense[i * n + i + 1] = e[i];
                dense[(i + 1) * n + i] = e[i];
            }
        }
        let (v1, _) = stev(&d, &e).unwrap();
        let (v2, _) = syevd(n, &dense).unwrap();
        for (a, b) in v1.iter().zip(&v2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_against_naive() {
        let n = 7;
        let a: Vec<f64> = (0..n * n).map(|i| (i as f64 * 0.13).sin()).collect();
        let b: Vec<f64> = (0..n * n).map(|i| (i as f64 * 0.29).cos()).collect();
        let mut c = vec![0.0f64; n * n];
        matmul_square(n, &a, &b, &mut c);
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += a[i * n + k] * b[k * n + j];
                }
                assert!((c[i * n + j] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn complex_lu_solves() {
        let n = 20;
        let mut m = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                let v = ((i * 31 + j * 17) % 13) as f64 / 13.0;
                m[i * n + j] = Complex64::new(v, ((i + 2 * j) % 7) as f64 / 7.0);
            }
            m[i * n + i] += Complex64::new(4.0, 1.0);
        }
        let lu = ComplexLu::factor(n, &m).unwrap();
        let rhs: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(i as f64, (n - i) as f64))
            .collect();
        let x = lu.solve(&rhs);
        // residual
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n {
                acc += m[i * n + j] * x[j];
            }
            assert!((acc - rhs[i]).norm() < 1e-10);
        }
    }
}
