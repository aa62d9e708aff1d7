//! Small dense linear-algebra kernels shared by the solvers.
//!
//! Everything here operates on matrices that are small by construction
//! (group-sized Grams, restricted supports), so plain O(n^3) routines are
//! fine. The large-scale path never materializes p x p matrices; it only
//! needs matrix-vector products, handled by the callers.

use ndarray::{Array1, Array2};

/// Eigenvalues of a symmetric matrix via cyclic Jacobi rotations.
///
/// Returns the eigenvalues in no particular order. Accurate to near machine
/// precision for the well-conditioned, modest-size matrices it is used on.
pub fn sym_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    sym_eigen(a).0
}

/// Full symmetric eigendecomposition `A = V diag(w) V'` via cyclic Jacobi;
/// eigenvectors are the columns of `V`.
pub fn sym_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "sym_eigen requires a square matrix");
    let mut vecs = Array2::<f64>::eye(n);
    if n == 0 {
        return (Vec::new(), vecs);
    }
    if n == 1 {
        return (vec![a[[0, 0]]], vecs);
    }
    let mut m = a.clone();
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        let scale: f64 = m.iter().map(|v| v * v).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = vecs[[k, p]];
                    let vkq = vecs[[k, q]];
                    vecs[[k, p]] = c * vkp - s * vkq;
                    vecs[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[[i, i]]).collect(), vecs)
}

/// Largest eigenvalue of a symmetric positive semi-definite matrix.
///
/// Uses the dense Jacobi routine for matrices up to 32 columns, power
/// iteration (tolerance 1e-9, 1000-iteration cap) above that.
pub fn sym_max_eigenvalue(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    if n <= 32 {
        return sym_eigenvalues(a)
            .into_iter()
            .fold(0.0_f64, |acc, v| acc.max(v));
    }
    power_iteration(n, |v| a.dot(v))
}

/// Largest eigenvalue of a symmetric PSD operator given only matrix-vector
/// products. Deterministic start vector; Rayleigh-quotient stopping rule.
pub fn power_iteration<F>(n: usize, mut matvec: F) -> f64
where
    F: FnMut(&Array1<f64>) -> Array1<f64>,
{
    if n == 0 {
        return 0.0;
    }
    // Deterministic, sign-varying start so that no eigenvector is missed by
    // symmetry of an all-ones vector.
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + 0.37 * ((i as f64 * 0.7311).sin()));
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut lambda = 0.0_f64;
    for _ in 0..1000 {
        let w = matvec(&v);
        let new_lambda = v.dot(&w);
        let wnorm = w.dot(&w).sqrt();
        if wnorm <= 1e-300 {
            return 0.0;
        }
        v = w / wnorm;
        if (new_lambda - lambda).abs() <= 1e-9 * new_lambda.abs().max(1e-30) {
            return new_lambda.max(0.0);
        }
        lambda = new_lambda;
    }
    lambda.max(0.0)
}

/// Cholesky factor (lower triangular) of a symmetric positive-definite
/// matrix. Returns `None` when a non-positive pivot is hit.
pub fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let dj = d.sqrt();
        l[[j, j]] = dj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / dj;
        }
    }
    Some(l)
}

/// Solves `A x = b` for symmetric positive-definite `A` via Cholesky.
pub fn solve_spd(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let l = cholesky(a)?;
    let n = b.len();
    // Forward substitution L y = b.
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    // Back substitution L' x = y.
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    Some(x)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
///
/// Computed by Newton iteration on the Legendre polynomial; exact for
/// polynomials of degree 2n-1, which is what the roughness-penalty
/// quadrature relies on.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess for the i-th root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(x) and P_n'(x) by the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            dp = n as f64 * (x * p - p0) / (x * x - 1.0);
            if n == 1 {
                dp = 1.0;
            }
            let dx = p / dp;
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
    if n == 1 {
        nodes[0] = 0.0;
        weights[0] = 2.0;
    }
    (nodes, weights)
}
