//! Small dense helpers: Hermitian eigenvalues by cyclic Jacobi and quadratic
//! forms. The matrices handled here are 2n×2n with n tiny, so no external
//! eigen-solver is involved.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub const HERMITIAN_TOL: f64 = 1e-12;
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_SWEEPS: usize = 100;

/// Largest entrywise deviation `|M - M*|`.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn ensure_hermitian(m: &CMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidArgument(format!("matrix is {}x{}, expected square", m.nrows(), m.ncols())));
    }
    let dev = hermitian_deviation(m);
    if dev > HERMITIAN_TOL * (1.0 + m.iter().map(|v| v.norm()).fold(0.0, f64::max)) {
        return Err(Error::NotHermitian(dev));
    }
    Ok(())
}

/// Eigenvalues of a Hermitian matrix in ascending order.
///
/// The 2×2 case is closed form. Larger matrices `A + jB` go through the real
/// symmetric embedding `[[A, -B], [B, A]]`, whose spectrum is that of the
/// Hermitian matrix with every eigenvalue doubled.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Result<Vec<f64>> {
    ensure_hermitian(m)?;
    let n = m.nrows();
    match n {
        0 => Ok(Vec::new()),
        1 => Ok(vec![m[(0, 0)].re]),
        2 => {
            let (a, d) = (m[(0, 0)].re, m[(1, 1)].re);
            let b = 0.5 * (m[(0, 1)] + m[(1, 0)].conj());
            let mean = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
            Ok(vec![mean - rad, mean + rad])
        }
        _ => {
            let mut emb = DMatrix::<f64>::zeros(2 * n, 2 * n);
            for i in 0..n {
                for j in 0..n {
                    // symmetrize so rounding in the input cannot break Jacobi
                    let h = 0.5 * (m[(i, j)] + m[(j, i)].conj());
                    emb[(i, j)] = h.re;
                    emb[(i + n, j + n)] = h.re;
                    emb[(i + n, j)] = h.im;
                    emb[(i, j + n)] = -h.im;
                }
            }
            let mut all = symmetric_eigenvalues(emb);
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            Ok(all.into_iter().step_by(2).collect())
        }
    }
}

/// Cyclic Jacobi rotations on a real symmetric matrix; returns the diagonal
/// once the off-diagonal mass falls below the threshold.
pub fn symmetric_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let scale = a.norm().max(1.0);
    for _ in 0..JACOBI_SWEEPS {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off.sqrt() < JACOBI_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).collect()
}

pub fn max_hermitian_eigenvalue(m: &CMatrix) -> Result<f64> {
    Ok(*hermitian_eigenvalues(m)?.last().unwrap_or(&0.0))
}

pub fn min_hermitian_eigenvalue(m: &CMatrix) -> Result<f64> {
    Ok(*hermitian_eigenvalues(m)?.first().unwrap_or(&0.0))
}

/// `v* M v`.
pub fn quadratic_form(m: &CMatrix, v: &[Complex64]) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..v.len() {
        for j in 0..v.len() {
            acc += v[i].conj() * m[(i, j)] * v[j];
        }
    }
    acc
}

/// Congruence `Wᵀ M W` for a real or complex `W` (plain transpose, no conjugation),
/// matching the `[G; I]ᵀ Ξ [G; I]` forms evaluated at real frequencies.
pub fn congruence_transpose(m: &CMatrix, w: &CMatrix) -> CMatrix {
    w.transpose() * m * w
}

/// `W* M W`.
pub fn congruence_adjoint(m: &CMatrix, w: &CMatrix) -> CMatrix {
    w.adjoint() * m * w
}

pub fn real_matrix(rows: &[&[f64]]) -> CMatrix {
    let r = rows.len();
    let c = rows.first().map(|row| row.len()).unwrap_or(0);
    CMatrix::from_fn(r, c, |i, j| Complex64::new(rows[i][j], 0.0))
}

/// Largest singular value of a complex matrix.
pub fn max_singular_value(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = m.adjoint() * m;
    hermitian_eigenvalues(&gram).map(|e| e.last().copied().unwrap_or(0.0).max(0.0).sqrt()).unwrap_or(f64::NAN)
}
