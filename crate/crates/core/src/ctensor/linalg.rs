//! Small dense Hermitian linear algebra: Cholesky log-determinant and solve,
//! column softmax, and a Jacobi eigensolver used only as a cross-check.

use super::array::{CMatrix, RMatrix, C64};
use crate::error::{Error, Result};

const HERMITIAN_TOL: f64 = 1e-12;

/// Square complex matrix checked to be Hermitian on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.rows != m.cols {
            return Err(Error::NotHermitian(format!("{}x{} is not square", m.rows, m.cols)));
        }
        let n = m.rows;
        for i in 0..n {
            if m.get(i, i).im.abs() > HERMITIAN_TOL {
                return Err(Error::NotHermitian(format!("diagonal {i} has imaginary part")));
            }
            for j in 0..i {
                if (m.get(i, j) - m.get(j, i).conj()).norm() > HERMITIAN_TOL {
                    return Err(Error::NotHermitian(format!("entries ({i},{j}) and ({j},{i})")));
                }
            }
        }
        Ok(HermitianMatrix(m))
    }

    /// `I + gamma * V^H V`, assembled to be exactly Hermitian.
    pub fn shifted_gram(v: &CMatrix, gamma: f64) -> Self {
        let n = v.cols;
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut acc = C64::new(0.0, 0.0);
                for r in 0..v.rows {
                    acc += v.data[r * n + i].conj() * v.data[r * n + j];
                }
                acc *= gamma;
                if i == j {
                    m.set(i, i, C64::new(1.0 + acc.re, 0.0));
                } else {
                    m.set(i, j, acc);
                    m.set(j, i, acc.conj());
                }
            }
        }
        HermitianMatrix(m)
    }

    pub fn order(&self) -> usize {
        self.0.rows
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        (0..self.order()).map(|i| self.0.get(i, i).re).sum()
    }
}

/// Lower-triangular `L` with `A = L L^H`.
pub fn cholesky(a: &HermitianMatrix) -> Result<CMatrix> {
    let n = a.order();
    let m = a.matrix();
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m.get(j, j).re;
        for k in 0..j {
            d -= l.get(j, k).norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { index: j, value: d });
        }
        let djj = d.sqrt();
        l.set(j, j, C64::new(djj, 0.0));
        for i in j + 1..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k).conj();
            }
            l.set(i, j, s / djj);
        }
    }
    Ok(l)
}

/// `ln det(A) = 2 * sum(ln diag(L))`.
pub fn cholesky_logdet(a: &HermitianMatrix) -> Result<f64> {
    let l = cholesky(a)?;
    Ok(2.0 * (0..l.rows).map(|i| l.get(i, i).re.ln()).sum::<f64>())
}

/// Solves `A X = B` for Hermitian positive-definite `A`.
pub fn hermitian_solve(a: &HermitianMatrix, b: &CMatrix) -> Result<CMatrix> {
    let n = a.order();
    if b.rows != n {
        return Err(Error::shape(&[n], &[b.rows]));
    }
    let l = cholesky(a)?;
    let mut x = b.clone();
    let m = b.cols;
    // forward: L z = b
    for i in 0..n {
        for k in 0..i {
            let lik = l.get(i, k);
            for c in 0..m {
                let t = x.data[k * m + c];
                x.data[i * m + c] -= lik * t;
            }
        }
        let d = l.get(i, i).re;
        for c in 0..m {
            x.data[i * m + c] /= d;
        }
    }
    // backward: L^H x = z
    for i in (0..n).rev() {
        for k in i + 1..n {
            let lki = l.get(k, i).conj();
            for c in 0..m {
                let t = x.data[k * m + c];
                x.data[i * m + c] -= lki * t;
            }
        }
        let d = l.get(i, i).re;
        for c in 0..m {
            x.data[i * m + c] /= d;
        }
    }
    Ok(x)
}

/// Softmax down each column, stabilized by the column maximum.
pub fn softmax_cols(m: &RMatrix) -> RMatrix {
    let mut out = m.clone();
    softmax_cols_in_place(&mut out.data, m.rows, m.cols);
    out
}

pub(crate) fn softmax_cols_in_place(data: &mut [f64], rows: usize, cols: usize) {
    for j in 0..cols {
        let mut mx = f64::NEG_INFINITY;
        for i in 0..rows {
            mx = mx.max(data[i * cols + j]);
        }
        let mut sum = 0.0;
        for i in 0..rows {
            let e = (data[i * cols + j] - mx).exp();
            data[i * cols + j] = e;
            sum += e;
        }
        for i in 0..rows {
            data[i * cols + j] /= sum;
        }
    }
}

const MAX_SWEEPS: usize = 100;

/// Ascending eigenvalues of a Hermitian matrix (order at most 64).
///
/// The `n x n` Hermitian matrix is embedded as the `2n x 2n` real symmetric
/// matrix `[[Re, -Im], [Im, Re]]`, whose spectrum is that of `A` with every
/// eigenvalue doubled; cyclic Jacobi rotations diagonalize the embedding.
pub fn hermitian_eigvals(a: &HermitianMatrix) -> Result<Vec<f64>> {
    let n = a.order();
    if n > 64 {
        return Err(Error::InvalidArgument(format!("eigensolver limited to order 64, got {n}")));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let m = 2 * n;
    let mut s = vec![0.0; m * m];
    for i in 0..n {
        for j in 0..n {
            let z = a.matrix().get(i, j);
            s[i * m + j] = z.re;
            s[(i + n) * m + j + n] = z.re;
            s[i * m + j + n] = -z.im;
            s[(i + n) * m + j] = z.im;
        }
    }
    let scale: f64 = s.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| s[i * m + j] * s[i * m + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = s[p * m + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = s[p * m + p];
                let aqq = s[q * m + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..m {
                    let akp = s[k * m + p];
                    let akq = s[k * m + q];
                    s[k * m + p] = c * akp - sn * akq;
                    s[k * m + q] = sn * akp + c * akq;
                }
                for k in 0..m {
                    let apk = s[p * m + k];
                    let aqk = s[q * m + k];
                    s[p * m + k] = c * apk - sn * aqk;
                    s[q * m + k] = sn * apk + c * aqk;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence(MAX_SWEEPS));
    }
    let mut ev: Vec<f64> = (0..m).map(|i| s[i * m + i]).collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect())
}
