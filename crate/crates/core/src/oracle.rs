//! Exact structured-low-rank math used to validate the attention layer.
//!
//! The penalty is `R(k) = sum_h ln det(I + gamma (Q_h K)^H (Q_h K))`, where
//! `K` is the `nc x (n1 n2)` token matrix of `k` (column `j` holds the coil
//! vector at grid position `j`) and each `Q_h` acts on the coil axis. Its
//! value is evaluated with a Cholesky log-determinant and its gradient with a
//! Hermitian solve; no SVD appears outside the cross-check path.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::attention::{mssa, HeadParams, MssaParams, RelPosBias, WindowPlan};
use crate::ctensor::{
    cholesky_logdet, hermitian_eigvals, hermitian_solve, CArray, CMatrix, HermitianMatrix, C64,
};
use crate::data::KSpace;
use crate::error::{Error, Result};

/// Filter coefficients, shape `[d1, d2, nc]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnihilationFilter {
    pub coefficients: CArray,
}

impl AnnihilationFilter {
    pub fn new(coefficients: CArray) -> Result<Self> {
        match *coefficients.shape() {
            [d1, d2, nc] if d1 > 0 && d2 > 0 && nc > 0 => Ok(AnnihilationFilter { coefficients }),
            _ => Err(Error::InvalidArgument(format!(
                "filter must have shape [d1, d2, nc], got {:?}",
                coefficients.shape()
            ))),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.coefficients.shape();
        (s[0], s[1], s[2])
    }
}

/// Dense matrix of a linear map.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    pub matrix: CMatrix,
}

/// Singular values of `Q_h K` and the penalty scale, for the eigenvalue
/// cross-check of the log-det evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralCheck {
    pub sigma: Vec<f64>,
    pub gamma: f64,
}

impl SpectralCheck {
    /// From the Gram matrix `(QK)^H (QK)`, whose eigenvalues are `sigma_i^2`.
    pub fn from_gram(gram: &HermitianMatrix, gamma: f64) -> Result<Self> {
        let mut sigma: Vec<f64> = hermitian_eigvals(gram)?
            .into_iter()
            .map(|e| e.max(0.0).sqrt())
            .collect();
        sigma.sort_by(f64::total_cmp);
        Ok(SpectralCheck { sigma, gamma })
    }

    /// `sum_i ln(1 + gamma sigma_i^2)`.
    pub fn penalty(&self) -> f64 {
        self.sigma.iter().map(|s| (self.gamma * s * s).ln_1p()).sum()
    }
}

/// Sliding `d1 x d2` patches over valid positions, one vectorized patch
/// (`[i, j, coil]` row-major) per row.
pub fn hankelize(k: &KSpace, d: (usize, usize)) -> Result<CMatrix> {
    let (n1, n2, nc) = k.dims();
    let (d1, d2) = d;
    if d1 == 0 || d2 == 0 || d1 > n1 || d2 > n2 {
        return Err(Error::InvalidArgument(format!("window {d1}x{d2} does not fit grid {n1}x{n2}")));
    }
    let (p1, p2) = (n1 - d1 + 1, n2 - d2 + 1);
    let cols = d1 * d2 * nc;
    let mut h = CMatrix::zeros(p1 * p2, cols);
    for r in 0..p1 {
        for c in 0..p2 {
            let row = r * p2 + c;
            for i in 0..d1 {
                for j in 0..d2 {
                    for coil in 0..nc {
                        h.data[row * cols + (i * d2 + j) * nc + coil] = k.get(r + i, c + j, coil);
                    }
                }
            }
        }
    }
    Ok(h)
}

/// Matrix `Q` with `Q vec(k) = hankelize(k, d) vec(s)` for every `k` on an
/// `n1 x n2` grid.
pub fn filter_to_operator(s: &AnnihilationFilter, n1: usize, n2: usize) -> Result<DenseOperator> {
    let (d1, d2, nc) = s.dims();
    if d1 > n1 || d2 > n2 {
        return Err(Error::InvalidArgument(format!("filter {d1}x{d2} does not fit grid {n1}x{n2}")));
    }
    let (p1, p2) = (n1 - d1 + 1, n2 - d2 + 1);
    let cols = n1 * n2 * nc;
    let coef = s.coefficients.data();
    let mut q = CMatrix::zeros(p1 * p2, cols);
    for r in 0..p1 {
        for c in 0..p2 {
            let row = r * p2 + c;
            for i in 0..d1 {
                for j in 0..d2 {
                    for coil in 0..nc {
                        let col = ((r + i) * n2 + c + j) * nc + coil;
                        q.data[row * cols + col] = coef[(i * d2 + j) * nc + coil];
                    }
                }
            }
        }
    }
    Ok(DenseOperator { matrix: q })
}

/// `nc x N` token matrix of `k`.
pub fn token_matrix(k: &KSpace) -> CMatrix {
    let (n1, n2, nc) = k.dims();
    CMatrix::from_fn(nc, n1 * n2, |c, p| k.data()[p * nc + c])
}

fn from_token_matrix(m: &CMatrix, n1: usize, n2: usize) -> KSpace {
    let nc = m.rows;
    let mut k = KSpace::zeros(n1, n2, nc);
    for p in 0..n1 * n2 {
        for c in 0..nc {
            k.data_mut()[p * nc + c] = m.get(c, p);
        }
    }
    k
}

fn check_heads(q_list: &[DenseOperator], nc: usize) -> Result<()> {
    if q_list.is_empty() {
        return Err(Error::InvalidArgument("need at least one head".into()));
    }
    for q in q_list {
        if q.matrix.cols != nc {
            return Err(Error::shape(&[q.matrix.rows, nc], &[q.matrix.rows, q.matrix.cols]));
        }
    }
    Ok(())
}

/// `sum_h ln det(I + gamma (Q_h K)^H (Q_h K))`.
pub fn slr_value(k: &KSpace, q_list: &[DenseOperator], gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::Precondition(format!("gamma must be > 0, got {gamma}")));
    }
    check_heads(q_list, k.nc())?;
    let kt = token_matrix(k);
    let mut total = 0.0;
    for q in q_list {
        let v = q.matrix.matmul(&kt)?;
        total += cholesky_logdet(&HermitianMatrix::shifted_gram(&v, gamma))?;
    }
    Ok(total)
}

/// Eigenvalue route to the same penalty: `sum_h sum_i ln(1 + gamma sigma_i^2)`.
pub fn slr_value_spectral(k: &KSpace, q_list: &[DenseOperator], gamma: f64) -> Result<f64> {
    check_heads(q_list, k.nc())?;
    let kt = token_matrix(k);
    let mut total = 0.0;
    for q in q_list {
        let v = q.matrix.matmul(&kt)?;
        let gram = HermitianMatrix::new(v.adj_matmul(&v)?.hermitian_part())?;
        total += SpectralCheck::from_gram(&gram, gamma)?.penalty();
    }
    Ok(total)
}

/// Gradient of [`slr_value`] with real and imaginary parts as independent
/// variables: `2 gamma sum_h Q_h^H Q_h K (I + gamma (Q_h K)^H Q_h K)^{-1}`.
///
/// This is twice the Wirtinger (conjugate) derivative.
pub fn slr_grad_exact(k: &KSpace, q_list: &[DenseOperator], gamma: f64) -> Result<KSpace> {
    if !(gamma > 0.0) {
        return Err(Error::Precondition(format!("gamma must be > 0, got {gamma}")));
    }
    check_heads(q_list, k.nc())?;
    let (n1, n2, nc) = k.dims();
    let kt = token_matrix(k);
    let mut grad = CMatrix::zeros(nc, n1 * n2);
    for q in q_list {
        let v = q.matrix.matmul(&kt)?;
        let m = HermitianMatrix::shifted_gram(&v, gamma);
        // (V M^{-1})^H = M^{-1} V^H
        let y = hermitian_solve(&m, &v.adjoint())?;
        let g = q.matrix.adj_matmul(&y.adjoint())?.scale(2.0 * gamma);
        grad = grad.add(&g)?;
    }
    Ok(from_token_matrix(&grad, n1, n2))
}

/// Agreement between the exact gradient and its attention-form surrogate.
#[derive(Clone, Debug, PartialEq)]
pub struct ApproxReport {
    pub cosine: f64,
    /// `||approx - exact|| / ||exact||`, exact in the Wirtinger scaling.
    pub rel_error: f64,
    /// Set when both sides vanish (`gamma = 0` or `k = 0`).
    pub degenerate: bool,
}

/// Compares `slr_grad_exact / 2` with `gamma k - MSSA(k)` where MSSA runs on a
/// single global window with zero bias. Requires `sum_h Q_h^H Q_h = I`.
pub fn approx_gap(k: &KSpace, q_list: &[DenseOperator], gamma: f64) -> Result<ApproxReport> {
    check_heads(q_list, k.nc())?;
    let nc = k.nc();
    let mut frame = CMatrix::zeros(nc, nc);
    for q in q_list {
        frame = frame.add(&q.matrix.adj_matmul(&q.matrix)?)?;
    }
    let dev = frame.add(&CMatrix::identity(nc).scale(-1.0))?;
    if dev.data.iter().any(|z| z.norm() > 1e-10) {
        return Err(Error::Precondition("heads do not form a tight frame (sum Q^H Q != I)".into()));
    }
    if gamma == 0.0 || k.norm_sqr() == 0.0 {
        return Ok(ApproxReport {
            cosine: 1.0,
            rel_error: 0.0,
            degenerate: true,
        });
    }
    let exact = slr_grad_exact(k, q_list, gamma)?.scale(0.5);
    let plan = WindowPlan::global(k.n1(), k.n2());
    let params = MssaParams {
        heads: q_list.iter().map(|q| HeadParams { q: q.matrix.clone() }).collect(),
        biases: q_list.iter().map(|_| RelPosBias::zeros(&plan)).collect(),
        gamma,
    };
    let approx = k.scale(gamma).sub(&mssa(k, &params, &plan)?)?;
    let cosine = exact.dot(&approx)?.re / (exact.norm() * approx.norm());
    let rel_error = approx.sub(&exact)?.norm() / exact.norm();
    Ok(ApproxReport {
        cosine,
        rel_error,
        degenerate: false,
    })
}

/// Haar-distributed `n x n` unitary (Gram-Schmidt on a complex Gaussian).
pub fn haar_unitary<R: Rng>(n: usize, rng: &mut R) -> CMatrix {
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<C64> = (0..n)
            .map(|_| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                C64::new(re, im)
            })
            .collect();
        for u in &cols {
            let p: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (x, y) in v.iter_mut().zip(u) {
                *x -= p * y;
            }
        }
        let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm > 1e-8 {
            cols.push(v.into_iter().map(|z| z / nrm).collect());
        }
    }
    CMatrix::from_fn(n, n, |i, j| cols[j][i])
}

/// Splits the rows of one Haar unitary among `heads` blocks, so that
/// `sum_h Q_h^H Q_h = I`.
pub fn tight_frame_heads<R: Rng>(nc: usize, heads: usize, rng: &mut R) -> Result<Vec<DenseOperator>> {
    if heads == 0 || heads > nc {
        return Err(Error::InvalidArgument(format!("cannot split {nc} rows into {heads} heads")));
    }
    let u = haar_unitary(nc, rng);
    let mut out = Vec::with_capacity(heads);
    let mut start = 0;
    for h in 0..heads {
        let rows = nc / heads + usize::from(h < nc % heads);
        out.push(DenseOperator {
            matrix: CMatrix::from_fn(rows, nc, |i, j| u.get(start + i, j)),
        });
        start += rows;
    }
    Ok(out)
}
