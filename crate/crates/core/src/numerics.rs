//! Dense linear algebra for the correction models: SVD-based pseudoinverse,
//! minimum-norm least squares, Cholesky solves, and the vector norms used by
//! the convergence checks.
//!
//! Matrices are small (neighbor counts × feature counts), dense, and row-major.
//! Every constructor rejects non-finite entries so downstream kernels can
//! assume clean data.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("matrix data length {got} does not match {rows}x{cols}")]
    DataLength {
        rows: usize,
        cols: usize,
        got: usize,
    },
    #[error("matrix entry ({row},{col}) is not finite")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("ridge penalty must be non-negative, got {0}")]
    NegativeRidge(f64),
}

/// Row-major dense matrix of finite `f64` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major data, rejecting length mismatches and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::DataLength {
                rows,
                cols,
                got: data.len(),
            });
        }
        for (k, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(NumericsError::NonFiniteEntry {
                    row: k / cols.max(1),
                    col: k % cols.max(1),
                });
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(NumericsError::DimensionMismatch(format!(
                    "ragged rows: expected {c} columns, found {}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(r, c, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        assert!(
            r < self.rows && c < self.cols,
            "index ({r},{c}) out of bounds"
        );
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        assert!(
            r < self.rows && c < self.cols,
            "index ({r},{c}) out of bounds"
        );
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix, NumericsError> {
        if self.cols != other.rows {
            return Err(NumericsError::DimensionMismatch(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, o) in dst.iter_mut().zip(orow) {
                    *d += a * o;
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, NumericsError> {
        if self.cols != v.len() {
            return Err(NumericsError::DimensionMismatch(format!(
                "{}x{} * vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

/// Thin SVD `A = U diag(σ) Vᵀ` with singular values sorted non-increasing.
#[derive(Debug, Clone)]
pub struct SvdFactorization {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub vt: DenseMatrix,
    /// Number of singular values above `rank_tol · σ_max`.
    pub numeric_rank: usize,
}

/// Default relative rank tolerance: `max(rows, cols) · machine-epsilon`.
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON
}

/// Thin SVD of `a`; `rank_tol` is relative to the largest singular value.
pub fn svd(a: &DenseMatrix, rank_tol: f64) -> SvdFactorization {
    let na = a.to_nalgebra();
    let f = na.svd(true, true);
    let u = f.u.expect("svd requested u");
    let vt = f.v_t.expect("svd requested vt");
    let mut order: Vec<usize> = (0..f.singular_values.len()).collect();
    order.sort_by(|&i, &j| f.singular_values[j].total_cmp(&f.singular_values[i]));
    let k = order.len();
    let mut su = DenseMatrix::zeros(u.nrows(), k);
    let mut svt = DenseMatrix::zeros(k, vt.ncols());
    let mut sv = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        sv.push(f.singular_values[src]);
        for r in 0..u.nrows() {
            su.set(r, dst, u[(r, src)]);
        }
        for c in 0..vt.ncols() {
            svt.set(dst, c, vt[(src, c)]);
        }
    }
    let smax = sv.first().copied().unwrap_or(0.0);
    let cut = rank_tol * smax;
    let numeric_rank = sv.iter().filter(|&&s| s > cut && s > 0.0).count();
    SvdFactorization {
        u: su,
        singular_values: sv,
        vt: svt,
        numeric_rank,
    }
}

/// Moore-Penrose pseudoinverse. Singular values at or below
/// `rank_tol · σ_max` are treated as zero.
pub fn pseudoinverse(a: &DenseMatrix, rank_tol: f64) -> DenseMatrix {
    let f = svd(a, rank_tol);
    // A† = V Σ† Uᵀ
    let mut out = DenseMatrix::zeros(a.cols(), a.rows());
    for k in 0..f.numeric_rank {
        let inv = 1.0 / f.singular_values[k];
        for r in 0..a.cols() {
            let vrk = f.vt.get(k, r);
            if vrk == 0.0 {
                continue;
            }
            for c in 0..a.rows() {
                let v = out.get(r, c) + inv * vrk * f.u.get(c, k);
                out.set(r, c, v);
            }
        }
    }
    out
}

/// Minimum-norm least-squares solution `W = (XᵀX)† XᵀY`.
///
/// `rank_tol` applies to the Gram matrix spectrum, so directions with
/// singular value below `sqrt(rank_tol) · σ_max(X)` are truncated. Equals
/// `(XᵀX)⁻¹XᵀY` when X has full column rank, and interpolates (`XW = Y`)
/// whenever X has full row rank. Internally the smaller of the two Gram
/// matrices is factorized: `(XᵀX)†Xᵀ = Xᵀ(XXᵀ)†`, and both Grams share
/// their nonzero spectrum, so the truncation set is route-independent.
pub fn min_norm_least_squares(
    x: &DenseMatrix,
    y: &DenseMatrix,
    rank_tol: f64,
) -> Result<DenseMatrix, NumericsError> {
    if x.rows() != y.rows() {
        return Err(NumericsError::DimensionMismatch(format!(
            "design {}x{} vs targets {}x{}",
            x.rows(),
            x.cols(),
            y.rows(),
            y.cols()
        )));
    }
    let (n, p) = (x.rows(), x.cols());
    if n <= p {
        // W = Xᵀ (XXᵀ)† Y with the n×n Gram.
        let s = x.matmul(&x.transpose())?;
        let sy = gram_pinv_apply(&s, y, rank_tol);
        x.transpose().matmul(&sy)
    } else {
        // W = (XᵀX)† (XᵀY) with the p×p Gram.
        let xt = x.transpose();
        let g = xt.matmul(x)?;
        let xty = xt.matmul(y)?;
        Ok(gram_pinv_apply(&g, &xty, rank_tol))
    }
}

/// Applies the pseudoinverse of a symmetric PSD Gram matrix to `b` via a
/// symmetric eigendecomposition, truncating eigenvalues at `rank_tol · λ_max`.
fn gram_pinv_apply(gram: &DenseMatrix, b: &DenseMatrix, rank_tol: f64) -> DenseMatrix {
    let eig = gram.to_nalgebra().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cut = rank_tol * lmax;
    let n = gram.rows();
    let mut out = DenseMatrix::zeros(n, b.cols());
    for k in 0..n {
        let lam = eig.eigenvalues[k];
        if lam <= cut || lam <= 0.0 {
            continue;
        }
        // out += q_k λ_k⁻¹ q_kᵀ b
        for c in 0..b.cols() {
            let mut proj = 0.0;
            for r in 0..n {
                proj += eig.eigenvectors[(r, k)] * b.get(r, c);
            }
            proj /= lam;
            for r in 0..n {
                let v = out.get(r, c) + eig.eigenvectors[(r, k)] * proj;
                out.set(r, c, v);
            }
        }
    }
    out
}

/// Ridge regression `(XᵀX + λI)⁻¹XᵀY` via Cholesky. Exists as the λ→0
/// reference against which the ridgeless fit is tested; production fitting
/// uses [`min_norm_least_squares`].
pub fn ridge_solve(
    x: &DenseMatrix,
    y: &DenseMatrix,
    lambda: f64,
) -> Result<DenseMatrix, NumericsError> {
    if lambda < 0.0 {
        return Err(NumericsError::NegativeRidge(lambda));
    }
    if x.rows() != y.rows() {
        return Err(NumericsError::DimensionMismatch(format!(
            "design {}x{} vs targets {}x{}",
            x.rows(),
            x.cols(),
            y.rows(),
            y.cols()
        )));
    }
    let xt = x.transpose();
    let mut g = xt.matmul(x)?;
    for i in 0..g.rows() {
        let v = g.get(i, i) + lambda;
        g.set(i, i, v);
    }
    let xty = xt.matmul(y)?;
    cholesky_solve(&g, &xty)
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// Reports the first failing pivot index when the matrix is not SPD.
pub fn cholesky_factor(a: &DenseMatrix) -> Result<DenseMatrix, NumericsError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(NumericsError::DimensionMismatch(format!(
            "{}x{} is not square",
            a.rows(),
            a.cols()
        )));
    }
    let mut l = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(NumericsError::NotPositiveDefinite { pivot: i });
                }
                l.set(i, j, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solves `A X = B` for symmetric positive-definite `A`.
pub fn cholesky_solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, NumericsError> {
    let l = cholesky_factor(a)?;
    if b.rows() != a.rows() {
        return Err(NumericsError::DimensionMismatch(format!(
            "rhs has {} rows, matrix is {}x{}",
            b.rows(),
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    let mut x = b.clone();
    // forward substitution L Z = B
    for c in 0..x.cols() {
        for i in 0..n {
            let mut s = x.get(i, c);
            for k in 0..i {
                s -= l.get(i, k) * x.get(k, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
        // back substitution Lᵀ X = Z
        for i in (0..n).rev() {
            let mut s = x.get(i, c);
            for k in i + 1..n {
                s -= l.get(k, i) * x.get(k, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
    }
    Ok(x)
}

/// Solves `A x = b` for a vector right-hand side.
pub fn cholesky_solve_vec(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, NumericsError> {
    let bm = DenseMatrix::from_vec(b.len(), 1, b.to_vec())?;
    let x = cholesky_solve(a, &bm)?;
    Ok(x.data)
}

/// Solves `L Lᵀ x = b` given an existing lower-triangular Cholesky factor.
#[allow(clippy::needless_range_loop)] // substitution reads clearest with indices
pub fn cholesky_solve_factored(l: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    assert_eq!(b.len(), n, "rhs length must match factor size");
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l.get(i, k) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    x
}

/// Maximum absolute component; 0 for the empty vector.
pub fn infinity_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Euclidean distance between equal-length vectors.
pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64, NumericsError> {
    if a.len() != b.len() {
        return Err(NumericsError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Squared Euclidean distance (no sqrt), used by the neighbor searches.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
