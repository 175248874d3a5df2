//! Dense linear algebra used by the transforms and the GMRF tooling.
//!
//! Everything here is plain scalar `f64` arithmetic executed in a fixed
//! order, so results are reproducible bit-for-bit by any decoder built from
//! the same source. No BLAS, no threading inside a factorization.

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                axpy(a, other.row(k), out.row_mut(i));
            }
        }
        out
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn add_diagonal(&mut self, value: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self[(i, i)] += value;
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Inner product with four interleaved partial sums (fixed summation
/// order, so results are reproducible).
#[inline(always)]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += a * x`
#[inline(always)]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Lower-triangular Cholesky factor `G` with `A = G Gᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    factor: Matrix,
}

impl Cholesky {
    pub fn new(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                actual: a.cols(),
            });
        }
        let n = a.rows();
        let mut g = Matrix::zeros(n, n);
        for j in 0..n {
            let gj = g.row(j);
            let d = a[(j, j)] - dot(&gj[..j], &gj[..j]);
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let djj = d.sqrt();
            g[(j, j)] = djj;
            for i in (j + 1)..n {
                let s = {
                    let (gi, gj) = (g.row(i), g.row(j));
                    a[(i, j)] - dot(&gi[..j], &gj[..j])
                };
                g[(i, j)] = s / djj;
            }
        }
        Ok(Cholesky { factor: g })
    }

    pub fn factor(&self) -> &Matrix {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.factor.rows()
    }

    /// Solves `G y = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y = vec![0.0; n];
        for i in 0..n {
            let gi = self.factor.row(i);
            y[i] = (b[i] - dot(&gi[..i], &y[..i])) / gi[i];
        }
        y
    }

    /// Solves `Gᵀ x = y`.
    pub fn solve_upper(&self, y: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(y.len(), n);
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.factor[(i, i)];
            let xi = x[i];
            let gi = self.factor.row(i);
            for (xk, gik) in x[..i].iter_mut().zip(&gi[..i]) {
                *xk -= gik * xi;
            }
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
///
/// `vectors` is stored with one eigenvector per *row*, matching `values`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigensolver with a fixed `(p, q)` sweep order.
///
/// Quadratic convergence makes this the right tool for the small systems
/// (3×3 covariances, 4×4 quaternion problems) and a reference for larger
/// ones; for full cluster Laplacians use [`symmetric_eigen`].
pub fn jacobi_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    check_symmetric(a)?;
    let n = a.rows();
    let mut a = a.clone();
    let mut v = Matrix::identity(n);
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
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
                // Columns of v accumulate the rotations; stored as rows below.
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    Ok(sort_eigenpairs(values, v.transpose()))
}

/// Full symmetric eigendecomposition by Householder tridiagonalization
/// followed by implicit QL iterations.
///
/// O(n³) with contiguous inner loops; a 600×600 Laplacian decomposes in
/// well under a second on one core.
pub fn symmetric_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    check_symmetric(a)?;
    let n = a.rows();
    if n == 0 {
        return Ok(SymmetricEigen {
            values: Vec::new(),
            vectors: Matrix::zeros(0, 0),
        });
    }
    let (diag, z) = decompose(a)?;
    Ok(sort_eigenpairs(diag, z))
}

/// Runs the solver in an AVX-enabled copy when the CPU has it. Only the
/// vector width changes (no fused multiply-add, no reassociation), so both
/// paths produce bit-identical results.
fn decompose(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx") {
        // SAFETY: AVX support was just detected.
        return unsafe { decompose_avx(a) };
    }
    decompose_portable(a)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx")]
unsafe fn decompose_avx(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    decompose_portable(a)
}

#[inline(always)]
fn decompose_portable(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let (mut diag, mut off, mut z) = tridiagonalize(a);
    tridiagonal_ql(&mut diag, &mut off, &mut z)?;
    Ok((diag, z))
}

fn check_symmetric(a: &Matrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            actual: a.cols(),
        });
    }
    let asym = a.asymmetry();
    let scale = a.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if asym > 1e-12 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Reduces `a` to tridiagonal form `T = Qᵀ A Q`.
///
/// Returns the diagonal, the sub-diagonal (`off[i]` couples `i` and `i+1`)
/// and `Qᵀ` (row `i` of the returned matrix is column `i` of `Q`).
#[inline(always)]
fn tridiagonalize(a: &Matrix) -> (Vec<f64>, Vec<f64>, Matrix) {
    let n = a.rows();
    let mut w = a.clone();
    // Householder vectors, v_k lives on indices k+1..n.
    let mut reflectors: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n.saturating_sub(2));
    let mut off = vec![0.0; n.saturating_sub(1)];
    let mut p = vec![0.0; n];

    for k in 0..n.saturating_sub(2) {
        let start = k + 1;
        let m = n - start;
        let x: Vec<f64> = w.row(k)[start..].to_vec();
        let alpha_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if alpha_norm == 0.0 {
            off[k] = 0.0;
            reflectors.push((vec![0.0; m], 0.0));
            continue;
        }
        let alpha = if x[0] > 0.0 { -alpha_norm } else { alpha_norm };
        let mut v = x;
        v[0] -= alpha;
        let vnorm2 = v.iter().map(|t| t * t).sum::<f64>();
        let beta = 2.0 / vnorm2;
        off[k] = alpha;

        // p = beta * A22 v
        for i in 0..m {
            p[i] = beta * dot(&w.row(start + i)[start..], &v);
        }
        // w = p - (beta/2)(pᵀv) v
        let kcoef = 0.5 * beta * dot(&p[..m], &v);
        for i in 0..m {
            p[i] -= kcoef * v[i];
        }
        // A22 -= v wᵀ + w vᵀ
        for i in 0..m {
            let vi = v[i];
            let pi = p[i];
            let row = &mut w.row_mut(start + i)[start..];
            for j in 0..m {
                row[j] -= vi * p[j] + pi * v[j];
            }
        }
        reflectors.push((v, beta));
    }
    if n >= 2 {
        off[n - 2] = w[(n - 1, n - 2)];
    }
    let diag: Vec<f64> = (0..n).map(|i| w[(i, i)]).collect();

    // Backward accumulation Q = H_0 (H_1 (... H_{n-3})).
    let mut q = Matrix::identity(n);
    let mut tmp = vec![0.0; n];
    for (k, (v, beta)) in reflectors.iter().enumerate().rev() {
        if *beta == 0.0 {
            continue;
        }
        let start = k + 1;
        let m = n - start;
        // tmp = vᵀ Q_sub
        let t = &mut tmp[..m];
        t.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..m {
            axpy(v[i], &q.row(start + i)[start..], t);
        }
        for i in 0..m {
            let s = beta * v[i];
            let row = &mut q.row_mut(start + i)[start..];
            for j in 0..m {
                row[j] -= s * t[j];
            }
        }
    }
    (diag, off, q.transpose())
}

/// Implicit QL on a symmetric tridiagonal matrix, accumulating into `zt`
/// (eigenvectors as rows).
#[inline(always)]
fn tridiagonal_ql(d: &mut [f64], off: &mut [f64], zt: &mut Matrix) -> Result<()> {
    let n = d.len();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&off[..n - 1]);

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::InvalidParameter("QL iteration failed to converge".into()));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    rotate_rows(zt, i, i + 1, c, s);
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Applies the plane rotation of QL step `(i, i+1)` to two eigenvector rows.
#[inline(always)]
fn rotate_rows(zt: &mut Matrix, i: usize, j: usize, c: f64, s: f64) {
    let cols = zt.cols();
    let (lo, hi) = zt.data.split_at_mut(j * cols);
    let ri = &mut lo[i * cols..(i + 1) * cols];
    let rj = &mut hi[..cols];
    for (a, b) in ri.iter_mut().zip(rj.iter_mut()) {
        let h = *b;
        *b = s * *a + c * h;
        *a = c * *a - s * h;
    }
}

/// Ascending eigenvalues; each eigenvector's first component with
/// magnitude above 1e-12 made positive; near-equal eigenvalues ordered
/// lexicographically by their (sign-normalized) vectors.
fn sort_eigenpairs(values: Vec<f64>, mut vectors: Matrix) -> SymmetricEigen {
    let n = values.len();
    for r in 0..n {
        let row = vectors.row_mut(r);
        if let Some(first) = row.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

    // Group runs of numerically equal eigenvalues and order each run by
    // vector entries so the basis does not depend on solver internals.
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * scale;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] - values[order[end - 1]] <= tol {
            end += 1;
        }
        if end - start > 1 {
            order[start..end].sort_by(|&a, &b| lex_cmp(vectors.row(a), vectors.row(b)).reverse());
        }
        start = end;
    }

    let mut sorted = Matrix::zeros(n, n);
    let mut sorted_values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        sorted.row_mut(dst).copy_from_slice(vectors.row(src));
        sorted_values.push(values[src]);
    }
    SymmetricEigen {
        values: sorted_values,
        vectors: sorted,
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

/// Moore-Penrose pseudo-inverse of a symmetric positive semi-definite
/// matrix; returns the inverse and whether any eigenvalue was dropped.
pub fn symmetric_pinv(a: &Matrix) -> Result<(Matrix, bool)> {
    let eig = symmetric_eigen(a)?;
    let n = a.rows();
    let max = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = max * n as f64 * f64::EPSILON * 16.0;
    let mut rank_deficient = false;
    let mut out = Matrix::zeros(n, n);
    for (k, &lam) in eig.values.iter().enumerate() {
        if lam.abs() <= tol || lam == 0.0 {
            rank_deficient = true;
            continue;
        }
        let v = eig.vectors.row(k);
        for i in 0..n {
            let s = v[i] / lam;
            if s == 0.0 {
                continue;
            }
            axpy(s, v, out.row_mut(i));
        }
    }
    Ok((out, rank_deficient))
}
