//! Dense matrices and Kronecker-product machinery.
//!
//! Every tensor in the crate is carried as an ordinary row-major [`Mat`]. A
//! derivative tensor of order `q` acting on `n`-vectors is an `m × n^q`
//! matrix whose columns are addressed by a [`KronIndex`], most significant
//! index first, so that `e_i ⊗ e_j` sits at flat position `i·n + j`
//! (zero-based).

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::{to_f64, Real};

/// Dense real matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct Mat<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting wrong lengths and
    /// non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries supplied for a {rows}×{cols} matrix",
                data.len()
            )));
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::from_vec(r, c, rows.concat())
    }

    /// `n × 1` column.
    pub fn column(v: &[T]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    /// `1 × n` row.
    pub fn row(v: &[T]) -> Self {
        Self {
            rows: 1,
            cols: v.len(),
            data: v.to_vec(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn col(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row_slice(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn set_col(&mut self, j: usize, v: &[T]) {
        assert_eq!(v.len(), self.rows);
        for (i, &x) in v.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    /// Matrix–vector product.
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "mul_vec: {}×{} times {}", self.rows, self.cols, v.len());
        self.data
            .chunks_exact(self.cols.max(1))
            .take(self.rows)
            .map(|row| row.iter().zip(v).map(|(a, b)| *a * *b).sum())
            .collect()
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul: {}×{} times {}×{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == T::zero() {
                    continue;
                }
                let rrow = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in orow.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.rows)
            .map(|i| self.row_slice(i).iter().map(|x| x.abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    /// Column block `k` of width `width`, i.e. the `k`-th of `[M_0 M_1 …]`.
    pub fn col_block(&self, k: usize, width: usize) -> Self {
        assert!((k + 1) * width <= self.cols, "column block out of range");
        Self::from_fn(self.rows, width, |i, j| self[(i, k * width + j)])
    }

    /// Splits the columns into `count` equal blocks.
    pub fn col_blocks(&self, count: usize) -> Result<Vec<Self>> {
        if count == 0 || self.cols % count != 0 {
            return Err(Error::Shape(format!(
                "{} columns cannot be split into {count} equal blocks",
                self.cols
            )));
        }
        let w = self.cols / count;
        Ok((0..count).map(|k| self.col_block(k, w)).collect())
    }

    /// Horizontal concatenation `[A_0 A_1 …]`.
    pub fn hcat(blocks: &[Self]) -> Result<Self> {
        let rows = blocks.first().map_or(0, |b| b.rows);
        if blocks.iter().any(|b| b.rows != rows) {
            return Err(Error::Shape("hcat: blocks differ in row count".into()));
        }
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = Self::zeros(rows, cols);
        let mut offset = 0;
        for b in blocks {
            for i in 0..rows {
                for j in 0..b.cols {
                    out[(i, offset + j)] = b[(i, j)];
                }
            }
            offset += b.cols;
        }
        Ok(out)
    }

    /// `M (x ⊗ E_w) = Σ_i x_i M_i` where `M_i` are the column blocks of width
    /// `cols / x.len()`.
    pub fn contract_leading(&self, x: &[T]) -> Self {
        let n = x.len();
        assert!(n > 0 && self.cols % n == 0, "contract_leading: width mismatch");
        let w = self.cols / n;
        let mut out = Self::zeros(self.rows, w);
        for i in 0..self.rows {
            let row = self.row_slice(i);
            for (k, &xk) in x.iter().enumerate() {
                if xk == T::zero() {
                    continue;
                }
                for j in 0..w {
                    out.data[i * w + j] += xk * row[k * w + j];
                }
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|&x| U::from_f64(to_f64(x)).unwrap_or_else(U::nan))
                .collect(),
        }
    }
}

impl<T: Real> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T: Real> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Mul for &Mat<T> {
    type Output = Mat<T>;
    fn mul(self, rhs: &Mat<T>) -> Mat<T> {
        self.matmul(rhs)
    }
}

impl<T: Real> Add for &Mat<T> {
    type Output = Mat<T>;
    fn add(self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!(self.shape(), rhs.shape(), "add: shape mismatch");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| *a + *b).collect(),
        }
    }
}

impl<T: Real> Sub for &Mat<T> {
    type Output = Mat<T>;
    fn sub(self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!(self.shape(), rhs.shape(), "sub: shape mismatch");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| *a - *b).collect(),
        }
    }
}

impl<T: Real> Neg for &Mat<T> {
    type Output = Mat<T>;
    fn neg(self) -> Mat<T> {
        self.scale(-T::one())
    }
}

impl<T: Real> AddAssign<&Mat<T>> for Mat<T> {
    fn add_assign(&mut self, rhs: &Mat<T>) {
        assert_eq!(self.shape(), rhs.shape(), "add_assign: shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += *b;
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for Mat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}×{} [", self.rows, self.cols)?;
        for row in self.data.chunks(self.cols.max(1)) {
            writeln!(f, "  {row:?}")?;
        }
        write!(f, "]")
    }
}

/// Flat addressing of Kronecker-power coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KronIndex {
    pub n: usize,
    pub order: usize,
}

impl KronIndex {
    pub fn new(n: usize, order: usize) -> Self {
        Self { n, order }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.order as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Zero-based flat position of `e_{i_1} ⊗ … ⊗ e_{i_k}`.
    pub fn flat(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.order);
        multi.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    /// Inverse of [`KronIndex::flat`].
    pub fn multi(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.order];
        for slot in out.iter_mut().rev() {
            *slot = flat % self.n;
            flat /= self.n;
        }
        out
    }
}

/// `A ⊗ B = [a_rs B]`.
pub fn kron<T: Real>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    let (m, n) = a.shape();
    let (p, q) = b.shape();
    let mut out = Mat::zeros(m * p, n * q);
    for r in 0..m {
        for s in 0..n {
            let ars = a[(r, s)];
            if ars == T::zero() {
                continue;
            }
            for i in 0..p {
                for j in 0..q {
                    out[(r * p + i, s * q + j)] = ars * b[(i, j)];
                }
            }
        }
    }
    out
}

/// Kronecker product of two vectors.
pub fn kron_vec<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        out.extend(b.iter().map(|&y| x * y));
    }
    out
}

/// Kronecker product of several vectors, left to right.
pub fn kron_vecs<T: Real>(parts: &[&[T]]) -> Vec<T> {
    parts
        .iter()
        .fold(vec![T::one()], |acc, p| kron_vec(&acc, p))
}

pub const MAX_KRON_ORDER: usize = 4;

/// `h^k`, the `k`-fold Kronecker power of a vector, `1 ≤ k ≤ 4`.
pub fn kron_pow<T: Real>(h: &[T], k: usize) -> Result<Vec<T>> {
    if !(1..=MAX_KRON_ORDER).contains(&k) {
        return Err(Error::OrderUnsupported {
            order: k,
            min: 1,
            max: MAX_KRON_ORDER,
        });
    }
    Ok((1..k).fold(h.to_vec(), |acc, _| kron_vec(&acc, h)))
}

/// `A^{⊗k}` for `k ≥ 1`.
pub fn kron_pow_mat<T: Real>(a: &Mat<T>, k: usize) -> Result<Mat<T>> {
    if !(1..=MAX_KRON_ORDER).contains(&k) {
        return Err(Error::OrderUnsupported {
            order: k,
            min: 1,
            max: MAX_KRON_ORDER,
        });
    }
    Ok((1..k).fold(a.clone(), |acc, _| kron(&acc, a)))
}

/// Star product `A * B = [A ⊗ B_1 … A ⊗ B_blocks]`, where `B_k` are the
/// equal-width column blocks of `B`.
pub fn star<T: Real>(a: &Mat<T>, b: &Mat<T>, blocks: usize) -> Result<Mat<T>> {
    let parts: Vec<Mat<T>> = b.col_blocks(blocks)?.iter().map(|bk| kron(a, bk)).collect();
    Mat::hcat(&parts)
}

/// The `sn × sn` permutation `F` with `F(u ⊗ v) = v ⊗ u` for `u ∈ Rˢ`, `v ∈ Rⁿ`.
pub fn swap_matrix<T: Real>(s: usize, n: usize) -> Mat<T> {
    let mut f = Mat::zeros(s * n, s * n);
    for i in 0..s {
        for j in 0..n {
            f[(j * s + i, i * n + j)] = T::one();
        }
    }
    f
}

/// `(A ⊗ B) v` without forming the Kronecker product: with `V[j, i] =
/// v[i·q + j]` the result is `B V Aᵀ` reshaped the same way.
pub fn apply_kron_pair<T: Real>(a: &Mat<T>, b: &Mat<T>, v: &[T]) -> Vec<T> {
    let (m, n) = a.shape();
    let (p, q) = b.shape();
    assert_eq!(v.len(), n * q, "apply_kron_pair: vector length");
    // V is q×n with V[j,i] = v[i*q + j]
    let vm = Mat::from_fn(q, n, |j, i| v[i * q + j]);
    let w = b.matmul(&vm).matmul(&a.transpose()); // p×m
    let mut out = vec![T::zero(); m * p];
    for i in 0..m {
        for j in 0..p {
            out[i * p + j] = w[(j, i)];
        }
    }
    out
}

/// `(Ψ ⊗ Ψ) v` in O(n³).
pub fn apply_kron_inv_pair<T: Real>(psi: &Mat<T>, v: &[T]) -> Vec<T> {
    apply_kron_pair(psi, psi, v)
}

/// LU factorisation with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: Mat<T>,
    perm: Vec<usize>,
    norm: T,
}

impl<T: Real> Lu<T> {
    pub fn factor(a: &Mat<T>) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::Shape(format!("LU of non-square {}×{} matrix", n, a.cols())));
        }
        let norm = a.norm_inf();
        let threshold = T::pivot_tol() * norm;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -T::one()), |best, c| if c.1 > best.1 { c } else { best });
            if !(pmax > threshold) || pmax == T::zero() {
                let est = if pmax > T::zero() {
                    to_f64(norm / pmax)
                } else {
                    f64::INFINITY
                };
                return Err(Error::Singular { cond_estimate: est });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let l = lu[(i, k)] / pivot;
                lu[(i, k)] = l;
                if l == T::zero() {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= l * u;
                }
            }
        }
        Ok(Self { lu, perm, norm })
    }

    pub fn solve_vec(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n);
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                let l = self.lu[(i, j)];
                let xj = x[j];
                x[i] -= l * xj;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let u = self.lu[(i, j)];
                let xj = x[j];
                x[i] -= u * xj;
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }

    pub fn solve(&self, b: &Mat<T>) -> Mat<T> {
        assert_eq!(b.rows(), self.lu.rows(), "LU solve: row mismatch");
        let mut out = Mat::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            out.set_col(j, &self.solve_vec(&b.col(j)));
        }
        out
    }

    pub fn inverse(&self) -> Mat<T> {
        self.solve(&Mat::identity(self.lu.rows()))
    }

    /// `‖A‖∞ ‖A⁻¹‖∞` computed from the explicit inverse.
    pub fn cond_inf(&self) -> T {
        self.norm * self.inverse().norm_inf()
    }

    pub fn det(&self) -> T {
        let n = self.lu.rows();
        let mut d = (0..n).map(|i| self.lu[(i, i)]).fold(T::one(), |a, b| a * b);
        // parity of the permutation
        let mut seen = vec![false; n];
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut j = start;
            while !seen[j] {
                seen[j] = true;
                j = self.perm[j];
                len += 1;
            }
            if len % 2 == 0 {
                d = -d;
            }
        }
        d
    }
}

/// Solves `A X = B`.
pub fn lu_solve<T: Real>(a: &Mat<T>, b: &Mat<T>) -> Result<Mat<T>> {
    if b.rows() != a.rows() {
        return Err(Error::Shape(format!(
            "right-hand side has {} rows, matrix has {}",
            b.rows(),
            a.rows()
        )));
    }
    Ok(Lu::factor(a)?.solve(b))
}

/// Inverse together with its ∞-norm condition number.
pub fn inverse_with_cond<T: Real>(a: &Mat<T>) -> Result<(Mat<T>, T)> {
    let lu = Lu::factor(a)?;
    let inv = lu.inverse();
    let cond = a.norm_inf() * inv.norm_inf();
    Ok((inv, cond))
}
