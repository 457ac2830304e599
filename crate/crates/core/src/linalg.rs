//! Small dense linear algebra: row-major matrices, LU with partial pivoting
//! and a shifted power iteration for nonnegative matrices.

use std::ops::{Index, IndexMut};

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::scalar::{lit, Scalar};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone + Zero> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }
}

impl<T: Clone> DenseMatrix<T> {
    /// Builds a matrix from equally long rows. Panics on ragged input.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == m), "ragged rows");
        Self {
            rows: n,
            cols: m,
            data: rows.into_iter().flatten().collect(),
        }
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

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// Entrywise conversion into another element type.
    pub fn map<U, F: FnMut(&T) -> U>(&self, f: F) -> DenseMatrix<U> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// Row vector times matrix.
    pub fn vecmat(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.rows, v.len());
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + vi * a;
            }
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|&x| x * s)
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }
}

/// LU factorization `PA = LU` with partial pivoting, packed in one matrix.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: DenseMatrix<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    /// Factors a square matrix. Returns `None` when a pivot underflows the
    /// relative threshold, i.e. the matrix is numerically singular.
    pub fn factor(a: &DenseMatrix<T>) -> Option<Self> {
        assert!(a.is_square(), "LU of non-square matrix");
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.norm_inf().max(T::min_positive_value());
        let threshold = scale * T::epsilon() * lit(n.max(1) as f64);
        for k in 0..n {
            let (p, pivot) =
                (k..n)
                    .map(|i| (i, lu[(i, k)].abs()))
                    .fold((k, -T::one()), |acc, x| if x.1 > acc.1 { x } else { acc });
            if !(pivot > threshold) {
                return None;
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
            }
            let d = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / d;
                lu[(i, k)] = f;
                if f != T::zero() {
                    for j in k + 1..n {
                        lu[(i, j)] = lu[(i, j)] - f * lu[(k, j)];
                    }
                }
            }
        }
        Some(Self { lu, perm })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.perm.len();
        assert_eq!(b.len(), n);
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] = x[i] - self.lu[(i, k)] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                x[i] = x[i] - self.lu[(i, k)] * x[k];
            }
            x[i] = x[i] / self.lu[(i, i)];
        }
        x
    }

    pub fn inverse(&self) -> DenseMatrix<T> {
        let n = self.perm.len();
        let mut inv = DenseMatrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// Solves `A x = b`, `None` if `A` is numerically singular.
pub fn solve<T: Scalar>(a: &DenseMatrix<T>, b: &[T]) -> Option<Vec<T>> {
    Lu::factor(a).map(|lu| lu.solve(b))
}

/// Result of a Perron-Frobenius power iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PerronEigen<T> {
    pub value: T,
    /// Eigenvector normalized to unit max-norm.
    pub vector: Vec<T>,
    /// `‖A v − λ v‖_∞` for the returned pair.
    pub residual: T,
    pub iterations: usize,
}

/// Dominant eigenpair of a nonnegative square matrix.
///
/// Iterates on `A + I`, which is primitive whenever `A` is irreducible, so
/// bipartite matrices such as `[[0,3],[2,0]]` converge. Starts from the
/// all-ones vector and stops once both the norm and the normalized vector
/// have settled to `rel_tol`.
pub fn perron_eigen<T: Scalar>(a: &DenseMatrix<T>, rel_tol: T, max_iter: usize) -> PerronEigen<T> {
    let n = a.rows();
    assert!(a.is_square());
    if n == 0 {
        return PerronEigen {
            value: T::zero(),
            vector: vec![],
            residual: T::zero(),
            iterations: 0,
        };
    }
    let mut v = vec![T::one(); n];
    let mut shifted = T::zero();
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        let av = a.matvec(&v);
        let w: Vec<T> = av.iter().zip(&v).map(|(&x, &y)| x + y).collect();
        let norm = w.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        if norm == T::zero() {
            shifted = T::zero();
            v = w;
            break;
        }
        let next: Vec<T> = w.into_iter().map(|x| x / norm).collect();
        let moved = next
            .iter()
            .zip(&v)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max);
        // Reducible matrices can keep the norm fixed while the vector still
        // moves, so both must settle.
        let done = (norm - shifted).abs() <= rel_tol * norm && moved <= rel_tol;
        v = next;
        shifted = norm;
        if done && it > 1 {
            break;
        }
    }
    let value = shifted - T::one();
    let av = a.matvec(&v);
    let residual = av
        .iter()
        .zip(&v)
        .map(|(&x, &y)| (x - value * y).abs())
        .fold(T::zero(), T::max);
    PerronEigen {
        value,
        vector: v,
        residual,
        iterations,
    }
}
