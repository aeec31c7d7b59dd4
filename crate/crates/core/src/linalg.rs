//! Small dense linear algebra: row-major matrices and a Cholesky factor
//! for the weighted normal equations.

use crate::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn add_to(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] += v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// `self * x`.
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    /// `selfᵀ · diag(w) · y`.
    pub fn weighted_transpose_mul(&self, w: &[T], y: &[T]) -> Vec<T> {
        assert_eq!(w.len(), self.rows);
        assert_eq!(y.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for r in 0..self.rows {
            let wy = w[r] * y[r];
            if wy == T::zero() {
                continue;
            }
            for (o, &h) in out.iter_mut().zip(self.row(r)) {
                *o += h * wy;
            }
        }
        out
    }

    /// Weighted Gram matrix `selfᵀ · diag(w) · self`.
    pub fn weighted_gram(&self, w: &[T]) -> DenseMatrix<T> {
        assert_eq!(w.len(), self.rows);
        let n = self.cols;
        let mut g = DenseMatrix::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let wi = w[r] * row[i];
                if wi == T::zero() {
                    continue;
                }
                for j in i..n {
                    g.data[i * n + j] += wi * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g.data[i * n + j] = g.data[j * n + i];
            }
        }
        g
    }
}

/// Columns of a symmetric matrix whose Cholesky pivots vanished.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankDeficiency {
    pub columns: Vec<usize>,
}

/// Lower-triangular Cholesky factor `G = L·Lᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cholesky<T> {
    n: usize,
    lower: Vec<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factors a symmetric positive-definite matrix.
    ///
    /// A pivot is treated as vanished when it falls below `1e3·ε` times the
    /// matrix's own diagonal entry; every such column is reported, not just
    /// the first.
    pub fn factor(g: &DenseMatrix<T>) -> Result<Self, RankDeficiency> {
        assert_eq!(g.rows(), g.cols(), "gain matrix must be square");
        let n = g.rows();
        let tol = T::epsilon() * T::lit(1e3);
        let mut l = vec![T::zero(); n * n];
        let mut deficient = Vec::new();
        for j in 0..n {
            let mut d = g.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > tol * g.get(j, j).abs()) || !(d > T::zero()) {
                deficient.push(j);
                // Leave the column zero so the remaining pivots can still be inspected.
                continue;
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in (j + 1)..n {
                let mut s = g.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        if deficient.is_empty() {
            Ok(Self { n, lower: l })
        } else {
            Err(RankDeficiency {
                columns: deficient,
            })
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    /// Solves `L·Lᵀ·x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.lower[i * n + k] * b[k];
            }
            b[i] = s / self.lower[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.lower[k * n + i] * b[k];
            }
            b[i] = s / self.lower[i * n + i];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
