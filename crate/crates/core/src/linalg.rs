//! Small dense linear algebra for normal equations.

use alloc::vec;
use alloc::vec::Vec;

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

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    /// Builds a matrix from a flat row-major buffer.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len());
        Matrix { rows, cols, data }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `Xᵀ diag(w) X` and `Xᵀ (w ∘ z)` in one pass.
    pub fn weighted_normal_equations(&self, w: &[f64], z: &[f64]) -> (Matrix, Vec<f64>) {
        let p = self.cols;
        let mut xtwx = Matrix::zeros(p, p);
        let mut xtwz = vec![0.0; p];
        for i in 0..self.rows {
            let wi = w[i];
            if wi == 0.0 {
                continue;
            }
            let x = self.row(i);
            let wz = wi * z[i];
            for a in 0..p {
                let wxa = wi * x[a];
                if wxa == 0.0 {
                    continue;
                }
                xtwz[a] += x[a] * wz;
                let row = &mut xtwx.data[a * p..(a + 1) * p];
                for b in a..p {
                    row[b] += wxa * x[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx.data[a * p + b] = xtwx.data[b * p + a];
            }
        }
        (xtwx, xtwz)
    }

    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| dot(self.row(i), beta))
            .collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cholesky factor of a symmetric positive semi-definite matrix in which
/// columns that are (numerically) linear combinations of earlier columns are
/// dropped, in column order.
#[derive(Debug, Clone)]
pub struct PivotedCholesky {
    n: usize,
    l: Vec<f64>,
    kept: Vec<bool>,
}

/// Relative pivot threshold below which a column counts as collinear.
pub const COLLINEARITY_TOL: f64 = 1e-9;

impl PivotedCholesky {
    pub fn factor(a: &Matrix) -> Self {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        let mut l = vec![0.0; n * n];
        let mut kept = vec![false; n];
        for j in 0..n {
            let ajj = a.get(j, j);
            let mut d = ajj;
            for k in 0..j {
                if kept[k] {
                    d -= l[j * n + k] * l[j * n + k];
                }
            }
            if !(ajj > 0.0) || d <= COLLINEARITY_TOL * ajj {
                continue;
            }
            kept[j] = true;
            let djj = libm::sqrt(d);
            l[j * n + j] = djj;
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    if kept[k] {
                        s -= l[i * n + k] * l[j * n + k];
                    }
                }
                l[i * n + j] = s / djj;
            }
        }
        PivotedCholesky { n, l, kept }
    }

    /// Indices of the dropped columns.
    pub fn dropped(&self) -> Vec<usize> {
        (0..self.n).filter(|&j| !self.kept[j]).collect()
    }

    /// Solves `A x = b`, with `x_j = 0` for dropped columns.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            if !self.kept[i] {
                continue;
            }
            let mut s = b[i];
            for k in 0..i {
                if self.kept[k] {
                    s -= self.l[i * n + k] * y[k];
                }
            }
            y[i] = s / self.l[i * n + i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            if !self.kept[i] {
                continue;
            }
            let mut s = y[i];
            for k in (i + 1)..n {
                if self.kept[k] {
                    s -= self.l[k * n + i] * x[k];
                }
            }
            x[i] = s / self.l[i * n + i];
        }
        x
    }
}
