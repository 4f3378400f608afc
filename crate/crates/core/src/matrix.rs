//! Dense row-major matrices and the small linear solvers used by the fitting
//! code.
//!
//! Everything here accumulates sums in a fixed left-to-right order over the
//! row index, so repeated runs on the same input produce bit-identical
//! results.

/// A dense row-major matrix of `f64`. Zero-column matrices keep their row
/// count (they appear as intercept-only designs).
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Creates an `nrows x ncols` matrix filled with zeros.
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Matrix {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    /// Builds a matrix from row slices. All rows must have the same length.
    ///
    /// # Panics
    /// Panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for row in rows {
            assert_eq!(row.len(), ncols, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix {
            nrows: rows.len(),
            ncols,
            data,
        }
    }

    /// Builds a matrix from column vectors of equal length.
    ///
    /// # Panics
    /// Panics if the columns are ragged.
    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let nrows = columns.first().map_or(0, Vec::len);
        let ncols = columns.len();
        let mut data = vec![0.0; nrows * ncols];
        for (j, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), nrows, "ragged columns");
            for (i, &v) in col.iter().enumerate() {
                data[i * ncols + j] = v;
            }
        }
        Matrix { nrows, ncols, data }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.ncols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.ncols + col] = value;
    }

    /// The `row`-th row as a slice.
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.ncols..(row + 1) * self.ncols]
    }

    /// Returns a copy with a leading column of ones (the intercept column).
    pub fn with_intercept(&self) -> Matrix {
        let nrows = self.nrows();
        let mut out = Matrix::zeros(nrows, self.ncols + 1);
        for i in 0..nrows {
            out.set(i, 0, 1.0);
            for j in 0..self.ncols {
                out.set(i, j + 1, self.get(i, j));
            }
        }
        out
    }

    /// Returns the matrix restricted to the given rows (with repetition
    /// allowed), in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.ncols);
        for &r in rows {
            assert!(r < self.nrows, "row index out of bounds");
            data.extend_from_slice(self.row(r));
        }
        Matrix {
            nrows: rows.len(),
            ncols: self.ncols,
            data,
        }
    }

    /// `true` if every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Dot product accumulated left to right.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Solves `A x = b` for a symmetric positive definite `A` (given in row-major
/// order, `dim * dim` entries) via Cholesky factorization.
///
/// Returns `None` when a pivot falls below `1e-13` times the largest diagonal
/// entry, which is how rank deficiency surfaces to callers.
pub fn solve_spd(a: &[f64], dim: usize, b: &[f64]) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), dim * dim);
    debug_assert_eq!(b.len(), dim);
    let mut l = vec![0.0; dim * dim];
    let max_diag = (0..dim).fold(0.0f64, |m, i| m.max(a[i * dim + i].abs()));
    let floor = 1e-13 * max_diag.max(f64::MIN_POSITIVE);
    for j in 0..dim {
        for i in j..dim {
            let mut sum = a[i * dim + j];
            for k in 0..j {
                sum -= l[i * dim + k] * l[j * dim + k];
            }
            if i == j {
                if sum <= floor {
                    return None;
                }
                l[j * dim + j] = sum.sqrt();
            } else {
                l[i * dim + j] = sum / l[j * dim + j];
            }
        }
    }
    // Forward then backward substitution.
    let mut y = vec![0.0; dim];
    for i in 0..dim {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * dim + k] * y[k];
        }
        y[i] = sum / l[i * dim + i];
    }
    let mut x = vec![0.0; dim];
    for i in (0..dim).rev() {
        let mut sum = y[i];
        for k in (i + 1)..dim {
            sum -= l[k * dim + i] * x[k];
        }
        x[i] = sum / l[i * dim + i];
    }
    Some(x)
}

/// Inverts a square matrix by Gauss-Jordan elimination with partial pivoting
/// and reports the 1-norm condition number `‖A‖₁ ‖A⁻¹‖₁`.
///
/// Returns `None` for an exactly singular matrix (pivot below `1e-300`).
pub fn invert_with_condition(a: &[f64], dim: usize) -> Option<(Vec<f64>, f64)> {
    debug_assert_eq!(a.len(), dim * dim);
    let norm_a = one_norm(a, dim);
    let mut aug = vec![0.0; dim * 2 * dim];
    let w = 2 * dim;
    for i in 0..dim {
        for j in 0..dim {
            aug[i * w + j] = a[i * dim + j];
        }
        aug[i * w + dim + i] = 1.0;
    }
    for col in 0..dim {
        let mut pivot_row = col;
        let mut pivot_val = aug[col * w + col].abs();
        for row in (col + 1)..dim {
            let v = aug[row * w + col].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = row;
            }
        }
        if pivot_val < 1e-300 {
            return None;
        }
        if pivot_row != col {
            for j in 0..w {
                aug.swap(col * w + j, pivot_row * w + j);
            }
        }
        let pivot = aug[col * w + col];
        for j in 0..w {
            aug[col * w + j] /= pivot;
        }
        for row in 0..dim {
            if row == col {
                continue;
            }
            let factor = aug[row * w + col];
            if factor != 0.0 {
                for j in 0..w {
                    aug[row * w + j] -= factor * aug[col * w + j];
                }
            }
        }
    }
    let mut inv = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            inv[i * dim + j] = aug[i * w + dim + j];
        }
    }
    let cond = norm_a * one_norm(&inv, dim);
    Some((inv, cond))
}

fn one_norm(a: &[f64], dim: usize) -> f64 {
    let mut best = 0.0f64;
    for j in 0..dim {
        let mut s = 0.0;
        for i in 0..dim {
            s += a[i * dim + j].abs();
        }
        best = best.max(s);
    }
    best
}
