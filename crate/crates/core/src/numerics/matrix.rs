//! Small dense matrices in row-major order with LU-based solves.
//!
//! Every dimension in this crate is tiny (p + q rarely exceeds 10), so a
//! plain `Vec<f64>` store with partial-pivoting LU is both simpler and
//! faster than pulling in a full linear-algebra stack. All inversions go
//! through [`Matrix::solve`] so that a condition estimate is always
//! available; callers surface condition blow-ups as degenerate-information
//! errors.

use crate::error::{Error, Result};

/// Condition-number estimate above which a solve is refused.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Dense row-major matrix.
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

    /// Build from entries in row-major order; `data.len()` must equal `rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "entry count must be rows * cols");
        Matrix { rows, cols, data }
    }

    /// Column vector from a slice.
    pub fn column(values: &[f64]) -> Self {
        Matrix::from_row_major(values.len(), 1, values.to_vec())
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

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "dimension mismatch");
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += self[(i, j)] * x[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn scale(&self, s: f64) -> Matrix {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= s;
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(&other.data) {
            *v += w;
        }
        out
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(&other.data) {
            *v -= w;
        }
        out
    }

    pub fn trace(&self) -> f64 {
        assert!(self.is_square(), "trace requires a square matrix");
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    /// Symmetrize in place: A <- (A + A') / 2.
    pub fn symmetrize(&mut self) {
        assert!(self.is_square());
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let m = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = m;
                self[(j, i)] = m;
            }
        }
    }

    /// Max-row-sum (infinity) norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Quadratic form x' A x for a square A.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        assert!(self.is_square() && x.len() == self.rows);
        let ax = self.matvec(x);
        x.iter().zip(&ax).map(|(a, b)| a * b).sum()
    }

    /// Whether all entries are finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Maximum absolute asymmetry |A_ij - A_ji|.
    pub fn asymmetry(&self) -> f64 {
        assert!(self.is_square());
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Solve A X = B by LU with partial pivoting, refusing near-singular
    /// systems (condition estimate above [`CONDITION_LIMIT`]).
    pub fn solve(&self, rhs: &Matrix) -> Result<Matrix> {
        let lu = LuDecomposition::new(self)?;
        lu.check_condition(self)?;
        lu.solve(rhs)
    }

    /// Explicit inverse via [`Matrix::solve`] against the identity.
    pub fn inverse(&self) -> Result<Matrix> {
        self.solve(&Matrix::identity(self.rows))
    }

    /// Condition estimate ‖A‖∞ ‖A⁻¹‖∞ (exact inverse; fine at these sizes).
    pub fn condition_estimate(&self) -> f64 {
        match LuDecomposition::new(self).and_then(|lu| lu.solve(&Matrix::identity(self.rows))) {
            Ok(inv) => self.norm_inf() * inv.norm_inf(),
            Err(_) => f64::INFINITY,
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

struct LuDecomposition {
    lu: Matrix,
    perm: Vec<usize>,
}

impl LuDecomposition {
    fn new(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Domain("solve requires a square matrix".into()));
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut pivot_row = k;
            let mut pivot_val = lu[(k, k)].abs();
            for r in (k + 1)..n {
                let v = lu[(r, k)].abs();
                if v > pivot_val {
                    pivot_val = v;
                    pivot_row = r;
                }
            }
            if pivot_val == 0.0 || !pivot_val.is_finite() {
                return Err(Error::NearSingular {
                    condition: f64::INFINITY,
                    context: format!("zero pivot in column {k}"),
                });
            }
            if pivot_row != k {
                for c in 0..n {
                    let tmp = lu[(k, c)];
                    lu[(k, c)] = lu[(pivot_row, c)];
                    lu[(pivot_row, c)] = tmp;
                }
                perm.swap(k, pivot_row);
            }
            for r in (k + 1)..n {
                let factor = lu[(r, k)] / lu[(k, k)];
                lu[(r, k)] = factor;
                for c in (k + 1)..n {
                    let v = lu[(k, c)];
                    lu[(r, c)] -= factor * v;
                }
            }
        }
        Ok(LuDecomposition { lu, perm })
    }

    fn solve(&self, rhs: &Matrix) -> Result<Matrix> {
        let n = self.lu.rows;
        if rhs.rows != n {
            return Err(Error::Domain("rhs row count mismatch".into()));
        }
        let m = rhs.cols;
        let mut x = Matrix::zeros(n, m);
        for col in 0..m {
            // forward substitution on the permuted rhs
            let mut y = vec![0.0; n];
            for i in 0..n {
                let mut acc = rhs[(self.perm[i], col)];
                for j in 0..i {
                    acc -= self.lu[(i, j)] * y[j];
                }
                y[i] = acc;
            }
            // back substitution
            for i in (0..n).rev() {
                let mut acc = y[i];
                for j in (i + 1)..n {
                    acc -= self.lu[(i, j)] * x[(j, col)];
                }
                x[(i, col)] = acc / self.lu[(i, i)];
            }
        }
        if !x.is_finite() {
            return Err(Error::NearSingular {
                condition: f64::INFINITY,
                context: "non-finite solution".into(),
            });
        }
        Ok(x)
    }

    fn check_condition(&self, a: &Matrix) -> Result<()> {
        let inv = self.solve(&Matrix::identity(a.rows))?;
        let cond = a.norm_inf() * inv.norm_inf();
        if !cond.is_finite() || cond > CONDITION_LIMIT {
            return Err(Error::NearSingular {
                condition: cond,
                context: "condition estimate above limit".into(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_solve_returns_rhs() {
        let b = Matrix::from_row_major(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = Matrix::identity(3).solve(&b).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn scaled_identity_solve() {
        let a = Matrix::identity(2).scale(2.0);
        let x = a.solve(&Matrix::identity(2)).unwrap();
        assert_relative_eq!(x[(0, 0)], 0.5);
        assert_relative_eq!(x[(1, 1)], 0.5);
        assert_relative_eq!(x[(0, 1)], 0.0);
    }

    #[test]
    fn two_by_two_closed_form_inverse() {
        // [[2,1],[1,2]]^{-1} = (1/3) [[2,-1],[-1,2]]
        let a = Matrix::from_row_major(2, 2, vec![2.0, 1.0, 1.0, 2.0]);
        let inv = a.inverse().unwrap();
        assert_relative_eq!(inv[(0, 0)], 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(inv[(0, 1)], -1.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(inv[(1, 0)], -1.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(inv[(1, 1)], 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn singular_matrix_is_signalled() {
        let a = Matrix::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 4.0]);
        match a.solve(&Matrix::identity(2)) {
            Err(Error::NearSingular { .. }) => {}
            other => panic!("expected near-singular error, got {other:?}"),
        }
    }

    #[test]
    fn near_singular_condition_is_signalled() {
        let a = Matrix::from_row_major(2, 2, vec![1.0, 1.0, 1.0, 1.0 + 1e-14]);
        match a.solve(&Matrix::identity(2)) {
            Err(Error::NearSingular { condition, .. }) => assert!(condition > 1e12),
            other => panic!("expected near-singular error, got {other:?}"),
        }
    }

    #[test]
    fn quadratic_form_matches_hand_value() {
        let a = Matrix::from_row_major(2, 2, vec![2.0, 1.0, 1.0, 3.0]);
        // x = (1, 2): x'Ax = 2 + 2 + 2 + 12 = 18
        assert_relative_eq!(a.quadratic_form(&[1.0, 2.0]), 18.0);
    }

    #[test]
    fn solve_round_trip_random_systems() {
        // deterministic congruential fill; checks A * solve(A,B) = B
        let mut state: u64 = 0x9e3779b97f4a7c15;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for n in 1..=6 {
            let mut a = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    a[(i, j)] = next();
                }
                a[(i, i)] += 4.0; // diagonally dominant, well conditioned
            }
            let b = {
                let mut b = Matrix::zeros(n, 2);
                for i in 0..n {
                    b[(i, 0)] = next();
                    b[(i, 1)] = next();
                }
                b
            };
            let x = a.solve(&b).unwrap();
            let res = a.matmul(&x).sub(&b).norm_inf();
            assert!(res <= 1e-8 * b.norm_inf().max(1.0), "residual {res} too large");
        }
    }
}
