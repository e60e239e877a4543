use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::Expr;

/// Dense row-major matrix of expressions.
#[derive(Debug, Clone)]
pub struct ExprMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Expr>,
}

impl ExprMatrix {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Expr) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        ExprMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<Expr>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged matrix rows".into()));
        }
        Ok(ExprMatrix {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ExprMatrix::from_fn(rows, cols, |_, _| Expr::zero())
    }

    pub fn identity(n: usize) -> Self {
        ExprMatrix::from_fn(n, n, |i, j| if i == j { Expr::one() } else { Expr::zero() })
    }

    pub fn constant(m: &DMatrix<f64>) -> Self {
        ExprMatrix::from_fn(m.nrows(), m.ncols(), |i, j| Expr::constant(m[(i, j)]))
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Expr {
        &self.data[i * self.cols + j]
    }

    pub fn entries(&self) -> &[Expr] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        ExprMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    pub fn map(&self, f: impl Fn(&Expr) -> Expr) -> Self {
        ExprMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn add(&self, other: &ExprMatrix) -> Self {
        ExprMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j) + other.get(i, j))
    }

    pub fn sub(&self, other: &ExprMatrix) -> Self {
        ExprMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j) - other.get(i, j))
    }

    pub fn scale(&self, s: &Expr) -> Self {
        self.map(|e| e * s)
    }

    pub fn div_scalar(&self, s: &Expr) -> Self {
        self.map(|e| e / s)
    }

    pub fn neg(&self) -> Self {
        self.map(|e| -e)
    }

    pub fn matmul(&self, other: &ExprMatrix) -> Self {
        assert_eq!(self.cols, other.rows);
        ExprMatrix::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).map(|k| self.get(i, k) * other.get(k, j)).sum()
        })
    }

    pub fn differentiate(&self, var: usize) -> Self {
        self.map(|e| e.differentiate(var))
    }

    fn minor(&self, skip_row: usize, skip_col: usize) -> ExprMatrix {
        let keep_rows: Vec<usize> = (0..self.rows).filter(|&r| r != skip_row).collect();
        let keep_cols: Vec<usize> = (0..self.cols).filter(|&c| c != skip_col).collect();
        ExprMatrix::from_fn(keep_rows.len(), keep_cols.len(), |i, j| {
            self.get(keep_rows[i], keep_cols[j]).clone()
        })
    }

    /// Determinant by cofactor expansion; supports sizes up to 4.
    pub fn det(&self) -> Result<Expr> {
        if self.rows != self.cols {
            return Err(Error::Shape("determinant of a non-square matrix".into()));
        }
        if self.rows > 4 {
            return Err(Error::Unsupported(format!(
                "symbolic inverse of a {0}x{0} matrix (rank at most 4)",
                self.rows
            )));
        }
        Ok(self.det_unchecked())
    }

    fn det_unchecked(&self) -> Expr {
        match self.rows {
            0 => Expr::one(),
            1 => self.get(0, 0).clone(),
            2 => self.get(0, 0) * self.get(1, 1) - self.get(0, 1) * self.get(1, 0),
            n => (0..n)
                .map(|j| {
                    let term = self.get(0, j) * self.minor(0, j).det_unchecked();
                    if j % 2 == 0 {
                        term
                    } else {
                        -term
                    }
                })
                .sum(),
        }
    }

    /// Classical adjugate: `A * adj(A) = det(A) I`.
    pub fn adjugate(&self) -> Result<ExprMatrix> {
        self.det()?;
        let n = self.rows;
        if n == 1 {
            return Ok(ExprMatrix::identity(1));
        }
        Ok(ExprMatrix::from_fn(n, n, |i, j| {
            let c = self.minor(j, i).det_unchecked();
            if (i + j) % 2 == 0 {
                c
            } else {
                -c
            }
        }))
    }

    /// Inverse as adjugate over determinant, with the shared determinant.
    pub fn inverse(&self) -> Result<(ExprMatrix, Expr)> {
        let det = self.det()?;
        Ok((self.adjugate()?.div_scalar(&det), det))
    }

    /// Entries are structurally identical or print the same.
    pub fn is_structurally_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| {
                (0..i).all(|j| {
                    let (a, b) = (self.get(i, j), self.get(j, i));
                    a.ptr_eq(b) || a.to_string() == b.to_string()
                })
            })
    }

    pub fn to_strings(&self) -> Vec<Vec<String>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j).to_string()).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn m(rows: &[&[&str]]) -> ExprMatrix {
        ExprMatrix::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|s| parse(s).unwrap()).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn inverse_by_adjugate() {
        let a = m(&[&["x1", "1", "0"], &["2", "x2", "1"], &["0", "1", "3"]]);
        let (inv, _) = a.inverse().unwrap();
        let prod = a.matmul(&inv);
        let x = [1.5, -0.5];
        for i in 0..3 {
            for j in 0..3 {
                let v = prod.get(i, j).eval(&x).unwrap();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_inverse_folds() {
        let a = m(&[&["2", "0"], &["0", "4"]]);
        let (inv, det) = a.inverse().unwrap();
        assert_eq!(det.as_const(), Some(8.0));
        assert_eq!(inv.get(1, 1).as_const(), Some(0.25));
        assert!(inv.get(0, 1).is_zero());
    }

    #[test]
    fn determinant_size_limit() {
        assert!(ExprMatrix::identity(5).det().is_err());
        assert_eq!(ExprMatrix::identity(4).det().unwrap().as_const(), Some(1.0));
    }
}
