//! Dense helpers around nalgebra's SVD: ranks, null spaces, canonical bases.

use nalgebra::{DMatrix, DVector};

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Number of singular values above `rel_tol * largest`.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(a);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > rel_tol * top).count(),
        _ => 0,
    }
}

/// Number of singular values above `tol * scale`; for parts of a larger
/// object, where a relative cutoff would promote rounding noise to rank.
pub fn rank_relative_to(a: &DMatrix<f64>, tol: f64, scale: f64) -> usize {
    singular_values(a).iter().filter(|&&v| v > tol * scale).count()
}

/// Orthonormal basis (as columns) of `{v : |A v| <= cutoff |v|}`: the right
/// singular vectors whose singular value is at most `cutoff`.
pub fn null_space(a: &DMatrix<f64>, cutoff: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // Pad to at least n rows so the SVD returns a full set of right vectors.
    let rows = a.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= cutoff)
        .map(|(k, _)| v_t.row(k).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Kernel cutoff used for constraint stacks: relative to the largest
/// singular value, but never below `tol` in absolute terms.
pub fn kernel_cutoff(a: &DMatrix<f64>, tol: f64) -> f64 {
    let top = singular_values(a).first().copied().unwrap_or(0.0);
    tol * top.max(1.0)
}

/// A representation of the column span that does not depend on which basis
/// was supplied: reduced row echelon form of the transposed basis, then
/// Gram-Schmidt in pivot order. Columns of the result are orthonormal.
pub fn canonical_basis(span: &DMatrix<f64>, pivot_tol: f64) -> DMatrix<f64> {
    let n = span.nrows();
    let k = span.ncols();
    if k == 0 {
        return DMatrix::zeros(n, 0);
    }
    // rows = basis vectors
    let mut m = span.transpose();
    let mut pivot_row = 0;
    for col in 0..n {
        if pivot_row == k {
            break;
        }
        let (best, best_val) = (pivot_row..k)
            .map(|r| (r, m[(r, col)].abs()))
            .fold((pivot_row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best_val <= pivot_tol {
            continue;
        }
        m.swap_rows(pivot_row, best);
        let p = m[(pivot_row, col)];
        for c in 0..n {
            m[(pivot_row, c)] /= p;
        }
        for r in 0..k {
            if r != pivot_row {
                let f = m[(r, col)];
                if f != 0.0 {
                    for c in 0..n {
                        let v = m[(pivot_row, c)];
                        m[(r, c)] -= f * v;
                    }
                }
            }
        }
        pivot_row += 1;
    }
    let mut out: Vec<DVector<f64>> = Vec::new();
    for r in 0..pivot_row {
        let mut v: DVector<f64> = m.row(r).transpose();
        for u in &out {
            let d = u.dot(&v);
            v -= u * d;
        }
        let norm = v.norm();
        if norm > pivot_tol {
            out.push(v / norm);
        }
    }
    if out.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&out)
    }
}

/// Row-major flattening of an r×r matrix: entry (a, b) goes to `a*r + b`.
pub fn vec_row_major(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.len(), m.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()))
}

pub fn unvec_row_major(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, v.as_slice())
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()))
}

/// Ratio of extreme singular values (infinite when singular).
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_wide_matrix() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let ns = null_space(&a, 1e-12);
        assert_eq!(ns.ncols(), 2);
        assert!(max_abs(&(&a * &ns)) < 1e-14);
    }

    #[test]
    fn canonical_basis_ignores_input_basis() {
        let b1 = DMatrix::from_column_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let b2 = DMatrix::from_column_slice(4, 2, &[1.0, 2.0, 0.0, 1.0, -1.0, 3.0, 0.0, -1.0]);
        let c1 = canonical_basis(&b1, 1e-10);
        let c2 = canonical_basis(&b2, 1e-10);
        assert!(max_abs(&(&c1 - &c2)) < 1e-12);
        let s = 0.5f64.sqrt();
        assert!((c1[(0, 0)] - s).abs() < 1e-15 && (c1[(3, 0)] - s).abs() < 1e-15);
        assert_eq!(c1[(1, 1)], 1.0);
    }

    #[test]
    fn rank_and_condition() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(numerical_rank(&a, 1e-8), 1);
        assert!(condition_number(&a) > 1e12);
        assert_eq!(numerical_rank(&DMatrix::zeros(2, 2), 1e-8), 0);
    }
}
