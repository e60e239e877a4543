#![allow(dead_code)]

pub mod quadrature;

use metron_core::bundle::Connection;
use metron_core::linalg::vec_row_major;
use metron_core::transport::{transport_vector, PolylinePath};
use nalgebra::{DMatrix, DVector};

/// Rank by Gaussian elimination with partial pivoting.
pub fn elimination_rank(a: &DMatrix<f64>, tol: f64) -> usize {
    let mut a = a.clone();
    let (rows, cols) = a.shape();
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let p = (rank..rows).max_by(|&i, &j| a[(i, c)].abs().total_cmp(&a[(j, c)].abs())).unwrap();
        if a[(p, c)].abs() <= tol {
            continue;
        }
        a.swap_rows(p, rank);
        for i in rank + 1..rows {
            let f = a[(i, c)] / a[(rank, c)];
            for k in c..cols {
                a[(i, k)] -= f * a[(rank, k)];
            }
        }
        rank += 1;
    }
    rank
}

/// Parallel transport around rectangles `x0 → x0 + (dx, 0) → x0 + (dx, dy)
/// → x0 + (0, dy) → x0`, as matrices acting on coordinate columns.
pub fn loop_holonomies(nabla: &Connection, x0: &[f64], loops: &[(f64, f64)]) -> Vec<DMatrix<f64>> {
    let r = nabla.rank();
    loops
        .iter()
        .map(|&(dx, dy)| {
            let corners = vec![
                x0.to_vec(),
                vec![x0[0] + dx, x0[1]],
                vec![x0[0] + dx, x0[1] + dy],
                vec![x0[0], x0[1] + dy],
                x0.to_vec(),
            ];
            let path = PolylinePath::new(corners, 128).unwrap();
            let mut h = DMatrix::zeros(r, r);
            for k in 0..r {
                let e = DVector::from_fn(r, |a, _| if a == k { 1.0 } else { 0.0 });
                h.set_column(k, &transport_vector(nabla, &path, &e).unwrap().end_frame.column(0));
            }
            h
        })
        .collect()
}

/// Dimension of the symmetric forms `Q` with `Hᵀ Q H = Q` for every `H`.
/// A parallel form takes equal values on parallel sections, so its value at
/// the base point is such a `Q`.
pub fn invariant_symmetric_forms(holonomies: &[DMatrix<f64>], tol: f64) -> usize {
    let r = holonomies[0].nrows();
    let basis: Vec<DMatrix<f64>> = (0..r)
        .flat_map(|a| (a..r).map(move |b| (a, b)))
        .map(|(a, b)| {
            let mut q = DMatrix::zeros(r, r);
            q[(a, b)] = 1.0;
            q[(b, a)] = 1.0;
            q
        })
        .collect();
    let mut stacked = DMatrix::zeros(r * r * holonomies.len(), basis.len());
    for (k, h) in holonomies.iter().enumerate() {
        for (u, b) in basis.iter().enumerate() {
            let col = vec_row_major(&(h.transpose() * b * h - b));
            stacked.view_mut((r * r * k, u), (r * r, 1)).copy_from(&col);
        }
    }
    basis.len() - elimination_rank(&stacked, tol)
}
