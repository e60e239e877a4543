//! Truncated multivariate Taylor series ("jets").
//!
//! A [`Jet`] holds the Taylor coefficients of a function around a base point
//! up to total degree `order`, in the monomial basis of a [`JetSpace`].
//! Arithmetic is exact up to that degree, so derivatives of any order up to
//! `order` can be read off without symbolic expansion. [`MatrixJet`] stores
//! one matrix per monomial, which turns products of matrix-valued series into
//! a handful of dense matrix multiplications.

use nalgebra::DMatrix;
use std::sync::Arc;

#[derive(Debug)]
struct SpaceInner {
    nvars: usize,
    order: usize,
    monomials: Vec<Vec<u8>>,
    degrees: Vec<usize>,
    /// (i, j, k): monomial i times monomial j is monomial k.
    mul_table: Vec<(u32, u32, u32)>,
    /// Per variable: (from, to, factor) for partial differentiation.
    deriv_table: Vec<Vec<(u32, u32, f64)>>,
}

/// Monomial basis for jets in `nvars` variables up to total degree `order`.
#[derive(Debug, Clone)]
pub struct JetSpace(Arc<SpaceInner>);

impl JetSpace {
    pub fn new(nvars: usize, order: usize) -> Self {
        let mut monomials: Vec<Vec<u8>> = Vec::new();
        for degree in 0..=order {
            let mut current = vec![0u8; nvars];
            enumerate_degree(nvars, degree, 0, &mut current, &mut monomials);
        }
        let degrees: Vec<usize> = monomials
            .iter()
            .map(|m| m.iter().map(|&e| e as usize).sum())
            .collect();
        let index_of = |m: &[u8]| monomials.iter().position(|x| x.as_slice() == m);
        let mut mul_table = Vec::new();
        for (i, a) in monomials.iter().enumerate() {
            for (j, b) in monomials.iter().enumerate() {
                if degrees[i] + degrees[j] > order {
                    continue;
                }
                let prod: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                let k = index_of(&prod).expect("product monomial within order");
                mul_table.push((i as u32, j as u32, k as u32));
            }
        }
        let mut deriv_table = vec![Vec::new(); nvars];
        for (from, m) in monomials.iter().enumerate() {
            for (v, table) in deriv_table.iter_mut().enumerate() {
                if m[v] == 0 {
                    continue;
                }
                let mut lowered = m.clone();
                lowered[v] -= 1;
                let to = index_of(&lowered).expect("lowered monomial");
                table.push((from as u32, to as u32, m[v] as f64));
            }
        }
        JetSpace(Arc::new(SpaceInner {
            nvars,
            order,
            monomials,
            degrees,
            mul_table,
            deriv_table,
        }))
    }

    pub fn nvars(&self) -> usize {
        self.0.nvars
    }

    pub fn order(&self) -> usize {
        self.0.order
    }

    pub fn len(&self) -> usize {
        self.0.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.monomials.is_empty()
    }

    pub fn monomial(&self, k: usize) -> &[u8] {
        &self.0.monomials[k]
    }

    pub fn index_of(&self, exponents: &[u8]) -> Option<usize> {
        self.0.monomials.iter().position(|m| m.as_slice() == exponents)
    }

    pub fn constant(&self, value: f64) -> Jet {
        let mut c = vec![0.0; self.len()];
        c[0] = value;
        Jet { c }
    }

    /// The coordinate function `x_var` expanded around a base value.
    pub fn variable(&self, var: usize, base: f64) -> Jet {
        let mut j = self.constant(base);
        if self.0.order > 0 {
            let mut e = vec![0u8; self.0.nvars];
            e[var] = 1;
            let k = self.index_of(&e).expect("linear monomial");
            j.c[k] = 1.0;
        }
        j
    }

    pub fn mul(&self, a: &Jet, b: &Jet) -> Jet {
        let mut c = vec![0.0; self.len()];
        for &(i, j, k) in &self.0.mul_table {
            c[k as usize] += a.c[i as usize] * b.c[j as usize];
        }
        Jet { c }
    }

    /// Partial derivative; the top degree of the result is not meaningful.
    pub fn derivative(&self, a: &Jet, var: usize) -> Jet {
        let mut c = vec![0.0; self.len()];
        for &(from, to, factor) in &self.0.deriv_table[var] {
            c[to as usize] += factor * a.c[from as usize];
        }
        Jet { c }
    }

    /// `f(a)` given `derivs[k] = f^(k)(a_0)` for `k = 0..=order`.
    pub fn compose(&self, a: &Jet, derivs: &[f64]) -> Jet {
        let order = self.0.order;
        let mut delta = a.clone();
        delta.c[0] = 0.0;
        let mut factorial = 1.0;
        let mut coeffs = Vec::with_capacity(order + 1);
        for (k, d) in derivs.iter().enumerate().take(order + 1) {
            if k > 0 {
                factorial *= k as f64;
            }
            coeffs.push(d / factorial);
        }
        let mut acc = self.constant(coeffs[order]);
        for k in (0..order).rev() {
            acc = self.mul(&acc, &delta);
            acc.c[0] += coeffs[k];
        }
        acc
    }

    pub fn recip(&self, a: &Jet) -> Jet {
        let a0 = a.c[0];
        let mut d = Vec::with_capacity(self.0.order + 1);
        let mut fact = 1.0;
        for k in 0..=self.0.order {
            if k > 0 {
                fact *= k as f64;
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            d.push(sign * fact / a0.powi(k as i32 + 1));
        }
        self.compose(a, &d)
    }

    pub fn powi(&self, a: &Jet, n: i64) -> Jet {
        if n < 0 {
            return self.recip(&self.powi(a, -n));
        }
        let mut result = self.constant(1.0);
        let mut base = a.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                result = self.mul(&result, &base);
            }
            e >>= 1;
            if e > 0 {
                base = self.mul(&base, &base);
            }
        }
        result
    }

    /// `a^p` for real `p`; requires `a_0 > 0`.
    pub fn powf(&self, a: &Jet, p: f64) -> Jet {
        let a0 = a.c[0];
        let mut d = Vec::with_capacity(self.0.order + 1);
        let mut falling = 1.0;
        for k in 0..=self.0.order {
            d.push(falling * a0.powf(p - k as f64));
            falling *= p - k as f64;
        }
        self.compose(a, &d)
    }

    pub fn exp(&self, a: &Jet) -> Jet {
        let v = a.c[0].exp();
        self.compose(a, &vec![v; self.0.order + 1])
    }

    pub fn ln(&self, a: &Jet) -> Jet {
        let a0 = a.c[0];
        let mut d = vec![a0.ln()];
        let mut fact = 1.0;
        for k in 1..=self.0.order {
            if k > 1 {
                fact *= (k - 1) as f64;
            }
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            d.push(sign * fact / a0.powi(k as i32));
        }
        self.compose(a, &d)
    }

    pub fn sin(&self, a: &Jet) -> Jet {
        let (s, c) = a.c[0].sin_cos();
        let cycle = [s, c, -s, -c];
        let d: Vec<f64> = (0..=self.0.order).map(|k| cycle[k % 4]).collect();
        self.compose(a, &d)
    }

    pub fn cos(&self, a: &Jet) -> Jet {
        let (s, c) = a.c[0].sin_cos();
        let cycle = [c, -s, -c, s];
        let d: Vec<f64> = (0..=self.0.order).map(|k| cycle[k % 4]).collect();
        self.compose(a, &d)
    }

    /// Taylor coefficient array of the multi-index `exponents`, times the
    /// multi-factorial: the partial derivative value at the base point.
    pub fn partial(&self, a: &Jet, exponents: &[u8]) -> f64 {
        let k = self.index_of(exponents).expect("monomial within order");
        let factor: f64 = exponents
            .iter()
            .map(|&e| (1..=e as u32).product::<u32>() as f64)
            .product();
        a.c[k] * factor
    }

    pub fn degree(&self, k: usize) -> usize {
        self.0.degrees[k]
    }

    // ---- matrix-valued jets ----

    pub fn matrix_zeros(&self, rows: usize, cols: usize) -> MatrixJet {
        MatrixJet {
            coeffs: vec![DMatrix::zeros(rows, cols); self.len()],
        }
    }

    /// Gather a matrix of scalar jets into a matrix jet.
    pub fn matrix_from_entries(&self, rows: usize, cols: usize, entries: &[Jet]) -> MatrixJet {
        assert_eq!(entries.len(), rows * cols);
        let coeffs = (0..self.len())
            .map(|k| DMatrix::from_fn(rows, cols, |i, j| entries[i * cols + j].c[k]))
            .collect();
        MatrixJet { coeffs }
    }

    pub fn matmul(&self, a: &MatrixJet, b: &MatrixJet) -> MatrixJet {
        let mut out = self.matrix_zeros(a.coeffs[0].nrows(), b.coeffs[0].ncols());
        for &(i, j, k) in &self.0.mul_table {
            let (ai, bj) = (&a.coeffs[i as usize], &b.coeffs[j as usize]);
            if is_zero_matrix(ai) || is_zero_matrix(bj) {
                continue;
            }
            out.coeffs[k as usize].gemm(1.0, ai, bj, 1.0);
        }
        out
    }

    pub fn matrix_derivative(&self, a: &MatrixJet, var: usize) -> MatrixJet {
        let mut out = self.matrix_zeros(a.coeffs[0].nrows(), a.coeffs[0].ncols());
        for &(from, to, factor) in &self.0.deriv_table[var] {
            out.coeffs[to as usize] += &a.coeffs[from as usize] * factor;
        }
        out
    }
}

fn is_zero_matrix(m: &DMatrix<f64>) -> bool {
    m.iter().all(|&v| v == 0.0)
}

fn enumerate_degree(nvars: usize, remaining: usize, var: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if var + 1 == nvars {
        cur[var] = remaining as u8;
        out.push(cur.clone());
        cur[var] = 0;
        return;
    }
    if nvars == 0 {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for e in (0..=remaining).rev() {
        cur[var] = e as u8;
        enumerate_degree(nvars, remaining - e, var + 1, cur, out);
    }
    cur[var] = 0;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub c: Vec<f64>,
}

impl Jet {
    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn add(&self, other: &Jet) -> Jet {
        Jet {
            c: self.c.iter().zip(&other.c).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Jet) -> Jet {
        Jet {
            c: self.c.iter().zip(&other.c).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn neg(&self) -> Jet {
        Jet {
            c: self.c.iter().map(|a| -a).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            c: self.c.iter().map(|a| a * s).collect(),
        }
    }
}

/// Matrix-valued truncated Taylor series: `coeffs[k]` multiplies monomial `k`.
#[derive(Debug, Clone)]
pub struct MatrixJet {
    pub coeffs: Vec<DMatrix<f64>>,
}

impl MatrixJet {
    pub fn value(&self) -> &DMatrix<f64> {
        &self.coeffs[0]
    }

    pub fn add(&self, other: &MatrixJet) -> MatrixJet {
        MatrixJet {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &MatrixJet) -> MatrixJet {
        MatrixJet {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> MatrixJet {
        MatrixJet {
            coeffs: self.coeffs.iter().map(|a| a * s).collect(),
        }
    }

    /// Apply the same linear map to every coefficient matrix.
    pub fn map(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> MatrixJet {
        MatrixJet {
            coeffs: self.coeffs.iter().map(f).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_counts() {
        assert_eq!(JetSpace::new(2, 4).len(), 15);
        assert_eq!(JetSpace::new(3, 4).len(), 35);
        assert_eq!(JetSpace::new(1, 3).len(), 4);
        assert_eq!(JetSpace::new(2, 0).len(), 1);
    }

    #[test]
    fn product_and_partials() {
        let s = JetSpace::new(2, 3);
        let x = s.variable(0, 2.0);
        let y = s.variable(1, 3.0);
        // f = x^2 y
        let f = s.mul(&s.mul(&x, &x), &y);
        assert_eq!(f.value(), 12.0);
        assert_eq!(s.partial(&f, &[1, 0]), 12.0);
        assert_eq!(s.partial(&f, &[0, 1]), 4.0);
        assert_eq!(s.partial(&f, &[2, 0]), 6.0);
        assert_eq!(s.partial(&f, &[2, 1]), 2.0);
        assert_eq!(s.partial(&f, &[0, 2]), 0.0);
    }

    #[test]
    fn elementary_functions_match_closed_forms() {
        let s = JetSpace::new(1, 4);
        let x = s.variable(0, 0.7);
        let e = s.exp(&s.scale_jet(&x, 2.0));
        for k in 0..=4u8 {
            let expect = 2f64.powi(k as i32) * (1.4f64).exp();
            assert!((s.partial(&e, &[k]) - expect).abs() < 1e-12 * expect);
        }
        let l = s.ln(&x);
        assert!((s.partial(&l, &[3]) - 2.0 / 0.7f64.powi(3)).abs() < 1e-10);
        let r = s.recip(&x);
        assert!((s.partial(&r, &[2]) - 2.0 / 0.7f64.powi(3)).abs() < 1e-10);
        let q = s.powf(&x, 0.5);
        assert!((s.partial(&q, &[1]) - 0.5 / 0.7f64.sqrt()).abs() < 1e-12);
        let sn = s.sin(&x);
        assert!((s.partial(&sn, &[3]) + 0.7f64.cos()).abs() < 1e-12);
        let p = s.powi(&x, -2);
        assert!((s.partial(&p, &[1]) + 2.0 / 0.7f64.powi(3)).abs() < 1e-10);
    }

    #[test]
    fn matrix_jets_multiply_like_scalars() {
        let s = JetSpace::new(2, 2);
        let x = s.variable(0, 1.0);
        let y = s.variable(1, -1.0);
        let a = s.matrix_from_entries(1, 1, &[x.clone()]);
        let b = s.matrix_from_entries(1, 1, &[y.clone()]);
        let ab = s.matmul(&a, &b);
        let xy = s.mul(&x, &y);
        for k in 0..s.len() {
            assert_eq!(ab.coeffs[k][(0, 0)], xy.c[k]);
        }
        let d = s.matrix_derivative(&ab, 0);
        assert_eq!(d.coeffs[0][(0, 0)], -1.0);
    }

    impl JetSpace {
        fn scale_jet(&self, a: &Jet, s: f64) -> Jet {
            a.scale(s)
        }
    }
}
