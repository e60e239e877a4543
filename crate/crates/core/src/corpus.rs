//! Reference gauge structures and seeded random generators.
//!
//! The named examples are the ones the documentation and the CLI problem
//! files refer to; the generators produce the randomized corpora used by
//! the metric-family surrogate and the property tests. All randomness goes
//! through `ChaCha8Rng`, so a seed fixes every draw on every platform.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bundle::{levi_civita, ChartDomain, Connection, ExprMatrix, GaugeTransform, MetricField};
use crate::error::Result;
use crate::expr::Expr;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Exponent vectors of all monomials in `m` variables of degree `<= degree`.
fn monomials(m: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out: Vec<Vec<u32>> = vec![Vec::new()];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                let used: u32 = prefix.iter().sum();
                (0..=degree as u32 - used).map(move |e| {
                    let mut next = prefix.clone();
                    next.push(e);
                    next
                })
            })
            .collect();
    }
    out.sort_by_key(|e| (e.iter().sum::<u32>(), std::cmp::Reverse(e.clone())));
    out
}

/// `Σ c_k x^k` over all monomials of degree `<= degree`, with `c_k` uniform
/// in `[-scale, scale]`.
pub fn random_polynomial(rng: &mut ChaCha8Rng, m: usize, degree: usize, scale: f64) -> Expr {
    monomials(m, degree)
        .into_iter()
        .map(|e| {
            let c = Expr::constant(round6(rng.random_range(-scale..=scale)));
            e.iter()
                .enumerate()
                .filter(|(_, &p)| p > 0)
                .fold(c, |acc, (v, &p)| acc * Expr::var(v).powi(p as i32))
        })
        .sum()
}

// Coefficients are rounded so that printed problems reproduce them exactly.
fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Connection with independent random polynomial coefficients.
pub fn random_polynomial_connection(rng: &mut ChaCha8Rng, domain: &ChartDomain, r: usize, degree: usize) -> Connection {
    let m = domain.dim();
    let blocks = (0..m)
        .map(|_| ExprMatrix::from_fn(r, r, |_, _| random_polynomial(rng, m, degree, 1.0)))
        .collect();
    Connection::new(domain.clone(), r, blocks).expect("shapes are consistent")
}

/// Constant symmetric positive definite matrix `A Aᵀ + I/2`.
pub fn random_spd(rng: &mut ChaCha8Rng, r: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(r, r, |_, _| round6(rng.random_range(-1.0..=1.0)));
    let g = &a * a.transpose() + DMatrix::identity(r, r) * 0.5;
    // exact symmetry after rounding
    DMatrix::from_fn(r, r, |i, j| round6(g[(i.min(j), i.max(j))]))
}

pub fn random_constant_metric(rng: &mut ChaCha8Rng, domain: &ChartDomain, r: usize) -> MetricField {
    MetricField::regular(domain.clone(), ExprMatrix::constant(&random_spd(rng, r))).expect("positive definite")
}

fn random_gauge_matrix(
    rng: &mut ChaCha8Rng,
    m: usize,
    r: usize,
    entry: impl Fn(&mut ChaCha8Rng, usize) -> Expr,
) -> ExprMatrix {
    let weight = Expr::constant(0.5 / r.max(1) as f64);
    ExprMatrix::from_fn(r, r, |a, b| {
        let p = &weight * &entry(rng, m);
        if a == b {
            Expr::one() + p
        } else {
            p
        }
    })
}

/// `φ = I + (1/(2r)) P` with `|P_ab| <= 1` on the box, where each entry of `P`
/// is affine in coordinates centered and scaled to the box; `‖φ − I‖ <= 1/2`
/// keeps `φ` uniformly invertible.
pub fn random_gauge(rng: &mut ChaCha8Rng, domain: &ChartDomain, r: usize) -> Result<GaugeTransform> {
    let entry = |rng: &mut ChaCha8Rng, m: usize| -> Expr {
        let bound = 1.0 / (m as f64 + 1.0);
        let mut acc = Expr::constant(round6(rng.random_range(-bound..=bound)));
        for v in 0..m {
            let (lo, hi) = (domain.lower()[v], domain.upper()[v]);
            let (mid, half) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
            let c = round6(rng.random_range(-bound..=bound) / half);
            acc = acc + Expr::constant(c) * (Expr::var(v) - Expr::constant(mid));
        }
        acc
    };
    GaugeTransform::new(domain.clone(), random_gauge_matrix(rng, domain.dim(), r, entry))
}

/// The square `[-1, 1]²` with the default 9-node grid.
pub fn unit_square() -> ChartDomain {
    ChartDomain::cube(2, -1.0, 1.0, 9).expect("valid box")
}

/// `Γ ≡ 0` on `[-1, 1]²`.
pub fn flat(r: usize) -> Connection {
    Connection::zero(unit_square(), r)
}

/// `N = [[0, 1], [0, 0]]`.
pub fn nilpotent_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])
}

/// `Γ_1 = 0`, `Γ_2 = x1 N` on `[-1, 1]²`; its curvature is the constant `N`.
pub fn nilpotent() -> Connection {
    let n = ExprMatrix::constant(&nilpotent_matrix());
    Connection::new(unit_square(), 2, vec![ExprMatrix::zeros(2, 2), n.scale(&Expr::var(0))]).expect("valid")
}

/// Upper half-plane box `[-1, 1] × [0.5, 2]`.
pub fn half_plane_box() -> ChartDomain {
    ChartDomain::new(vec![-1.0, 0.5], vec![1.0, 2.0], 9).expect("valid box")
}

/// `G = diag(1/x2², 1/x2²)` on [`half_plane_box`].
pub fn hyperbolic_metric() -> MetricField {
    let w = Expr::var(1).powi(-2);
    let g = ExprMatrix::from_fn(2, 2, |a, b| if a == b { w.clone() } else { Expr::zero() });
    MetricField::regular(half_plane_box(), g).expect("regular on the box")
}

/// Levi-Civita connection of [`hyperbolic_metric`].
pub fn hyperbolic() -> Connection {
    levi_civita(&hyperbolic_metric()).expect("regular metric")
}
