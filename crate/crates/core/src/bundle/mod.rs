//! Gauge structures over a box chart.
//!
//! Index conventions, used everywhere in the crate:
//!
//! * connection: `∇_{∂x_i} s_α = Σ_β Γ[i][α][β] s_β`, stored as one `r×r`
//!   matrix `Γ_i` per coordinate direction with `(Γ_i)[α][β] = Γ_{i:α}^β`;
//! * endomorphism: `φ(s_α) = Σ_β φ[α][β] s_β`;
//! * bilinear form: `g[α][β] = g(s_α, s_β)`.
//!
//! With these conventions the operations reduce to the matrix identities
//!
//! ```text
//! curvature     R_ij  = ∂_i Γ_j − ∂_j Γ_i + Γ_j Γ_i − Γ_i Γ_j
//! Amari dual    Γ*_i  = (∂_i G − G Γ_iᵀ) G⁻¹
//! gauge action  Γ'_i  = φ⁻¹ (Γ_i φ − ∂_i φ)
//! push-forward  G'    = φ⁻¹ G φ⁻ᵀ
//! ∇g            (∇g)_i = ∂_i G − Γ_i G − G Γ_iᵀ
//! ```
//!
//! Each identity is checked in the tests against its defining relation
//! rather than trusted.

mod domain;
mod matrix;

use std::sync::OnceLock;

use nalgebra::DMatrix;

pub use domain::ChartDomain;
pub use matrix::ExprMatrix;

use crate::error::{Error, Result};
use crate::expr::jet::{JetSpace, MatrixJet};
use crate::expr::{parse_in_dim, Expr, Tape};
use crate::linalg;
use crate::tolerances::{GAUGE_DET_MIN, REGULAR_COND_MAX, REGULAR_DET_MIN};

/// A list of same-shaped expression matrices compiled into one tape.
#[derive(Debug, Clone)]
pub struct CompiledMatrices {
    rows: usize,
    cols: usize,
    mats: Vec<ExprMatrix>,
    tape: OnceLock<Tape>,
}

impl CompiledMatrices {
    pub fn new(rows: usize, cols: usize, mats: Vec<ExprMatrix>) -> Self {
        CompiledMatrices {
            rows,
            cols,
            mats,
            tape: OnceLock::new(),
        }
    }

    fn tape(&self) -> &Tape {
        self.tape.get_or_init(|| {
            let all: Vec<Expr> = self.mats.iter().flat_map(|m| m.entries().iter().cloned()).collect();
            Tape::compile(&all)
        })
    }

    fn arity(&self) -> usize {
        self.tape().arity()
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let values = self.tape().eval(x).map_err(|e| Error::eval(x, e))?;
        let size = self.rows * self.cols;
        Ok(values
            .chunks(size.max(1))
            .take(self.mats.len())
            .map(|chunk| DMatrix::from_row_slice(self.rows, self.cols, &chunk[..size]))
            .collect())
    }

    pub fn eval_jets(&self, space: &JetSpace, x0: &[f64]) -> Result<Vec<MatrixJet>> {
        let jets = self.tape().eval_jet(space, x0).map_err(|e| Error::eval(x0, e))?;
        let size = self.rows * self.cols;
        Ok((0..self.mats.len())
            .map(|k| space.matrix_from_entries(self.rows, self.cols, &jets[k * size..(k + 1) * size]))
            .collect())
    }
}

fn parse_matrix(domain: &ChartDomain, rows: &[Vec<String>], what: &str) -> Result<ExprMatrix> {
    let parsed = rows
        .iter()
        .map(|row| row.iter().map(|s| parse_in_dim(s, domain.dim())).collect::<std::result::Result<Vec<_>, _>>())
        .collect::<std::result::Result<Vec<_>, _>>()?;
    ExprMatrix::from_rows(parsed).map_err(|_| Error::Shape(format!("{what}: ragged rows")))
}

fn check_square(m: &ExprMatrix, r: usize, what: &str) -> Result<()> {
    if m.nrows() != r || m.ncols() != r {
        return Err(Error::Shape(format!(
            "{what} is {}x{}, expected {r}x{r}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn check_same_base(a: &ChartDomain, ar: usize, b: &ChartDomain, br: usize) -> Result<()> {
    if a.dim() != b.dim() || ar != br {
        return Err(Error::Shape(format!(
            "objects live over different bundles (dim {} rank {ar} vs dim {} rank {br})",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Koszul connection in local coordinates.
#[derive(Debug, Clone)]
pub struct Connection {
    domain: ChartDomain,
    rank: usize,
    gamma: CompiledMatrices,
}

impl Connection {
    /// `gamma[i]` is the `r×r` matrix `Γ_i`.
    pub fn new(domain: ChartDomain, rank: usize, gamma: Vec<ExprMatrix>) -> Result<Self> {
        if rank == 0 {
            return Err(Error::Shape("bundle rank must be positive".into()));
        }
        if gamma.len() != domain.dim() {
            return Err(Error::Shape(format!(
                "connection has {} coordinate blocks, domain dimension is {}",
                gamma.len(),
                domain.dim()
            )));
        }
        for (i, g) in gamma.iter().enumerate() {
            check_square(g, rank, &format!("Γ_{}", i + 1))?;
        }
        let batch = CompiledMatrices::new(rank, rank, gamma);
        if batch.arity() > domain.dim() {
            return Err(Error::Shape(format!(
                "coefficients reference x{} on a {}-dimensional chart",
                batch.arity(),
                domain.dim()
            )));
        }
        Ok(Connection {
            domain,
            rank,
            gamma: batch,
        })
    }

    pub fn zero(domain: ChartDomain, rank: usize) -> Self {
        let m = domain.dim();
        Connection::new(domain, rank, vec![ExprMatrix::zeros(rank, rank); m]).expect("zero connection")
    }

    /// `sources[i][α][β]` is the text of `Γ_{i:α}^β`.
    pub fn from_strings(domain: ChartDomain, rank: usize, sources: &[Vec<Vec<String>>]) -> Result<Self> {
        let gamma = sources
            .iter()
            .enumerate()
            .map(|(i, block)| parse_matrix(&domain, block, &format!("Γ_{}", i + 1)))
            .collect::<Result<Vec<_>>>()?;
        Connection::new(domain, rank, gamma)
    }

    pub fn domain(&self) -> &ChartDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn coefficients(&self, i: usize) -> &ExprMatrix {
        &self.gamma.mats[i]
    }

    pub fn blocks(&self) -> &[ExprMatrix] {
        &self.gamma.mats
    }

    /// The matrices `Γ_i(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        self.gamma.eval(x)
    }

    /// Taylor expansions of `Γ_i` around `x0`.
    pub fn eval_jets(&self, space: &JetSpace, x0: &[f64]) -> Result<Vec<MatrixJet>> {
        self.gamma.eval_jets(space, x0)
    }

    /// Same coefficients over another chart box of the same dimension.
    pub fn with_domain(&self, domain: ChartDomain) -> Result<Self> {
        Connection::new(domain, self.rank, self.gamma.mats.clone())
    }

    pub fn to_strings(&self) -> Vec<Vec<Vec<String>>> {
        self.gamma.mats.iter().map(ExprMatrix::to_strings).collect()
    }
}

/// Symmetric bilinear form field of constant rank.
#[derive(Debug, Clone)]
pub struct MetricField {
    domain: ChartDomain,
    rank: usize,
    declared_rank: usize,
    g: CompiledMatrices,
}

impl MetricField {
    /// Validates symmetry and the declared rank at every sample point.
    pub fn new(domain: ChartDomain, g: ExprMatrix, declared_rank: usize) -> Result<Self> {
        let r = g.nrows();
        check_square(&g, r, "metric")?;
        if declared_rank > r {
            return Err(Error::Shape(format!("declared rank {declared_rank} exceeds bundle rank {r}")));
        }
        let field = MetricField {
            domain,
            rank: r,
            declared_rank,
            g: CompiledMatrices::new(r, r, vec![g]),
        };
        if field.g.arity() > field.domain.dim() {
            return Err(Error::Shape(format!(
                "metric references x{} on a {}-dimensional chart",
                field.g.arity(),
                field.domain.dim()
            )));
        }
        let symmetric = field.g.mats[0].is_structurally_symmetric();
        for x in field.domain.sample_points() {
            let gm = field.eval(&x)?;
            if !symmetric {
                let asym = linalg::max_abs(&(&gm - gm.transpose()));
                if asym > 1e-12 * (1.0 + linalg::max_abs(&gm)) {
                    return Err(Error::Invalid(format!("metric is not symmetric at {x:?}")));
                }
            }
            let found = linalg::numerical_rank(&gm, crate::tolerances::Tolerances::default().rank);
            if found != declared_rank {
                return Err(Error::RankMismatch {
                    point: x,
                    found,
                    declared: declared_rank,
                });
            }
        }
        Ok(field)
    }

    /// A metric declared nondegenerate.
    pub fn regular(domain: ChartDomain, g: ExprMatrix) -> Result<Self> {
        let r = g.nrows();
        MetricField::new(domain, g, r)
    }

    pub fn identity(domain: ChartDomain, rank: usize) -> Self {
        MetricField::regular(domain, ExprMatrix::identity(rank)).expect("identity metric")
    }

    pub fn constant(domain: ChartDomain, g: &DMatrix<f64>) -> Result<Self> {
        let r = g.nrows();
        MetricField::new(domain, ExprMatrix::constant(g), linalg::numerical_rank(g, 1e-8).min(r))
    }

    pub fn from_strings(domain: ChartDomain, sources: &[Vec<String>]) -> Result<Self> {
        let g = parse_matrix(&domain, sources, "metric")?;
        let r = g.nrows();
        let rank = {
            let x = domain.center();
            let gm = CompiledMatrices::new(r, r, vec![g.clone()]).eval(&x)?.remove(0);
            linalg::numerical_rank(&gm, 1e-8)
        };
        MetricField::new(domain, g, rank)
    }

    pub fn domain(&self) -> &ChartDomain {
        &self.domain
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn declared_rank(&self) -> usize {
        self.declared_rank
    }

    pub fn is_declared_regular(&self) -> bool {
        self.declared_rank == self.rank
    }

    pub fn matrix(&self) -> &ExprMatrix {
        &self.g.mats[0]
    }

    pub fn eval(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.g.eval(x)?.remove(0))
    }

    pub fn eval_jets(&self, space: &JetSpace, x0: &[f64]) -> Result<MatrixJet> {
        Ok(self.g.eval_jets(space, x0)?.remove(0))
    }

    /// Regular: `|det G| >= 1e-8` and `cond(G) <= 1e8` at every sample point.
    pub fn check_regular(&self) -> Result<()> {
        if !self.is_declared_regular() {
            return Err(Error::SingularMetric {
                point: self.domain.center(),
                reason: format!("declared rank {} < {}", self.declared_rank, self.rank),
            });
        }
        for x in self.domain.sample_points() {
            let gm = self.eval(&x)?;
            let det = gm.determinant();
            let cond = linalg::condition_number(&gm);
            if det.abs() < REGULAR_DET_MIN || cond > REGULAR_COND_MAX {
                return Err(Error::SingularMetric {
                    point: x,
                    reason: format!("|det| = {:e}, cond = {:e}", det.abs(), cond),
                });
            }
        }
        Ok(())
    }

    /// Smallest eigenvalue over the sample grid.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut lowest = f64::INFINITY;
        for x in self.domain.sample_points() {
            let gm = self.eval(&x)?;
            let eig = gm.symmetric_eigen().eigenvalues;
            lowest = lowest.min(eig.min());
        }
        Ok(lowest)
    }

    pub fn to_strings(&self) -> Vec<Vec<String>> {
        self.matrix().to_strings()
    }
}

/// Pointwise endomorphism field `φ(s_α) = Σ_β φ[α][β] s_β`.
#[derive(Debug, Clone)]
pub struct GaugeTransform {
    domain: ChartDomain,
    rank: usize,
    phi: CompiledMatrices,
}

impl GaugeTransform {
    /// No invertibility requirement; see [`GaugeTransform::check_invertible`].
    pub fn new(domain: ChartDomain, phi: ExprMatrix) -> Result<Self> {
        let r = phi.nrows();
        check_square(&phi, r, "gauge transformation")?;
        let g = GaugeTransform {
            domain,
            rank: r,
            phi: CompiledMatrices::new(r, r, vec![phi]),
        };
        if g.phi.arity() > g.domain.dim() {
            return Err(Error::Shape(format!(
                "gauge transformation references x{} on a {}-dimensional chart",
                g.phi.arity(),
                g.domain.dim()
            )));
        }
        Ok(g)
    }

    pub fn identity(domain: ChartDomain, rank: usize) -> Self {
        GaugeTransform::new(domain, ExprMatrix::identity(rank)).expect("identity")
    }

    pub fn constant(domain: ChartDomain, m: &DMatrix<f64>) -> Result<Self> {
        GaugeTransform::new(domain, ExprMatrix::constant(m))
    }

    pub fn from_strings(domain: ChartDomain, sources: &[Vec<String>]) -> Result<Self> {
        let phi = parse_matrix(&domain, sources, "gauge transformation")?;
        GaugeTransform::new(domain, phi)
    }

    pub fn domain(&self) -> &ChartDomain {
        &self.domain
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn matrix(&self) -> &ExprMatrix {
        &self.phi.mats[0]
    }

    pub fn eval(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.phi.eval(x)?.remove(0))
    }

    /// `|det φ| >= 1e-8` at every sample point.
    pub fn check_invertible(&self) -> Result<()> {
        for x in self.domain.sample_points() {
            let det = self.eval(&x)?.determinant();
            if det.abs() < GAUGE_DET_MIN {
                return Err(Error::NonInvertible { point: x, det });
            }
        }
        Ok(())
    }

    /// Pointwise inverse, as adjugate over determinant.
    pub fn inverse(&self) -> Result<GaugeTransform> {
        self.check_invertible()?;
        let (inv, _) = self.matrix().inverse()?;
        GaugeTransform::new(self.domain.clone(), inv)
    }
}

/// `R[i][j]` with `R[j][i] = −R[i][j]`.
#[derive(Debug, Clone)]
pub struct CurvatureField {
    dim: usize,
    rank: usize,
    /// Upper-triangle components `(i, j)` with `i < j`, row-major.
    upper: CompiledMatrices,
}

impl CurvatureField {
    fn slot(&self, i: usize, j: usize) -> usize {
        // position of (i, j), i < j, in row-major upper-triangle order
        i * self.dim - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Symbolic component `R_ij`.
    pub fn get(&self, i: usize, j: usize) -> ExprMatrix {
        use std::cmp::Ordering;
        match i.cmp(&j) {
            Ordering::Less => self.upper.mats[self.slot(i, j)].clone(),
            Ordering::Greater => self.upper.mats[self.slot(j, i)].neg(),
            Ordering::Equal => ExprMatrix::zeros(self.rank, self.rank),
        }
    }

    /// Every `R_ij(x)` as an `m×m` table.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<Vec<DMatrix<f64>>>> {
        let up = self.upper.eval(x)?;
        let m = self.dim;
        let mut out = vec![vec![DMatrix::zeros(self.rank, self.rank); m]; m];
        for i in 0..m {
            for j in i + 1..m {
                let r = &up[self.slot(i, j)];
                out[i][j] = r.clone();
                out[j][i] = -r;
            }
        }
        Ok(out)
    }

    /// Largest entry of any component over the given points.
    pub fn max_abs(&self, points: &[Vec<f64>]) -> Result<f64> {
        let mut worst = 0.0f64;
        for x in points {
            for r in self.upper.eval(x)? {
                worst = worst.max(linalg::max_abs(&r));
            }
        }
        Ok(worst)
    }
}

/// `R_ij = ∂_i Γ_j − ∂_j Γ_i + Γ_j Γ_i − Γ_i Γ_j`.
pub fn curvature(nabla: &Connection) -> CurvatureField {
    let m = nabla.dim();
    let mut comps = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            let gi = nabla.coefficients(i);
            let gj = nabla.coefficients(j);
            let r = gj
                .differentiate(i)
                .sub(&gi.differentiate(j))
                .add(&gj.matmul(gi))
                .sub(&gi.matmul(gj));
            comps.push(r);
        }
    }
    CurvatureField {
        dim: m,
        rank: nabla.rank(),
        upper: CompiledMatrices::new(nabla.rank(), nabla.rank(), comps),
    }
}

/// The Amari dual `g.∇`: `g(g.∇_X s, s') = X g(s, s') − g(s, ∇_X s')`.
pub fn amari_dual(g: &MetricField, nabla: &Connection) -> Result<Connection> {
    check_same_base(g.domain(), g.rank(), nabla.domain(), nabla.rank())?;
    g.check_regular()?;
    let gm = g.matrix();
    let adj = gm.adjugate()?;
    let det = gm.det()?;
    let blocks = (0..nabla.dim())
        .map(|i| {
            let numer = gm.differentiate(i).sub(&gm.matmul(&nabla.coefficients(i).transpose()));
            numer.matmul(&adj).div_scalar(&det)
        })
        .collect();
    Connection::new(nabla.domain().clone(), nabla.rank(), blocks)
}

/// The gauge action `(φ*∇)_X s = φ(∇_X φ⁻¹ s)`.
pub fn gauge_act(phi: &GaugeTransform, nabla: &Connection) -> Result<Connection> {
    check_same_base(phi.domain(), phi.rank(), nabla.domain(), nabla.rank())?;
    phi.check_invertible()?;
    let pm = phi.matrix();
    let adj = pm.adjugate()?;
    let det = pm.det()?;
    let blocks = (0..nabla.dim())
        .map(|i| {
            let inner = nabla.coefficients(i).matmul(pm).sub(&pm.differentiate(i));
            adj.matmul(&inner).div_scalar(&det)
        })
        .collect();
    Connection::new(nabla.domain().clone(), nabla.rank(), blocks)
}

/// `φ_* g (s, s') = g(φ⁻¹ s, φ⁻¹ s')`.
pub fn pushforward_metric(phi: &GaugeTransform, g: &MetricField) -> Result<MetricField> {
    check_same_base(phi.domain(), phi.rank(), g.domain(), g.rank())?;
    phi.check_invertible()?;
    let pm = phi.matrix();
    let adj = pm.adjugate()?;
    let det = pm.det()?;
    let det2 = &det * &det;
    let pushed = adj.matmul(g.matrix()).matmul(&adj.transpose()).div_scalar(&det2);
    // Rebuild the matrix so that mirrored entries share one expression.
    let r = g.rank();
    let sym = ExprMatrix::from_fn(r, r, |a, b| pushed.get(a.min(b), a.max(b)).clone());
    MetricField::new(g.domain().clone(), sym, g.declared_rank())
}

/// `(∇g)_i = ∂_i G − Γ_i G − G Γ_iᵀ` and its largest sampled entry.
#[derive(Debug, Clone)]
pub struct MetricDerivative {
    pub components: Vec<ExprMatrix>,
    pub residual: f64,
}

pub fn covariant_derivative_of_metric(nabla: &Connection, g: &MetricField) -> Result<MetricDerivative> {
    check_same_base(g.domain(), g.rank(), nabla.domain(), nabla.rank())?;
    let gm = g.matrix();
    let components: Vec<ExprMatrix> = (0..nabla.dim())
        .map(|i| {
            let gi = nabla.coefficients(i);
            gm.differentiate(i)
                .sub(&gi.matmul(gm))
                .sub(&gm.matmul(&gi.transpose()))
        })
        .collect();
    let batch = CompiledMatrices::new(g.rank(), g.rank(), components.clone());
    let mut residual = 0.0f64;
    for x in nabla.domain().sample_points() {
        for c in batch.eval(&x)? {
            residual = residual.max(linalg::max_abs(&c));
        }
    }
    Ok(MetricDerivative { components, residual })
}

/// Largest coefficient discrepancy between two connections on the sample
/// grid of `a`.
pub fn max_coefficient_difference(a: &Connection, b: &Connection) -> Result<f64> {
    check_same_base(a.domain(), a.rank(), b.domain(), b.rank())?;
    let mut worst = 0.0f64;
    for x in a.domain().sample_points() {
        let (ga, gb) = (a.eval(&x)?, b.eval(&x)?);
        for (p, q) in ga.iter().zip(&gb) {
            worst = worst.max(linalg::max_abs(&(p - q)));
        }
    }
    Ok(worst)
}

/// Discrepancy between `φ*(g.∇)` and `(φ_* g).(φ*∇)` on the sample grid.
pub fn quasi_commutativity_check(phi: &GaugeTransform, g: &MetricField, nabla: &Connection) -> Result<f64> {
    let lhs = gauge_act(phi, &amari_dual(g, nabla)?)?;
    let rhs = amari_dual(&pushforward_metric(phi, g)?, &gauge_act(phi, nabla)?)?;
    max_coefficient_difference(&lhs, &rhs)
}

/// Largest entry of `R'_ij − φ⁻¹ R_ij φ` on the sample grid, where `R'` is
/// the curvature of `φ*∇`.
pub fn curvature_conjugation_residual(phi: &GaugeTransform, nabla: &Connection) -> Result<f64> {
    let transformed = gauge_act(phi, nabla)?;
    let r = curvature(nabla);
    let rt = curvature(&transformed);
    let mut worst = 0.0f64;
    for x in nabla.domain().sample_points() {
        let p = phi.eval(&x)?;
        let pinv = p
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NonInvertible { point: x.clone(), det: 0.0 })?;
        let (ra, rb) = (r.eval(&x)?, rt.eval(&x)?);
        for i in 0..nabla.dim() {
            for j in i + 1..nabla.dim() {
                let expect = &pinv * &ra[i][j] * &p;
                worst = worst.max(linalg::max_abs(&(&rb[i][j] - expect)));
            }
        }
    }
    Ok(worst)
}

/// Levi-Civita connection of a nondegenerate metric on the tangent bundle:
/// `Γ[i][j][k] = ½ Σ_l g^{kl} (∂_i g_jl + ∂_j g_il − ∂_l g_ij)`.
pub fn levi_civita(g: &MetricField) -> Result<Connection> {
    let m = g.domain().dim();
    if g.rank() != m {
        return Err(Error::Shape(format!(
            "Levi-Civita needs a tangent-bundle metric (rank {} on a {m}-dimensional chart)",
            g.rank()
        )));
    }
    g.check_regular()?;
    let gm = g.matrix();
    let (inv, _) = gm.inverse()?;
    let dg: Vec<ExprMatrix> = (0..m).map(|l| gm.differentiate(l)).collect();
    let half = Expr::constant(0.5);
    let blocks = (0..m)
        .map(|i| {
            ExprMatrix::from_fn(m, m, |j, k| {
                let sum: Expr = (0..m)
                    .map(|l| {
                        let bracket = dg[i].get(j, l) + dg[j].get(i, l) - dg[l].get(i, j);
                        inv.get(k, l) * &bracket
                    })
                    .sum();
                &half * &sum
            })
        })
        .collect();
    Connection::new(g.domain().clone(), m, blocks)
}
