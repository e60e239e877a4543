//! Metricity decisions, the Φ/Φ* splitting, and the gauge index.
//!
//! A bundle map `φ` solves `FE(∇, g.∇)` exactly when the bilinear form
//! `b(s, s') = g(φ s, s')`, with matrix `φ G`, is ∇-parallel. Its symmetric
//! and antisymmetric parts are `q = Φ G` and `ω = Φ* G`, which is why
//! `dim J = dim S² + dim Ω²` and why the verdicts below are read off the
//! parallel symmetric forms.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::{amari_dual, ChartDomain, CompiledMatrices, Connection, ExprMatrix, MetricField};
use crate::corpus;
use crate::error::{Error, Result};
use crate::fe_solver::{solve_fe, solve_parallel_forms, SolutionSpace, SolveOptions};
use crate::linalg::{max_abs, null_space, numerical_rank, rank_relative_to, singular_values};
use crate::tolerances::{Tolerances, REGULAR_DET_MIN};
use crate::transport::{ParallelSystem, Symmetry};

/// `(Φ, Φ*)` with `Φ G = ½(φ G + G φᵀ)` and `Φ* G = ½(φ G − G φᵀ)`.
pub fn split_phi(g: &DMatrix<f64>, phi: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let ginv = g
        .clone()
        .try_inverse()
        .filter(|_| g.determinant().abs() >= REGULAR_DET_MIN)
        .ok_or_else(|| Error::SingularMetric {
            point: Vec::new(),
            reason: "Gram matrix is not invertible".into(),
        })?;
    let mirrored = g * phi.transpose() * ginv;
    Ok(((phi + &mirrored) * 0.5, (phi - mirrored) * 0.5))
}

/// Symbolic version of [`split_phi`] for fields.
pub fn split_phi_field(g: &MetricField, phi: &ExprMatrix) -> Result<(ExprMatrix, ExprMatrix)> {
    g.check_regular()?;
    let (ginv, _) = g.matrix().inverse()?;
    let mirrored = g.matrix().matmul(&phi.transpose()).matmul(&ginv);
    let half = crate::expr::Expr::constant(0.5);
    Ok((phi.add(&mirrored).scale(&half), phi.sub(&mirrored).scale(&half)))
}

/// `q = Φ G` (symmetric) and `ω = Φ* G` (antisymmetric).
pub fn induced_forms(g: &DMatrix<f64>, big_phi: &DMatrix<f64>, big_phi_star: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    (big_phi * g, big_phi_star * g)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Verdict {
    RegularlyMetric,
    #[serde(rename_all = "camelCase")]
    SingularMetricOnly {
        max_rank: usize,
    },
    NotMetric,
}

impl Verdict {
    pub fn is_regular(&self) -> bool {
        matches!(self, Verdict::RegularlyMetric)
    }

    pub fn label(&self) -> String {
        match self {
            Verdict::RegularlyMetric => "RegularlyMetric".into(),
            Verdict::SingularMetricOnly { max_rank } => format!("SingularMetricOnly({max_rank})"),
            Verdict::NotMetric => "NotMetric".into(),
        }
    }
}

/// A ∇-parallel symmetric form, sampled on the extension grid.
#[derive(Debug, Clone)]
pub struct Witness {
    /// Value at the base point. The witness is scaled so that its largest
    /// Frobenius norm over the grid is `√r`.
    pub value: DMatrix<f64>,
    /// Coefficients in the basis of parallel symmetric forms.
    pub coefficients: Vec<f64>,
    pub grid: ChartDomain,
    /// Values at the grid nodes in flat-index order.
    pub grid_values: Vec<DMatrix<f64>>,
    pub rank: usize,
    /// Numerical rank at every grid node.
    pub rank_constant: bool,
    /// Largest entry of `∇ witness` from the substitution check.
    pub parallel_residual: f64,
    /// Smallest `|det|` over the grid.
    pub min_abs_det: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CertificateResiduals {
    pub s2_transport: f64,
    pub omega2_transport: f64,
    pub j_transport: f64,
    pub s2_substitution: f64,
    pub omega2_substitution: f64,
    pub j_substitution: f64,
    pub witness_parallel: f64,
}

#[derive(Debug, Clone)]
pub struct MetricityCertificate {
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    pub dim_s2: usize,
    pub dim_omega2: usize,
    /// `dim J(∇, ∇^{g0})` with `g0` the identity metric.
    pub dim_j: usize,
    pub exact_sequence_holds: bool,
    /// All three prolongations stabilized, so dimensions are exact.
    pub stabilized: bool,
    /// All residuals within tolerance.
    pub certified: bool,
    pub residuals: CertificateResiduals,
    pub tolerances: Tolerances,
    pub s2: SolutionSpace,
    pub omega2: SolutionSpace,
    pub j: SolutionSpace,
}

/// Seeded coefficient vectors: the unit vectors, then `draws` uniform ones.
fn search_coefficients(dim: usize, draws: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = corpus::rng(seed);
    let mut out: Vec<Vec<f64>> = (0..dim)
        .map(|k| (0..dim).map(|j| if j == k { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..draws {
        out.push((0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect());
    }
    out
}

fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

fn build_witness(
    nabla: &Connection,
    s2: &SolutionSpace,
    coefficients: Vec<f64>,
    options: &SolveOptions,
) -> Result<Witness> {
    let r = nabla.rank();
    let largest = (0..s2.grid.node_count())
        .map(|n| frobenius(&s2.combination_at(&coefficients, n)))
        .fold(0.0, f64::max);
    let scale = (r as f64).sqrt() / largest;
    let coefficients: Vec<f64> = coefficients.iter().map(|c| c * scale).collect();
    let value = s2.combination(&coefficients);
    let grid_values: Vec<DMatrix<f64>> =
        (0..s2.grid.node_count()).map(|n| s2.combination_at(&coefficients, n)).collect();
    let tol = options.tolerances.rank;
    let rank = numerical_rank(&value, tol);
    let rank_constant = grid_values.iter().all(|v| numerical_rank(v, tol) == rank);
    let min_abs_det = grid_values.iter().map(|v| v.determinant().abs()).fold(f64::INFINITY, f64::min);
    let sys = ParallelSystem::forms(nabla, Symmetry::Symmetric);
    let parallel_residual = if options.skip_substitution {
        0.0
    } else {
        sys.substitution_residual(
            &s2.grid,
            &s2.base_point,
            &DMatrix::from_column_slice(sys.size(), 1, sys.coordinates(&value).as_slice()),
            options.tolerances.substitution_steps(),
        )?
    };
    Ok(Witness {
        value,
        coefficients,
        grid: s2.grid.clone(),
        grid_values,
        rank,
        rank_constant,
        parallel_residual,
        min_abs_det,
    })
}

/// Coefficients of a maximal-rank element of `S²`. The orthogonal
/// projection of the identity is tried first, so flat and Levi-Civita cases
/// return the natural metric; otherwise the basis and seeded random
/// combinations are ranked by numerical rank, then by the smallest singular
/// value over the grid.
fn max_rank_search(s2: &SolutionSpace, options: &SolveOptions) -> Vec<f64> {
    let r = s2.basis[0].nrows();
    let id = DMatrix::<f64>::identity(r, r);
    let projection: Vec<f64> = s2.basis.iter().map(|b| b.dot(&id)).collect();
    let tol = options.tolerances.rank;
    let score = |c: &[f64]| -> (usize, f64) {
        let v = s2.combination(c);
        let norm = frobenius(&v);
        if norm == 0.0 {
            return (0, 0.0);
        }
        let rank = numerical_rank(&v, tol);
        let worst = (0..s2.grid.node_count())
            .map(|n| smallest_singular_value(&s2.combination_at(c, n)))
            .fold(f64::INFINITY, f64::min);
        (rank, worst / norm)
    };
    let proj_score = score(&projection);
    if proj_score.0 == r && proj_score.1 > 1e-6 {
        return projection;
    }
    let mut best = (projection, proj_score);
    for c in search_coefficients(s2.dimension(), options.tolerances.rank_draws, options.seed) {
        let sc = score(&c);
        if sc.0 > best.1 .0 || (sc.0 == best.1 .0 && sc.1 > best.1 .1) {
            best = (c, sc);
        }
    }
    best.0
}

/// Decides whether `∇` preserves a regular metric on the chart.
pub fn decide_metricity(nabla: &Connection, options: &SolveOptions) -> Result<MetricityCertificate> {
    let tol = options.tolerances;
    let s2 = solve_parallel_forms(nabla, Symmetry::Symmetric, options)?;
    let omega2 = solve_parallel_forms(nabla, Symmetry::Antisymmetric, options)?;
    let identity = MetricField::identity(nabla.domain().clone(), nabla.rank());
    let j = solve_fe(nabla, &amari_dual(&identity, nabla)?, options)?;

    let (verdict, witness) = if s2.dimension() == 0 {
        (Verdict::NotMetric, None)
    } else {
        let coeffs = max_rank_search(&s2, options);
        let w = build_witness(nabla, &s2, coeffs, options)?;
        let verdict = if w.rank == nabla.rank() {
            Verdict::RegularlyMetric
        } else {
            Verdict::SingularMetricOnly { max_rank: w.rank }
        };
        (verdict, Some(w))
    };

    let residuals = CertificateResiduals {
        s2_transport: s2.certified_residual,
        omega2_transport: omega2.certified_residual,
        j_transport: j.certified_residual,
        s2_substitution: s2.substitution_residual,
        omega2_substitution: omega2.substitution_residual,
        j_substitution: j.substitution_residual,
        witness_parallel: witness.as_ref().map_or(0.0, |w| w.parallel_residual),
    };
    let stabilized = s2.is_exact() && omega2.is_exact() && j.is_exact();
    let witness_ok = match (&verdict, &witness) {
        (Verdict::RegularlyMetric, Some(w)) => {
            w.parallel_residual <= tol.witness && w.min_abs_det >= REGULAR_DET_MIN && w.rank_constant
        }
        (Verdict::SingularMetricOnly { .. }, Some(w)) => w.parallel_residual <= tol.witness && w.rank_constant,
        _ => true,
    };
    let transport_ok = [residuals.s2_transport, residuals.omega2_transport, residuals.j_transport]
        .iter()
        .all(|&v| v <= tol.transport);
    let substitution_ok = [residuals.s2_substitution, residuals.omega2_substitution, residuals.j_substitution]
        .iter()
        .all(|&v| v <= tol.substitution);
    Ok(MetricityCertificate {
        exact_sequence_holds: j.dimension() == s2.dimension() + omega2.dimension(),
        dim_s2: s2.dimension(),
        dim_omega2: omega2.dimension(),
        dim_j: j.dimension(),
        verdict,
        witness,
        stabilized,
        certified: stabilized && witness_ok && transport_ok && substitution_ok && !options.skip_substitution,
        residuals,
        tolerances: tol,
        s2,
        omega2,
        j,
    })
}

/// `s^b(∇, g)`: smallest corank of `Φ` over `J(∇, g.∇)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GaugeIndex {
    pub value: usize,
    /// `J` was trivial and `value = r` by convention.
    pub empty_j: bool,
    pub dim_j: usize,
    pub stabilized: bool,
    pub certified_residual: f64,
}

pub fn gauge_index(nabla: &Connection, g: &MetricField, options: &SolveOptions) -> Result<GaugeIndex> {
    let r = nabla.rank();
    let dual = amari_dual(g, nabla)?;
    let j = solve_fe(nabla, &dual, options)?;
    if j.dimension() == 0 {
        return Ok(GaugeIndex {
            value: r,
            empty_j: true,
            dim_j: 0,
            stabilized: j.is_exact(),
            certified_residual: j.certified_residual,
        });
    }
    let gm = g.eval(&j.base_point)?;
    let mut best = r;
    for c in search_coefficients(j.dimension(), options.tolerances.rank_draws, options.seed) {
        let phi = j.combination(&c);
        let (big_phi, _) = split_phi(&gm, &phi)?;
        best = best.min(r - rank_relative_to(&big_phi, options.tolerances.rank, frobenius(&phi)));
        if best == 0 {
            break;
        }
    }
    Ok(GaugeIndex {
        value: best,
        empty_j: false,
        dim_j: j.dimension(),
        stabilized: j.is_exact(),
        certified_residual: j.certified_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndDecision {
    Zero,
    AtLeastOne,
}

#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub label: String,
    pub metric: MetricField,
    pub index: GaugeIndex,
}

#[derive(Debug, Clone)]
pub struct IndexReport {
    /// `s^b(∇, g)` for the first family member.
    pub sb_given_g: usize,
    /// Minimum of `s^b(∇, g)` over the family.
    pub sb: usize,
    pub ind_decision: IndDecision,
    pub max_parallel_metric_rank: usize,
    pub family: Vec<FamilyMember>,
    pub certificate: MetricityCertificate,
}

/// Number of seeded random constant metrics appended to every family.
pub const RANDOM_FAMILY_SIZE: usize = 8;

/// The declared family, then the identity metric, then seeded random
/// constant positive definite metrics.
pub fn metric_family(domain: &ChartDomain, r: usize, declared: &[MetricField], seed: u64) -> Vec<(String, MetricField)> {
    let mut out: Vec<(String, MetricField)> =
        declared.iter().enumerate().map(|(k, g)| (format!("declared[{k}]"), g.clone())).collect();
    out.push(("identity".into(), MetricField::identity(domain.clone(), r)));
    let mut rng = corpus::rng(seed ^ 0x6d65_7472_6963);
    for k in 0..RANDOM_FAMILY_SIZE {
        out.push((format!("random[{k}]"), corpus::random_constant_metric(&mut rng, domain, r)));
    }
    out
}

pub fn index_report(nabla: &Connection, declared: &[MetricField], options: &SolveOptions) -> Result<IndexReport> {
    let family = metric_family(nabla.domain(), nabla.rank(), declared, options.seed);
    let certificate = decide_metricity(nabla, options)?;
    let mut member_options = options.clone();
    member_options.skip_substitution = true;
    let members = family
        .into_par_iter()
        .map(|(label, metric)| {
            let index = gauge_index(nabla, &metric, &member_options)?;
            Ok(FamilyMember { label, metric, index })
        })
        .collect::<Result<Vec<_>>>()?;
    let sb = members.iter().map(|m| m.index.value).min().unwrap_or(nabla.rank());
    Ok(IndexReport {
        sb_given_g: members[0].index.value,
        sb,
        ind_decision: if certificate.verdict.is_regular() {
            IndDecision::Zero
        } else {
            IndDecision::AtLeastOne
        },
        max_parallel_metric_rank: certificate.witness.as_ref().map_or(0, |w| w.rank),
        family: members,
        certificate,
    })
}

/// Parallelism of `q` and `ω` along an FE solution, and rank constancy of `Φ`.
#[derive(Debug, Clone)]
pub struct Prop3Report {
    pub nabla_q: f64,
    pub nabla_omega: f64,
    /// Numerical rank of `Φ` at each grid node.
    pub phi_ranks: Vec<usize>,
    pub rank_constant: bool,
}

/// Checks `∇q = 0` and `∇ω = 0` for the solution `Σ c_b basis_b` of
/// `FE(∇, g.∇)`, differentiating the transported field by stencils.
pub fn prop3_check(
    nabla: &Connection,
    g: &MetricField,
    solution: &SolutionSpace,
    coefficients: &[f64],
    options: &SolveOptions,
) -> Result<Prop3Report> {
    let dual = amari_dual(g, nabla)?;
    let sys = ParallelSystem::hom(nabla, &dual)?;
    let phi0 = solution.combination(coefficients);
    let samples = sys.stencil_samples(
        &solution.grid,
        &solution.base_point,
        &sys.coordinates(&phi0),
        options.tolerances.substitution_steps(),
    )?;
    let m = nabla.dim();
    let r = nabla.rank();
    let dg = CompiledMatrices::new(r, r, (0..m).map(|i| g.matrix().differentiate(i)).collect());
    let (mut nabla_q, mut nabla_omega) = (0.0f64, 0.0f64);
    for s in &samples {
        let gm = g.eval(&s.point)?;
        let dgv = dg.eval(&s.point)?;
        let gamma = nabla.eval(&s.point)?;
        let phi = &s.value;
        let q = (phi * &gm + &gm * phi.transpose()) * 0.5;
        let w = (phi * &gm - &gm * phi.transpose()) * 0.5;
        for i in 0..m {
            let dphi = &s.partials[i];
            let db = dphi * &gm + phi * &dgv[i];
            let db_t = &dgv[i] * phi.transpose() + &gm * dphi.transpose();
            let dq = (&db + &db_t) * 0.5;
            let dw = (&db - &db_t) * 0.5;
            let cov = |t: &DMatrix<f64>, dt: &DMatrix<f64>| dt - &gamma[i] * t - t * gamma[i].transpose();
            nabla_q = nabla_q.max(max_abs(&cov(&q, &dq)));
            nabla_omega = nabla_omega.max(max_abs(&cov(&w, &dw)));
        }
    }
    let points = solution.grid.sample_points();
    let phi_ranks = (0..points.len())
        .map(|n| {
            let gm = g.eval(&points[n])?;
            let phi = solution.combination_at(coefficients, n);
            let (big_phi, _) = split_phi(&gm, &phi)?;
            Ok(rank_relative_to(&big_phi, options.tolerances.rank, frobenius(&phi)))
        })
        .collect::<Result<Vec<_>>>()?;
    let rank_constant = phi_ranks.windows(2).all(|w| w[0] == w[1]);
    Ok(Prop3Report {
        nabla_q,
        nabla_omega,
        phi_ranks,
        rank_constant,
    })
}

/// Kernel/image splitting of `Φ` and `Φ*` at one point. Bases are columns
/// of coordinate vectors of sections.
#[derive(Debug, Clone)]
pub struct PointDecomposition {
    pub point: Vec<f64>,
    pub ker_phi: DMatrix<f64>,
    pub im_phi: DMatrix<f64>,
    pub ker_phi_star: DMatrix<f64>,
    pub im_phi_star: DMatrix<f64>,
    pub direct_phi: bool,
    pub direct_phi_star: bool,
}

impl PointDecomposition {
    /// `(dim ker Φ, dim im Φ, dim ker Φ*, dim im Φ*)`.
    pub fn ranks(&self) -> [usize; 4] {
        [
            self.ker_phi.ncols(),
            self.im_phi.ncols(),
            self.ker_phi_star.ncols(),
            self.im_phi_star.ncols(),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct DecompositionReport {
    pub points: Vec<PointDecomposition>,
    pub all_direct: bool,
    pub ranks_constant: bool,
    /// Ranks at the first point.
    pub subbundle_ranks: [usize; 4],
}

// A section with coordinate column c is mapped by Φ to the section with
// coordinates Φᵀ c. Singular values are compared against `rank_tol * scale`
// with `scale` the size of φ, since Φ or Φ* alone may vanish.
fn kernel_and_image(op: &DMatrix<f64>, rank_tol: f64, scale: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let r = op.nrows();
    let col_op = op.transpose();
    let cutoff = rank_tol * scale;
    let ker = null_space(&col_op, cutoff);
    let svd = col_op.clone().svd(true, false);
    let u = svd.u.expect("left vectors");
    let cols: Vec<_> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > cutoff)
        .map(|(k, _)| u.column(k).into_owned())
        .collect();
    let im = if cols.is_empty() { DMatrix::zeros(r, 0) } else { DMatrix::from_columns(&cols) };
    (ker, im)
}

fn is_direct(a: &DMatrix<f64>, b: &DMatrix<f64>, r: usize) -> bool {
    if a.ncols() + b.ncols() != r {
        return false;
    }
    let mut joined = DMatrix::zeros(r, r);
    joined.view_mut((0, 0), (r, a.ncols())).copy_from(a);
    joined.view_mut((0, a.ncols()), (r, b.ncols())).copy_from(b);
    smallest_singular_value(&joined) >= 1e-8
}

/// `E = ker Φ ⊕ im Φ` and `E = ker Φ* ⊕ im Φ*` at each point.
pub fn decompositions(
    g: &MetricField,
    points: &[Vec<f64>],
    phi_values: &[DMatrix<f64>],
    rank_tol: f64,
) -> Result<DecompositionReport> {
    if points.len() != phi_values.len() || points.is_empty() {
        return Err(Error::Shape("one endomorphism value per sample point is required".into()));
    }
    let r = g.rank();
    let mut out = Vec::with_capacity(points.len());
    for (x, phi) in points.iter().zip(phi_values) {
        let gm = g.eval(x)?;
        let min_eig = gm.clone().symmetric_eigen().eigenvalues.min();
        if min_eig < 1e-8 {
            return Err(Error::NotPositiveDefinite {
                point: x.clone(),
                min_eigenvalue: min_eig,
            });
        }
        let (big_phi, big_phi_star) = split_phi(&gm, phi)?;
        let scale = frobenius(phi);
        let (ker_phi, im_phi) = kernel_and_image(&big_phi, rank_tol, scale);
        let (ker_phi_star, im_phi_star) = kernel_and_image(&big_phi_star, rank_tol, scale);
        out.push(PointDecomposition {
            point: x.clone(),
            direct_phi: is_direct(&ker_phi, &im_phi, r),
            direct_phi_star: is_direct(&ker_phi_star, &im_phi_star, r),
            ker_phi,
            im_phi,
            ker_phi_star,
            im_phi_star,
        });
    }
    let first = out[0].ranks();
    Ok(DecompositionReport {
        all_direct: out.iter().all(|p| p.direct_phi && p.direct_phi_star),
        ranks_constant: out.iter().all(|p| p.ranks() == first),
        subbundle_ranks: first,
        points: out,
    })
}

#[derive(Debug, Clone)]
pub struct Theorem3Report {
    pub verdict: Verdict,
    /// Verdict for `g.∇`, one per metric.
    pub dual_verdicts: Vec<Verdict>,
    pub holds: bool,
}

/// `∇` is regularly metric iff every `g.∇` is.
pub fn theorem3_check(nabla: &Connection, metrics: &[MetricField], options: &SolveOptions) -> Result<Theorem3Report> {
    let verdict = decide_metricity(nabla, options)?.verdict;
    let dual_verdicts = metrics
        .par_iter()
        .map(|g| Ok(decide_metricity(&amari_dual(g, nabla)?, options)?.verdict))
        .collect::<Result<Vec<_>>>()?;
    let holds = dual_verdicts.iter().all(|v| v.is_regular() == verdict.is_regular());
    Ok(Theorem3Report {
        verdict,
        dual_verdicts,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{flat, nilpotent, nilpotent_matrix};

    #[test]
    fn split_phi_examples() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let phi = nilpotent_matrix();
        let (p, ps) = split_phi(&g, &phi).unwrap();
        assert!(max_abs(&(&p - DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 1.0, 0.0]))) < 1e-15);
        assert!(max_abs(&(&ps - DMatrix::from_row_slice(2, 2, &[0.0, 0.5, -1.0, 0.0]))) < 1e-15);
        let (q, w) = induced_forms(&g, &p, &ps);
        assert!(max_abs(&(&q - q.transpose())) < 1e-15);
        assert!(max_abs(&(&w + w.transpose())) < 1e-15);
        let (id, zero) = split_phi(&g, &DMatrix::identity(2, 2)).unwrap();
        assert_eq!((id, max_abs(&zero)), (DMatrix::identity(2, 2), 0.0));
    }

    #[test]
    fn flat_and_nilpotent_verdicts() {
        let opts = SolveOptions::default();
        let c = decide_metricity(&flat(2), &opts).unwrap();
        assert_eq!((c.dim_s2, c.dim_omega2, c.dim_j), (3, 1, 4));
        assert_eq!(c.verdict, Verdict::RegularlyMetric);
        assert!(max_abs(&(&c.witness.as_ref().unwrap().value - DMatrix::identity(2, 2))) < 1e-12);
        assert!(c.certified);

        let c = decide_metricity(&nilpotent(), &opts).unwrap();
        assert_eq!((c.dim_s2, c.dim_omega2, c.dim_j), (1, 1, 2));
        assert_eq!(c.verdict, Verdict::SingularMetricOnly { max_rank: 1 });
        assert!(c.certified);
    }

    #[test]
    fn decomposition_of_rank_one_projection() {
        let g = MetricField::identity(crate::corpus::unit_square(), 2);
        let phi = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let rep = decompositions(&g, &[vec![0.0, 0.0]], &[phi], 1e-8).unwrap();
        assert!(rep.all_direct);
        assert_eq!(rep.subbundle_ranks, [1, 1, 2, 0]);
        let k = &rep.points[0].ker_phi;
        assert!(k[(0, 0)].abs() < 1e-12 && (k[(1, 0)].abs() - 1.0).abs() < 1e-12);
    }
}
