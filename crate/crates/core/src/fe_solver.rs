//! Finite-dimensional solution spaces of parallel-section systems.
//!
//! A parallel section is determined by its value at a base point, so each
//! solution space is computed as a subspace of values at `x0`:
//!
//! 1. prolongation: intersect the kernels of the curvature of the system and
//!    its covariant derivatives at `x0` until the dimension stops dropping;
//! 2. certification: extend the surviving subspace over a grid by
//!    spanning-tree transport and keep exactly the directions whose
//!    redundant-edge discrepancy is below the transport tolerance.
//!
//! Writing the system as `∂_i v + C_i v = 0` with `C_i = −M_i`, the
//! curvature is `R_ij = ∂_i C_j − ∂_j C_i + C_i C_j − C_j C_i` and the
//! covariant derivative of an endomorphism field is `∇_k T = ∂_k T + [C_k, T]`.
//! All of these are computed on Taylor jets of the coefficients at `x0`.

use nalgebra::{DMatrix, DVector};

use crate::bundle::{curvature, ChartDomain, Connection};
use crate::error::{Error, Result};
use crate::expr::jet::{JetSpace, MatrixJet};
use crate::linalg::{canonical_basis, kernel_cutoff, null_space, vec_row_major};
use crate::tolerances::Tolerances;
use crate::transport::{ExtensionPlan, ParallelSystem, Symmetry};

/// Run-time knobs for the solvers.
#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    pub tolerances: Tolerances,
    /// Base point; defaults to the central node of the extension grid.
    pub base_point: Option<Vec<f64>>,
    /// Skip the five-point substitution checks of extended solutions and
    /// witnesses. Dimensions and verdicts are unaffected, but nothing is
    /// certified.
    pub skip_substitution: bool,
    /// Seed for randomized searches over solution spaces.
    pub seed: u64,
}

impl SolveOptions {
    pub fn with_tolerances(tolerances: Tolerances) -> Self {
        SolveOptions {
            tolerances,
            ..SolveOptions::default()
        }
    }

    /// The extension grid and the base point on it.
    pub fn grid_and_base(&self, domain: &ChartDomain) -> Result<(ChartDomain, Vec<f64>)> {
        let grid = domain.with_samples(self.tolerances.grid);
        let x0 = match &self.base_point {
            Some(p) => {
                if grid.node_index_of(p).is_none() {
                    return Err(Error::NotAGridNode(p.clone()));
                }
                p.clone()
            }
            None => grid.central_node(),
        };
        Ok((grid, x0))
    }
}

/// Result of the prolongation at a base point.
#[derive(Debug, Clone)]
pub struct ConstraintSubspace {
    /// Orthonormal columns in system coordinates.
    pub basis: DMatrix<f64>,
    /// `dim K_k` for `k = 0, 1, …` as far as computed.
    pub dims_by_order: Vec<usize>,
    /// First `k` with `K_k = K_{k+1}`, if reached within the order limit.
    pub stabilized_at: Option<usize>,
}

impl ConstraintSubspace {
    pub fn dimension(&self) -> usize {
        self.basis.ncols()
    }

    pub fn stabilized(&self) -> bool {
        self.stabilized_at.is_some()
    }
}

/// `∇^k R` at `x0`, one order at a time, so that prolongation can stop as
/// soon as the kernel is settled.
struct CurvatureTower {
    space: JetSpace,
    c: Vec<MatrixJet>,
    level: Vec<MatrixJet>,
}

impl CurvatureTower {
    fn new(sys: &ParallelSystem, x0: &[f64], max_order: usize) -> Result<Self> {
        let m = sys.dim();
        let space = JetSpace::new(m, max_order + 1);
        let c: Vec<MatrixJet> = sys.generator_jets(&space, x0)?.iter().map(|g| g.scale(-1.0)).collect();
        let mut level = Vec::new();
        for i in 0..m {
            for j in i + 1..m {
                level.push(
                    space
                        .matrix_derivative(&c[j], i)
                        .sub(&space.matrix_derivative(&c[i], j))
                        .add(&space.matmul(&c[i], &c[j]))
                        .sub(&space.matmul(&c[j], &c[i])),
                );
            }
        }
        Ok(CurvatureTower { space, c, level })
    }

    fn values(&self) -> Vec<DMatrix<f64>> {
        self.level.iter().map(|t| t.value().clone()).collect()
    }

    fn advance(&mut self) {
        let mut next = Vec::with_capacity(self.level.len() * self.c.len());
        for t in &self.level {
            for (l, cl) in self.c.iter().enumerate() {
                next.push(
                    self.space
                        .matrix_derivative(t, l)
                        .add(&self.space.matmul(cl, t))
                        .sub(&self.space.matmul(t, cl)),
                );
            }
        }
        self.level = next;
    }
}

/// Values at `x0` of `∇^k R` for `k = 0..=max_order` (each level lists every
/// index combination).
pub fn curvature_tower(sys: &ParallelSystem, x0: &[f64], max_order: usize) -> Result<Vec<Vec<DMatrix<f64>>>> {
    let mut tower = CurvatureTower::new(sys, x0, max_order)?;
    let mut out = Vec::with_capacity(max_order + 1);
    for k in 0..=max_order {
        if k > 0 {
            tower.advance();
        }
        out.push(tower.values());
    }
    Ok(out)
}

fn stack_rows(blocks: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, n);
    let mut at = 0;
    for b in blocks {
        out.view_mut((at, 0), (b.nrows(), n)).copy_from(b);
        at += b.nrows();
    }
    out
}

/// Intersection of the kernels of `∇^k R` at `x0`, order by order.
pub fn stabilized_constraint_subspace(
    sys: &ParallelSystem,
    x0: &[f64],
    max_order: usize,
    kernel_tol: f64,
) -> Result<ConstraintSubspace> {
    let n = sys.size();
    let mut tower = CurvatureTower::new(sys, x0, max_order)?;
    let mut blocks: Vec<DMatrix<f64>> = Vec::new();
    let mut dims = Vec::new();
    let mut basis = DMatrix::identity(n, n);
    let mut stabilized_at = None;
    for k in 0..=max_order {
        if k > 0 {
            tower.advance();
        }
        blocks.extend(tower.values());
        let stack = stack_rows(&blocks, n);
        basis = null_space(&stack, kernel_cutoff(&stack, kernel_tol));
        dims.push(basis.ncols());
        if basis.ncols() == 0 {
            stabilized_at = Some(k);
            break;
        }
        if k > 0 && dims[k] == dims[k - 1] {
            stabilized_at = Some(k - 1);
            break;
        }
    }
    Ok(ConstraintSubspace {
        basis,
        dims_by_order: dims,
        stabilized_at,
    })
}

/// The action `φ ↦ φ R*_ij − R_ij φ` of the `Hom(E, E)` curvature at `x`,
/// as an `r²×r²` matrix on row-major flattened `φ`.
pub fn hom_curvature_action(
    nabla: &Connection,
    target: &Connection,
    x: &[f64],
    i: usize,
    j: usize,
) -> Result<DMatrix<f64>> {
    let r = nabla.rank();
    let ra = curvature(nabla).eval(x)?;
    let rb = curvature(target).eval(x)?;
    let id = DMatrix::identity(r, r);
    Ok(id.kronecker(&rb[i][j].transpose()) - ra[i][j].kronecker(&id))
}

/// A certified basis of parallel sections, given by values at the base point.
#[derive(Debug, Clone)]
pub struct SolutionSpace {
    pub base_point: Vec<f64>,
    /// Orthonormal (Frobenius) values at the base point, canonically ordered.
    pub basis: Vec<DMatrix<f64>>,
    /// Extension grid used for certification.
    pub grid: ChartDomain,
    /// `extensions[b][node]`: value of basis element `b` at each grid node.
    pub extensions: Vec<Vec<DMatrix<f64>>>,
    /// Largest redundant-edge discrepancy of the retained basis.
    pub certified_residual: f64,
    /// Largest defect of the five-point substitution check (0 when skipped).
    pub substitution_residual: f64,
    pub constraint: ConstraintSubspace,
}

impl SolutionSpace {
    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    /// Dimension is exact (not only a lower bound) when prolongation
    /// stabilized.
    pub fn is_exact(&self) -> bool {
        self.constraint.stabilized()
    }

    /// Value at node `node` of `Σ_b c_b basis_b`.
    pub fn combination_at(&self, coeffs: &[f64], node: usize) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.basis[0].nrows(), self.basis[0].ncols());
        for (c, ext) in coeffs.iter().zip(&self.extensions) {
            acc += &ext[node] * *c;
        }
        acc
    }

    /// Value at the base point of `Σ_b c_b basis_b`.
    pub fn combination(&self, coeffs: &[f64]) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.basis[0].nrows(), self.basis[0].ncols());
        for (c, b) in coeffs.iter().zip(&self.basis) {
            acc += b * *c;
        }
        acc
    }
}

/// Prolongation followed by spanning-tree certification.
pub fn solve_system(sys: &ParallelSystem, options: &SolveOptions) -> Result<SolutionSpace> {
    let tol = &options.tolerances;
    let (grid, x0) = options.grid_and_base(sys.domain())?;
    let constraint = stabilized_constraint_subspace(sys, &x0, tol.max_order, tol.kernel)?;
    let empty = |constraint: ConstraintSubspace, grid: ChartDomain| SolutionSpace {
        base_point: x0.clone(),
        basis: Vec::new(),
        grid,
        extensions: Vec::new(),
        certified_residual: 0.0,
        substitution_residual: 0.0,
        constraint,
    };
    if constraint.dimension() == 0 {
        return Ok(empty(constraint, grid));
    }

    let plan = ExtensionPlan::build(sys, &grid, &x0, tol.steps_per_edge)?;
    let defect = plan.defect_map(&constraint.basis);
    let kept = null_space(&defect, tol.transport);
    if kept.ncols() == 0 {
        return Ok(empty(constraint, grid));
    }
    let candidates = &constraint.basis * kept;

    // Canonical order is fixed in matrix coordinates, independent of which
    // basis of the subspace the SVD happened to return.
    let as_matrices: Vec<DVector<f64>> = candidates
        .column_iter()
        .map(|c| vec_row_major(&sys.embed(&c.into_owned())))
        .collect();
    let canonical = canonical_basis(&DMatrix::from_columns(&as_matrices), 1e-9);
    let r = sys.rank();
    let cols = if sys.size() == r { 1 } else { r };
    let basis: Vec<DMatrix<f64>> = canonical
        .column_iter()
        .map(|c| DMatrix::from_row_slice(r, cols, c.as_slice()))
        .collect();
    let coords = DMatrix::from_columns(&basis.iter().map(|b| sys.coordinates(b)).collect::<Vec<_>>());

    let values = plan.extend(&coords);
    let certified_residual = plan.residual(&values);
    let extensions = (0..basis.len())
        .map(|b| values.iter().map(|v| sys.embed(&v.column(b).into_owned())).collect())
        .collect();
    let substitution_residual = if options.skip_substitution {
        0.0
    } else {
        sys.substitution_residual(&grid, &x0, &coords, tol.substitution_steps())?
    };
    Ok(SolutionSpace {
        base_point: x0,
        basis,
        grid,
        extensions,
        certified_residual,
        substitution_residual,
        constraint,
    })
}

/// Basis of `J_{∇∇*}`: endomorphisms `φ` with `D^{∇∇*} φ = 0`.
pub fn solve_fe(nabla: &Connection, target: &Connection, options: &SolveOptions) -> Result<SolutionSpace> {
    solve_system(&ParallelSystem::hom(nabla, target)?, options)
}

/// Basis of ∇-parallel symmetric or antisymmetric bilinear forms.
pub fn solve_parallel_forms(nabla: &Connection, symmetry: Symmetry, options: &SolveOptions) -> Result<SolutionSpace> {
    solve_system(&ParallelSystem::forms(nabla, symmetry), options)
}

/// Basis of ∇-parallel sections of `E` (as `r×1` columns).
pub fn solve_parallel_sections(nabla: &Connection, options: &SolveOptions) -> Result<SolutionSpace> {
    solve_system(&ParallelSystem::vector(nabla), options)
}
