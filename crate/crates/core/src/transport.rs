//! Parallel transport by classical RK4 with uniform steps.
//!
//! Every transport problem here is a linear system `∂_i v = M_i(x) v` on a
//! coordinate vector `v ∈ R^n`; along a segment `x(t) = a + t (b − a)` this
//! becomes `dv/dt = Σ_i (b − a)_i M_i(x(t)) v`. The four bundles differ only
//! in the generators `M_i`:
//!
//! * sections of `E`: `M_i = −Γ_iᵀ`;
//! * `Hom(E, E)` with source `∇` and target `∇*`: `M_i φ = Γ_i φ − φ Γ*_i`,
//!   i.e. the local form of `D^{∇∇*} φ = 0`;
//! * symmetric or antisymmetric forms: `M_i Q = Γ_i Q + Q Γ_iᵀ`, restricted
//!   to an orthonormal basis of the subspace.
//!
//! Matrices are flattened row-major (`vec_row_major`), so left and right
//! multiplication become `X ⊗ I` and `I ⊗ Yᵀ`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::bundle::{ChartDomain, Connection};
use crate::error::{Error, Result};
use crate::expr::jet::{JetSpace, MatrixJet};
use crate::linalg::{max_abs, singular_values, unvec_row_major, vec_row_major};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Symmetry {
    Symmetric,
    Antisymmetric,
}

#[derive(Debug, Clone)]
enum Kind {
    Vector,
    Hom(Connection),
    Forms(Symmetry, DMatrix<f64>),
}

/// A linear parallel-transport system over the chart of a connection.
#[derive(Debug, Clone)]
pub struct ParallelSystem {
    source: Connection,
    kind: Kind,
}

/// Orthonormal basis (columns, in `R^{r²}`) of symmetric or antisymmetric
/// matrices, ordered by `(a, b)` with `a <= b` (resp. `a < b`).
pub fn form_basis(r: usize, symmetry: Symmetry) -> DMatrix<f64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut cols = Vec::new();
    for a in 0..r {
        for b in a..r {
            let mut v = DVector::zeros(r * r);
            match symmetry {
                Symmetry::Symmetric if a == b => v[a * r + a] = 1.0,
                Symmetry::Symmetric => {
                    v[a * r + b] = s;
                    v[b * r + a] = s;
                }
                Symmetry::Antisymmetric if a == b => continue,
                Symmetry::Antisymmetric => {
                    v[a * r + b] = s;
                    v[b * r + a] = -s;
                }
            }
            cols.push(v);
        }
    }
    if cols.is_empty() {
        DMatrix::zeros(r * r, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

impl ParallelSystem {
    /// Parallel sections of `E`.
    pub fn vector(nabla: &Connection) -> Self {
        ParallelSystem {
            source: nabla.clone(),
            kind: Kind::Vector,
        }
    }

    /// Solutions of `D^{∇∇*} φ = 0`.
    pub fn hom(nabla: &Connection, target: &Connection) -> Result<Self> {
        if nabla.dim() != target.dim() || nabla.rank() != target.rank() {
            return Err(Error::Shape("source and target connections live over different bundles".into()));
        }
        Ok(ParallelSystem {
            source: nabla.clone(),
            kind: Kind::Hom(target.clone()),
        })
    }

    /// Parallel symmetric or antisymmetric bilinear forms.
    pub fn forms(nabla: &Connection, symmetry: Symmetry) -> Self {
        ParallelSystem {
            source: nabla.clone(),
            kind: Kind::Forms(symmetry, form_basis(nabla.rank(), symmetry)),
        }
    }

    pub fn domain(&self) -> &ChartDomain {
        self.source.domain()
    }

    /// Which form bundle this system lives on, if any.
    pub fn symmetry(&self) -> Option<Symmetry> {
        match &self.kind {
            Kind::Forms(s, _) => Some(*s),
            _ => None,
        }
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    pub fn rank(&self) -> usize {
        self.source.rank()
    }

    /// Length of the coordinate vector `v`.
    pub fn size(&self) -> usize {
        let r = self.rank();
        match &self.kind {
            Kind::Vector => r,
            Kind::Hom(_) => r * r,
            Kind::Forms(_, u) => u.ncols(),
        }
    }

    // `kron(Γ, I)`, `kron(I, Tᵀ)` and `kron(I, Γ)` written out entrywise;
    // this runs at every RK4 stage.
    fn assemble(&self, gamma: &DMatrix<f64>, target: Option<&DMatrix<f64>>) -> DMatrix<f64> {
        let r = self.rank();
        let left = |out: &mut DMatrix<f64>| {
            for a in 0..r {
                for c in 0..r {
                    let v = gamma[(a, c)];
                    if v != 0.0 {
                        for b in 0..r {
                            out[(a * r + b, c * r + b)] += v;
                        }
                    }
                }
            }
        };
        match &self.kind {
            Kind::Vector => -gamma.transpose(),
            Kind::Hom(_) => {
                let t = target.expect("target");
                let mut out = DMatrix::zeros(r * r, r * r);
                left(&mut out);
                for a in 0..r {
                    for b in 0..r {
                        for d in 0..r {
                            out[(a * r + b, a * r + d)] -= t[(d, b)];
                        }
                    }
                }
                out
            }
            Kind::Forms(_, u) => {
                let mut full = DMatrix::zeros(r * r, r * r);
                left(&mut full);
                for a in 0..r {
                    for b in 0..r {
                        for d in 0..r {
                            full[(a * r + b, a * r + d)] += gamma[(b, d)];
                        }
                    }
                }
                u.transpose() * full * u
            }
        }
    }

    /// The generators `M_i(x)`.
    pub fn generators(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let gamma = self.source.eval(x)?;
        let target = match &self.kind {
            Kind::Hom(t) => Some(t.eval(x)?),
            _ => None,
        };
        Ok(gamma
            .iter()
            .enumerate()
            .map(|(i, g)| self.assemble(g, target.as_ref().map(|t| &t[i])))
            .collect())
    }

    /// Taylor expansions of the generators around `x0`.
    pub fn generator_jets(&self, space: &JetSpace, x0: &[f64]) -> Result<Vec<MatrixJet>> {
        let gamma = self.source.eval_jets(space, x0)?;
        let target = match &self.kind {
            Kind::Hom(t) => Some(t.eval_jets(space, x0)?),
            _ => None,
        };
        Ok(gamma
            .iter()
            .enumerate()
            .map(|(i, g)| MatrixJet {
                coeffs: g
                    .coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, gk)| self.assemble(gk, target.as_ref().map(|t| &t[i].coeffs[k])))
                    .collect(),
            })
            .collect())
    }

    /// Coordinates of an `r×r` matrix (or an `r`-vector as `r×1`).
    pub fn coordinates(&self, m: &DMatrix<f64>) -> DVector<f64> {
        match &self.kind {
            Kind::Vector => m.column(0).into_owned(),
            Kind::Hom(_) => vec_row_major(m),
            Kind::Forms(_, u) => u.transpose() * vec_row_major(m),
        }
    }

    /// Inverse of [`ParallelSystem::coordinates`].
    pub fn embed(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let r = self.rank();
        match &self.kind {
            Kind::Vector => DMatrix::from_column_slice(r, 1, v.as_slice()),
            Kind::Hom(_) => unvec_row_major(v, r, r),
            Kind::Forms(_, u) => unvec_row_major(&(u * v), r, r),
        }
    }

    // `Σ_i d_i M_i` at `a + t d`; assembly is linear in Γ, so the blocks are
    // combined first.
    fn velocity(&self, a: &[f64], d: &[f64], t: f64) -> Result<DMatrix<f64>> {
        let x: Vec<f64> = a.iter().zip(d).map(|(p, q)| p + t * q).collect();
        let combine = |blocks: Vec<DMatrix<f64>>| {
            let r = self.rank();
            blocks
                .iter()
                .zip(d)
                .filter(|(_, &di)| di != 0.0)
                .fold(DMatrix::zeros(r, r), |acc, (g, &di)| acc + g * di)
        };
        let gamma = combine(self.source.eval(&x)?);
        let target = match &self.kind {
            Kind::Hom(t) => Some(combine(t.eval(&x)?)),
            _ => None,
        };
        Ok(self.assemble(&gamma, target.as_ref()))
    }

    /// RK4 transport of the columns of `y0` along the straight segment `a → b`.
    pub fn integrate_segment(&self, a: &[f64], b: &[f64], steps: usize, y0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let d: Vec<f64> = a.iter().zip(b).map(|(p, q)| q - p).collect();
        let h = 1.0 / steps as f64;
        let mut y = y0.clone();
        let (rows, cols) = y.shape();
        let [mut k1, mut k2, mut k3, mut k4, mut probe] = std::array::from_fn(|_| DMatrix::zeros(rows, cols));
        let mut a_start = self.velocity(a, &d, 0.0)?;
        for k in 0..steps {
            let t = k as f64 * h;
            let a_mid = self.velocity(a, &d, t + 0.5 * h)?;
            let a_end = self.velocity(a, &d, if k + 1 == steps { 1.0 } else { t + h })?;
            k1.gemm(1.0, &a_start, &y, 0.0);
            probe.copy_from(&y);
            add_scaled(&mut probe, 0.5 * h, &k1);
            k2.gemm(1.0, &a_mid, &probe, 0.0);
            probe.copy_from(&y);
            add_scaled(&mut probe, 0.5 * h, &k2);
            k3.gemm(1.0, &a_mid, &probe, 0.0);
            probe.copy_from(&y);
            add_scaled(&mut probe, h, &k3);
            k4.gemm(1.0, &a_end, &probe, 0.0);
            add_scaled(&mut y, h / 6.0, &k1);
            add_scaled(&mut y, h / 3.0, &k2);
            add_scaled(&mut y, h / 3.0, &k3);
            add_scaled(&mut y, h / 6.0, &k4);
            a_start = a_end;
        }
        Ok(y)
    }

    /// Transport of the columns of `y0` along a polyline.
    pub fn integrate_path(&self, path: &PolylinePath, y0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.integrate_path_with(path, path.steps_per_segment, y0)
    }

    fn integrate_path_with(&self, path: &PolylinePath, steps: usize, y0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        path.check_inside(self.domain())?;
        let mut y = y0.clone();
        for w in path.vertices.windows(2) {
            y = self.integrate_segment(&w[0], &w[1], steps, &y)?;
        }
        Ok(y)
    }

    /// The linear map `v0 ↦ v(end)` along a path.
    pub fn propagator(&self, path: &PolylinePath) -> Result<DMatrix<f64>> {
        let n = self.size();
        self.integrate_path(path, &DMatrix::identity(n, n))
    }

    /// Transport with a step-doubling estimate of the integration error.
    pub fn transport(&self, path: &PolylinePath, y0: &DMatrix<f64>) -> Result<TransportResult> {
        let coarse = self.integrate_path(path, y0)?;
        let fine = self.integrate_path_with(path, 2 * path.steps_per_segment, y0)?;
        Ok(TransportResult {
            local_truncation_estimate: max_abs(&(&coarse - &fine)) * 16.0 / 15.0,
            end_frame: coarse,
        })
    }

    /// Transport along the axis-ordered staircase `x0 → y`: first along
    /// `x1`, then `x2`, and so on.
    pub fn staircase(&self, x0: &[f64], y: &[f64], steps: usize, v0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.staircase_with(x0, y, &vec![steps; x0.len()], v0)
    }

    fn staircase_with(&self, x0: &[f64], y: &[f64], steps: &[usize], v0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut here = x0.to_vec();
        let mut v = v0.clone();
        for i in 0..x0.len() {
            if y[i] != here[i] {
                let mut next = here.clone();
                next[i] = y[i];
                v = self.integrate_segment(&here, &next, steps[i], &v)?;
                here = next;
            }
        }
        Ok(v)
    }

    /// Checks that the staircase field through `v0` satisfies `∂_i v = M_i v`
    /// at every grid node, with derivatives from a five-point stencil.
    /// Returns the largest entry of the defect.
    pub fn substitution_residual(&self, grid: &ChartDomain, x0: &[f64], v0: &DMatrix<f64>, steps: usize) -> Result<f64> {
        if v0.ncols() == 0 {
            return Ok(0.0);
        }
        let mut worst = 0.0f64;
        for sample in self.staircase_stencils(grid, x0, v0, steps)? {
            for (m, d) in self.generators(&sample.point)?.iter().zip(&sample.partials) {
                worst = worst.max(max_abs(&(d - m * &sample.value)));
            }
        }
        Ok(worst)
    }
}

/// Five-point stencil spacing as a fraction of the box width.
const STENCIL_STEP: f64 = 2e-4;

/// RK4 steps for the staircase leg along `axis` ending at the node
/// coordinate `target`: `steps` per grid spacing travelled. The count is
/// fixed by the node so that the stencil points around it share one
/// discretization.
fn staircase_steps(grid: &ChartDomain, x0: &[f64], axis: usize, target: f64, steps: usize) -> usize {
    let spacing = (grid.upper()[axis] - grid.lower()[axis]) / (grid.samples_per_axis() - 1) as f64;
    let cells = ((target - x0[axis]).abs() / spacing).round().max(1.0) as usize;
    steps * cells
}

/// Value and five-point-stencil partial derivatives of a staircase field at
/// one grid node.
#[derive(Debug, Clone)]
pub struct StencilSample {
    pub point: Vec<f64>,
    pub value: DMatrix<f64>,
    pub partials: Vec<DMatrix<f64>>,
}

impl ParallelSystem {
    /// Samples the staircase field through `v0` (embedded as matrices) at
    /// every grid node.
    pub fn stencil_samples(&self, grid: &ChartDomain, x0: &[f64], v0: &DVector<f64>, steps: usize) -> Result<Vec<StencilSample>> {
        let col = DMatrix::from_column_slice(v0.len(), 1, v0.as_slice());
        let embed = |m: &DMatrix<f64>| self.embed(&m.column(0).into_owned());
        Ok(self
            .staircase_stencils(grid, x0, &col, steps)?
            .into_iter()
            .map(|s| StencilSample {
                value: embed(&s.value),
                partials: s.partials.iter().map(embed).collect(),
                point: s.point,
            })
            .collect())
    }

    // Staircase values and stencil derivatives at every grid node, in
    // flat-index order. Staircases through nodes with the same leading
    // coordinates share their first legs, so the grid is swept as a tree
    // over the axes and each shared leg is integrated once.
    fn staircase_stencils(&self, grid: &ChartDomain, x0: &[f64], v0: &DMatrix<f64>, steps: usize) -> Result<Vec<StencilSample>> {
        let m = x0.len();
        let sweep = Sweep { sys: self, grid, x0, steps };
        let legs = (0..grid.samples_per_axis())
            .into_par_iter()
            .map(|k| {
                let mut out = Vec::new();
                sweep.run(0, x0, v0, &mut Vec::new(), None, Some(k), &mut out)?;
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut values: Vec<Option<DMatrix<f64>>> = vec![None; grid.node_count()];
        let mut around: Vec<Vec<[Option<DMatrix<f64>>; 4]>> = vec![vec![Default::default(); m]; grid.node_count()];
        for (idx, slot, v) in legs.into_iter().flatten() {
            let flat = grid.flat_index(&idx);
            match slot {
                None => values[flat] = Some(v),
                Some((axis, o)) => around[flat][axis][o] = Some(v),
            }
        }
        Ok(values
            .into_iter()
            .zip(around)
            .enumerate()
            .map(|(flat, (value, around))| {
                let partials = around
                    .into_iter()
                    .enumerate()
                    .map(|(i, [p2, p1, m1, m2])| {
                        let delta = STENCIL_STEP * (grid.upper()[i] - grid.lower()[i]);
                        let (p2, p1, m1, m2) = (p2.unwrap(), p1.unwrap(), m1.unwrap(), m2.unwrap());
                        (-p2 + p1 * 8.0 - m1 * 8.0 + m2) / (12.0 * delta)
                    })
                    .collect();
                StencilSample {
                    point: grid.node(&grid.multi_index(flat)),
                    value: value.expect("every node is visited"),
                    partials,
                }
            })
            .collect())
    }
}

/// Offsets, in stencil steps, of the four off-centre stencil points.
const STENCIL_OFFSETS: [f64; 4] = [2.0, 1.0, -1.0, -2.0];

type SweepOutput = Vec<(Vec<usize>, Option<(usize, usize)>, DMatrix<f64>)>;

struct Sweep<'a> {
    sys: &'a ParallelSystem,
    grid: &'a ChartDomain,
    x0: &'a [f64],
    steps: usize,
}

impl Sweep<'_> {
    // Integrates the legs along `axis` and later axes from `point`, whose
    // coordinates from `axis` on still equal those of `x0`. `slot` marks
    // values that belong to a stencil neighbour; only the centre sweep
    // branches off into neighbours.
    #[allow(clippy::too_many_arguments)]
    fn run(
        &self,
        axis: usize,
        point: &[f64],
        state: &DMatrix<f64>,
        idx: &mut Vec<usize>,
        slot: Option<(usize, usize)>,
        only: Option<usize>,
        out: &mut SweepOutput,
    ) -> Result<()> {
        if axis == self.x0.len() {
            out.push((idx.clone(), slot, state.clone()));
            return Ok(());
        }
        let nodes = self.grid.axis_nodes(axis);
        let delta = STENCIL_STEP * (self.grid.upper()[axis] - self.grid.lower()[axis]);
        for (k, &target) in nodes.iter().enumerate() {
            if only.is_some_and(|o| o != k) {
                continue;
            }
            let count = staircase_steps(self.grid, self.x0, axis, target, self.steps);
            let leg = |end: f64| -> Result<(Vec<f64>, DMatrix<f64>)> {
                let mut next = point.to_vec();
                next[axis] = end;
                let s = if end == point[axis] {
                    state.clone()
                } else {
                    self.sys.integrate_segment(point, &next, count, state)?
                };
                Ok((next, s))
            };
            idx.push(k);
            let (next, s) = leg(target)?;
            self.run(axis + 1, &next, &s, idx, slot, None, out)?;
            if slot.is_none() {
                for (o, off) in STENCIL_OFFSETS.iter().enumerate() {
                    let (q, s) = leg(target + off * delta)?;
                    self.run(axis + 1, &q, &s, idx, Some((axis, o)), None, out)?;
                }
            }
            idx.pop();
        }
        Ok(())
    }
}

/// A polyline in the chart with a fixed RK4 step count per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct PolylinePath {
    vertices: Vec<Vec<f64>>,
    steps_per_segment: usize,
}

impl PolylinePath {
    pub const MIN_STEPS: usize = 8;

    pub fn new(vertices: Vec<Vec<f64>>, steps_per_segment: usize) -> Result<Self> {
        if steps_per_segment < Self::MIN_STEPS {
            return Err(Error::TooFewSteps(steps_per_segment));
        }
        if vertices.len() < 2 || vertices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::DegeneratePath);
        }
        let m = vertices[0].len();
        if vertices.iter().any(|v| v.len() != m) {
            return Err(Error::Shape("path vertices of different dimensions".into()));
        }
        Ok(PolylinePath {
            vertices,
            steps_per_segment,
        })
    }

    /// Closed square `x0 → x0 + ε e_i → x0 + ε e_i + ε e_j → x0 + ε e_j → x0`.
    pub fn square_loop(x0: &[f64], i: usize, j: usize, eps: f64, steps: usize) -> Result<Self> {
        let shift = |di: f64, dj: f64| {
            let mut p = x0.to_vec();
            p[i] += di;
            p[j] += dj;
            p
        };
        PolylinePath::new(
            vec![shift(0.0, 0.0), shift(eps, 0.0), shift(eps, eps), shift(0.0, eps), shift(0.0, 0.0)],
            steps,
        )
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn steps_per_segment(&self) -> usize {
        self.steps_per_segment
    }

    pub fn start(&self) -> &[f64] {
        &self.vertices[0]
    }

    pub fn end(&self) -> &[f64] {
        self.vertices.last().expect("nonempty path")
    }

    pub fn is_closed(&self) -> bool {
        self.start() == self.end()
    }

    pub fn reversed(&self) -> Self {
        let mut v = self.vertices.clone();
        v.reverse();
        PolylinePath {
            vertices: v,
            steps_per_segment: self.steps_per_segment,
        }
    }

    /// `self` followed by `next`, which must start where `self` ends.
    pub fn concat(&self, next: &PolylinePath) -> Result<Self> {
        if self.end() != next.start() || self.steps_per_segment != next.steps_per_segment {
            return Err(Error::Invalid("paths do not join".into()));
        }
        let mut v = self.vertices.clone();
        v.extend(next.vertices[1..].iter().cloned());
        PolylinePath::new(v, self.steps_per_segment)
    }

    fn check_inside(&self, domain: &ChartDomain) -> Result<()> {
        for (index, v) in self.vertices.iter().enumerate() {
            if v.len() != domain.dim() || !domain.contains(v) {
                return Err(Error::PathOutsideDomain { index });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TransportResult {
    pub end_frame: DMatrix<f64>,
    /// Step-doubling estimate of the error in `end_frame`.
    pub local_truncation_estimate: f64,
}

/// Transport of `φ0` along `path` keeping `D^{∇∇*} φ (γ', ·) = 0`.
pub fn transport_hom(nabla: &Connection, target: &Connection, path: &PolylinePath, phi0: &DMatrix<f64>) -> Result<TransportResult> {
    let sys = ParallelSystem::hom(nabla, target)?;
    let r = nabla.rank();
    if phi0.nrows() != r || phi0.ncols() != r {
        return Err(Error::Shape(format!("initial frame is {}x{}, expected {r}x{r}", phi0.nrows(), phi0.ncols())));
    }
    let v0 = DMatrix::from_column_slice(r * r, 1, vec_row_major(phi0).as_slice());
    let res = sys.transport(path, &v0)?;
    Ok(TransportResult {
        end_frame: unvec_row_major(&res.end_frame.column(0).into_owned(), r, r),
        local_truncation_estimate: res.local_truncation_estimate,
    })
}

/// Parallel transport of a vector in `E`.
pub fn transport_vector(nabla: &Connection, path: &PolylinePath, v0: &DVector<f64>) -> Result<TransportResult> {
    let sys = ParallelSystem::vector(nabla);
    if v0.len() != nabla.rank() {
        return Err(Error::Shape(format!("vector has length {}, expected {}", v0.len(), nabla.rank())));
    }
    sys.transport(path, &DMatrix::from_column_slice(v0.len(), 1, v0.as_slice()))
}

/// The holonomy operator on row-major flattened `r×r` matrices.
pub fn loop_holonomy_hom(nabla: &Connection, target: &Connection, closed: &PolylinePath) -> Result<DMatrix<f64>> {
    if !closed.is_closed() {
        return Err(Error::OpenLoop);
    }
    ParallelSystem::hom(nabla, target)?.propagator(closed)
}

/// Spanning-tree transport over a sample grid, with all edge propagators
/// computed once so that many initial values can be extended cheaply.
///
/// The tree is the breadth-first tree from the base node, visiting
/// neighbours in increasing multi-index order.
#[derive(Debug, Clone)]
pub struct ExtensionPlan {
    grid: ChartDomain,
    base: usize,
    /// Propagator from the base node to each node along the tree.
    cumulative: Vec<DMatrix<f64>>,
    /// Non-tree edges `(u, w, P_{u→w})`.
    chords: Vec<(usize, usize, DMatrix<f64>)>,
}

impl ExtensionPlan {
    pub fn build(sys: &ParallelSystem, grid: &ChartDomain, x0: &[f64], steps: usize) -> Result<Self> {
        let n_axis = grid.samples_per_axis();
        if n_axis < 3 {
            return Err(Error::GridTooCoarse(n_axis));
        }
        if steps < PolylinePath::MIN_STEPS {
            return Err(Error::TooFewSteps(steps));
        }
        let base_idx = grid.node_index_of(x0).ok_or_else(|| Error::NotAGridNode(x0.to_vec()))?;
        let base = grid.flat_index(&base_idx);
        let count = grid.node_count();
        let neighbours = |f: usize| -> Vec<usize> {
            let idx = grid.multi_index(f);
            let mut out = Vec::new();
            for axis in 0..idx.len() {
                if idx[axis] > 0 {
                    let mut j = idx.clone();
                    j[axis] -= 1;
                    out.push(grid.flat_index(&j));
                }
                if idx[axis] + 1 < n_axis {
                    let mut j = idx.clone();
                    j[axis] += 1;
                    out.push(grid.flat_index(&j));
                }
            }
            out.sort_unstable();
            out
        };

        let mut parent = vec![usize::MAX; count];
        let mut order = vec![base];
        parent[base] = base;
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for w in neighbours(u) {
                if parent[w] == usize::MAX {
                    parent[w] = u;
                    order.push(w);
                }
            }
        }

        let mut jobs: Vec<(usize, usize)> = order[1..].iter().map(|&w| (parent[w], w)).collect();
        let tree_jobs = jobs.len();
        for u in 0..count {
            for w in neighbours(u) {
                if u < w && parent[w] != u && parent[u] != w {
                    jobs.push((u, w));
                }
            }
        }
        let nodes = grid.sample_points();
        let size = sys.size();
        let props = jobs
            .par_iter()
            .map(|&(u, w)| sys.integrate_segment(&nodes[u], &nodes[w], steps, &DMatrix::identity(size, size)))
            .collect::<Result<Vec<_>>>()?;

        let mut edge_of = vec![usize::MAX; count];
        for (k, &(_, w)) in jobs[..tree_jobs].iter().enumerate() {
            edge_of[w] = k;
        }
        let mut cumulative = vec![DMatrix::identity(size, size); count];
        for &w in &order[1..] {
            cumulative[w] = &props[edge_of[w]] * &cumulative[parent[w]];
        }
        let chords = jobs[tree_jobs..]
            .iter()
            .zip(&props[tree_jobs..])
            .map(|(&(u, w), p)| (u, w, p.clone()))
            .collect();
        Ok(ExtensionPlan {
            grid: grid.clone(),
            base,
            cumulative,
            chords,
        })
    }

    pub fn grid(&self) -> &ChartDomain {
        &self.grid
    }

    pub fn base_index(&self) -> usize {
        self.base
    }

    pub fn chord_count(&self) -> usize {
        self.chords.len()
    }

    /// Values at every node (flat-index order) of the columns of `v0`.
    pub fn extend(&self, v0: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        self.cumulative.iter().map(|t| t * v0).collect()
    }

    /// Largest discrepancy over non-tree edges between the tree value at the
    /// far end and the value transported across the edge.
    pub fn residual(&self, values: &[DMatrix<f64>]) -> f64 {
        self.chords
            .iter()
            .map(|(u, w, p)| max_abs(&(p * &values[*u] - &values[*w])))
            .fold(0.0, f64::max)
    }

    /// The stacked linear defect `v0 ↦ (P_{u→w} T_u − T_w) v0` over all
    /// non-tree edges, composed with `basis`. Each block is divided by
    /// `max(1, ‖T_w‖₂)`, so the defect is measured relative to the size the
    /// transported values reach.
    pub fn defect_map(&self, basis: &DMatrix<f64>) -> DMatrix<f64> {
        let n = basis.nrows();
        let k = basis.ncols();
        let mut out = DMatrix::zeros(self.chords.len() * n, k);
        for (row, (u, w, p)) in self.chords.iter().enumerate() {
            let scale = singular_values(&self.cumulative[*w]).first().copied().unwrap_or(0.0).max(1.0);
            let block = (p * &self.cumulative[*u] - &self.cumulative[*w]) * basis / scale;
            out.view_mut((row * n, 0), (n, k)).copy_from(&block);
        }
        out
    }
}

/// A candidate extended over the grid by tree transport.
#[derive(Debug, Clone)]
pub struct GridExtension {
    /// Values at grid nodes in flat-index order.
    pub values: Vec<DMatrix<f64>>,
    pub path_independence_residual: f64,
}

/// Extends `φ0` at the grid node `x0` along the spanning tree and measures
/// the discrepancy on the remaining edges.
pub fn spanning_tree_extend(
    nabla: &Connection,
    target: &Connection,
    x0: &[f64],
    phi0: &DMatrix<f64>,
    grid: &ChartDomain,
    steps: usize,
) -> Result<GridExtension> {
    let sys = ParallelSystem::hom(nabla, target)?;
    let plan = ExtensionPlan::build(&sys, grid, x0, steps)?;
    let r = nabla.rank();
    let v0 = DMatrix::from_column_slice(r * r, 1, vec_row_major(phi0).as_slice());
    let values = plan.extend(&v0);
    let residual = plan.residual(&values);
    Ok(GridExtension {
        values: values.iter().map(|v| unvec_row_major(&v.column(0).into_owned(), r, r)).collect(),
        path_independence_residual: residual,
    })
}


/// `y += c x`, in place.
fn add_scaled(y: &mut DMatrix<f64>, c: f64, x: &DMatrix<f64>) {
    for (a, b) in y.iter_mut().zip(x.iter()) {
        *a += c * b;
    }
}
