//! Finite-difference fiber problem on `ω̌ = (0,1) × ω`:
//!
//! `(−Δ + q)u = 0` in `ω̌`, `u = f` on `γ̌`, `u(1,·) = e^{iθ}u(0,·)`.
//!
//! Unknowns are the interior nodes of the closed box `ω̄` on each of the
//! `N0` axial layers; the axial stencil wraps with the factor `e^{±iθ}`.

use std::sync::Arc;

use faer::linalg::solvers::SolveCore;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellGeometry, GridSpec};
use crate::lattice::CellFunction;
use crate::C64;

/// One face of the box `ω̄`: spatial axis (0-based) and side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Face {
    pub axis: usize,
    pub upper: bool,
}

impl Face {
    pub fn id(&self) -> usize {
        2 * self.axis + usize::from(self.upper)
    }

    pub fn label(&self) -> String {
        format!("x{}{}", self.axis + 1, if self.upper { "+" } else { "-" })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum NodeKind {
    Interior(usize),
    Boundary(usize),
}

#[derive(Clone, Debug)]
pub struct BoundaryNode {
    /// Local multi-index inside the closed box.
    pub index: Vec<usize>,
    pub faces: Vec<Face>,
    /// Spatial trapezoid weight of this node on each face (same order as `faces`).
    pub face_weights: Vec<f64>,
    /// Sum of `face_weights`.
    pub weight: f64,
    /// On the closed top face `{xₙ = 0}`.
    pub gamma0: bool,
}

/// Node layout of `ω̌` on the cell grid.
#[derive(Clone, Debug)]
pub struct FiberMesh {
    grid: GridSpec,
    geom: CellGeometry,
    ranges: Vec<(usize, usize)>,
    dims: Vec<usize>,
    h: f64,
    h0: f64,
    kinds: Vec<NodeKind>,
    interior: Vec<usize>,
    boundary: Vec<BoundaryNode>,
    boundary_local: Vec<usize>,
    /// One-sided normal-derivative stencil per boundary node: `(local node, coefficient)`.
    stencils: Vec<Vec<(usize, f64)>>,
    volume_weights: Vec<f64>,
}

impl FiberMesh {
    pub fn new(grid: GridSpec, geom: CellGeometry) -> Result<Self> {
        let ranges = grid.box_ranges(&geom)?;
        let n = geom.n();
        let dims: Vec<usize> = ranges.iter().map(|(lo, hi)| hi - lo + 1).collect();
        let total: usize = dims.iter().product();
        let h = grid.h(&geom);
        let h0 = grid.h0();
        let mut kinds = Vec::with_capacity(total);
        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        let mut boundary_local = Vec::new();
        let mut volume_weights = Vec::with_capacity(total);
        let mut idx = vec![0; n];
        for local in 0..total {
            unravel_local(local, &dims, &mut idx);
            let on_edge = |j: usize| idx[j] == 0 || idx[j] == dims[j] - 1;
            let vw: f64 = (0..n).map(|j| if on_edge(j) { 0.5 * h } else { h }).product();
            volume_weights.push(vw * h0);
            let faces: Vec<Face> = (0..n)
                .flat_map(|j| {
                    let lo = (idx[j] == 0).then_some(Face { axis: j, upper: false });
                    let hi = (idx[j] == dims[j] - 1).then_some(Face { axis: j, upper: true });
                    lo.into_iter().chain(hi)
                })
                .collect();
            if faces.is_empty() {
                kinds.push(NodeKind::Interior(interior.len()));
                interior.push(local);
            } else {
                let face_weights: Vec<f64> = faces
                    .iter()
                    .map(|f| (0..n).filter(|&j| j != f.axis).map(|j| if on_edge(j) { 0.5 * h } else { h }).product())
                    .collect();
                let gamma0 = idx[n - 1] == dims[n - 1] - 1;
                kinds.push(NodeKind::Boundary(boundary.len()));
                boundary_local.push(local);
                boundary.push(BoundaryNode {
                    index: idx.clone(),
                    weight: face_weights.iter().sum(),
                    faces,
                    face_weights,
                    gamma0,
                });
            }
        }
        let strides = local_strides(&dims);
        let stencils = boundary
            .iter()
            .zip(&boundary_local)
            .map(|(b, &local)| {
                let mut st: Vec<(usize, f64)> = Vec::new();
                for (f, w) in b.faces.iter().zip(&b.face_weights) {
                    let s = strides[f.axis];
                    let scale = w / b.weight / (2.0 * h);
                    let (one, two) = if f.upper { (local - s, local - 2 * s) } else { (local + s, local + 2 * s) };
                    st.push((local, 3.0 * scale));
                    st.push((one, -4.0 * scale));
                    st.push((two, scale));
                }
                st
            })
            .collect();
        Ok(Self { grid, geom, ranges, dims, h, h0, kinds, interior, boundary, boundary_local, stencils, volume_weights })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn geometry(&self) -> &CellGeometry {
        &self.geom
    }

    pub fn n0(&self) -> usize {
        self.grid.n0()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn h0(&self) -> f64 {
        self.h0
    }

    pub fn boundary_nodes(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    /// Spatial nodes of the closed box.
    pub fn closed_len(&self) -> usize {
        self.kinds.len()
    }

    pub fn interior_len(&self) -> usize {
        self.interior.len()
    }

    pub fn boundary_len(&self) -> usize {
        self.boundary.len()
    }

    /// Trace samples: boundary nodes times axial layers.
    pub fn trace_len(&self) -> usize {
        self.boundary.len() * self.grid.n0()
    }

    pub fn unknowns(&self) -> usize {
        self.interior.len() * self.grid.n0()
    }

    /// `(layer, boundary node)` of trace slot `t`.
    pub fn trace_slot(&self, t: usize) -> (usize, usize) {
        (t / self.boundary.len(), t % self.boundary.len())
    }

    /// Surface quadrature weight `h₀ w_b` of trace slot `t`.
    pub fn trace_weight(&self, t: usize) -> f64 {
        self.h0 * self.boundary[t % self.boundary.len()].weight
    }

    pub fn is_gamma0(&self, t: usize) -> bool {
        self.boundary[t % self.boundary.len()].gamma0
    }

    /// Trace slots on `γ̌₁` (boundary minus the closed top face).
    pub fn gamma1_slots(&self) -> Vec<usize> {
        (0..self.trace_len()).filter(|&t| !self.is_gamma0(t)).collect()
    }

    /// Flat index into a [`CellFunction`] of spatial node `local` on layer `layer`.
    pub fn lattice_index(&self, layer: usize, local: usize) -> usize {
        let n = self.grid.n();
        let mut rem = local;
        let mut idx = vec![0; self.dims.len()];
        for j in (0..self.dims.len()).rev() {
            idx[j] = rem % self.dims[j] + self.ranges[j].0;
            rem /= self.dims[j];
        }
        idx.iter().fold(layer, |acc, &i| acc * n + i)
    }

    /// Coordinates `(x₀, x')` of spatial node `local` on `layer`.
    pub fn node_point(&self, layer: usize, local: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dims.len()];
        unravel_local(local, &self.dims, &mut idx);
        std::iter::once(layer as f64 * self.h0)
            .chain(idx.iter().enumerate().map(|(j, &k)| self.grid.coord(&self.geom, k + self.ranges[j].0)))
            .collect()
    }

    pub fn trace_point(&self, t: usize) -> Vec<f64> {
        let (layer, b) = self.trace_slot(t);
        self.node_point(layer, self.boundary_local[b])
    }

    /// Trapezoid weight of closed-box node `local` for `∫_{ω̌}` (includes `h₀`).
    pub fn volume_weight(&self, local: usize) -> f64 {
        self.volume_weights[local]
    }

    /// Samples the boundary values of `u`.
    pub fn trace_of(&self, u: &CellFunction) -> Result<TraceFunction> {
        self.check_cell(u)?;
        let values = (0..self.trace_len())
            .map(|t| {
                let (layer, b) = self.trace_slot(t);
                u.values()[self.lattice_index(layer, self.boundary_local[b])]
            })
            .collect();
        Ok(TraceFunction { values, restricted_to_gamma1: false })
    }

    pub fn trace_from_fn(&self, f: impl Fn(&[f64]) -> C64) -> TraceFunction {
        let values = (0..self.trace_len()).map(|t| f(&self.trace_point(t))).collect();
        TraceFunction { values, restricted_to_gamma1: false }
    }

    fn check_cell(&self, u: &CellFunction) -> Result<()> {
        if *u.grid() != self.grid || *u.geometry() != self.geom {
            return Err(Error::Shape("cell function does not match the fiber mesh".into()));
        }
        Ok(())
    }

    /// One-sided second-order outward normal derivative of `u` on every trace slot.
    ///
    /// Edge and corner nodes average the face derivatives with the face weights.
    pub fn neumann(&self, u: &CellFunction) -> Result<TraceFunction> {
        self.check_cell(u)?;
        let values = (0..self.trace_len())
            .map(|t| {
                let (layer, b) = self.trace_slot(t);
                self.stencils[b].iter().map(|&(loc, c)| u.values()[self.lattice_index(layer, loc)] * c).sum()
            })
            .collect();
        Ok(TraceFunction { values, restricted_to_gamma1: false })
    }

    /// `∫_{ω̌} |u|²` by the closed-box trapezoid rule, square-rooted.
    pub fn volume_l2(&self, u: &CellFunction) -> Result<f64> {
        self.check_cell(u)?;
        let mut s = 0.0;
        for layer in 0..self.n0() {
            for local in 0..self.closed_len() {
                s += self.volume_weights[local] * u.values()[self.lattice_index(layer, local)].norm_sqr();
            }
        }
        Ok(s.sqrt())
    }

    /// Surface `L²(γ̌)` inner product `Σ h₀ w_b f ḡ`.
    pub fn surface_inner(&self, f: &TraceFunction, g: &TraceFunction) -> C64 {
        f.values
            .iter()
            .zip(&g.values)
            .enumerate()
            .map(|(t, (a, b))| a * b.conj() * self.trace_weight(t))
            .sum()
    }

    pub fn surface_l2(&self, f: &TraceFunction, gamma1_only: bool) -> f64 {
        f.values
            .iter()
            .enumerate()
            .filter(|(t, _)| !gamma1_only || !self.is_gamma0(*t))
            .map(|(t, v)| v.norm_sqr() * self.trace_weight(t))
            .sum::<f64>()
            .sqrt()
    }
}

fn unravel_local(mut local: usize, dims: &[usize], out: &mut [usize]) {
    for j in (0..dims.len()).rev() {
        out[j] = local % dims[j];
        local /= dims[j];
    }
}

fn local_strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for j in (0..dims.len() - 1).rev() {
        s[j] = s[j + 1] * dims[j + 1];
    }
    s
}

/// Real potential on `ω̌` with its class bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    values: CellFunction,
    pub m_plus: f64,
    pub m_minus: f64,
    pub holder_alpha: Option<f64>,
}

impl Potential {
    /// Checks `‖q‖_∞ ≤ M₊`, `‖max(0, −q)‖_∞ ≤ M₋ < C_ω` over `ω̌`.
    pub fn new(values: CellFunction, m_plus: f64, m_minus: f64) -> Result<Self> {
        let p = Self { values, m_plus, m_minus, holder_alpha: None };
        p.check_admissible()?;
        Ok(p)
    }

    /// Tightest bounds read off the samples.
    pub fn from_cell(values: CellFunction) -> Result<Self> {
        let (sup, neg) = sample_bounds(&values);
        Self::new(values, sup, neg)
    }

    pub fn zero(grid: GridSpec, geom: CellGeometry) -> Self {
        Self { values: CellFunction::zeros(grid, geom), m_plus: 0.0, m_minus: 0.0, holder_alpha: None }
    }

    pub fn with_holder_alpha(mut self, alpha: f64) -> Self {
        self.holder_alpha = Some(alpha);
        self
    }

    pub fn values(&self) -> &CellFunction {
        &self.values
    }

    pub fn check_admissible(&self) -> Result<()> {
        let im = self.values.max_imag();
        if im > 1e-12 {
            return Err(Error::Admissibility(format!("potential has imaginary part {im:.3e}")));
        }
        let (sup, neg) = sample_bounds(&self.values);
        let c_omega = self.values.geometry().poincare_constant();
        if self.m_minus >= c_omega {
            return Err(Error::Admissibility(format!("M- = {} is not below C_omega = {c_omega:.4}", self.m_minus)));
        }
        if sup > self.m_plus * (1.0 + 1e-12) {
            return Err(Error::Admissibility(format!("||q||_inf = {sup} exceeds M+ = {}", self.m_plus)));
        }
        if neg > self.m_minus * (1.0 + 1e-12) {
            return Err(Error::Admissibility(format!("||q_-||_inf = {neg} exceeds M- = {}", self.m_minus)));
        }
        Ok(())
    }

    /// `q₁ − q₂` as a raw cell function.
    pub fn difference(&self, other: &Potential) -> Result<CellFunction> {
        self.values.sub(&other.values)
    }
}

fn sample_bounds(values: &CellFunction) -> (f64, f64) {
    let geom = values.geometry();
    let n = geom.n();
    let mut sup: f64 = 0.0;
    let mut neg: f64 = 0.0;
    let mut x = vec![0.0; n + 1];
    for (flat, v) in values.values().iter().enumerate() {
        values.point_into(flat, &mut x);
        if geom.in_omega(&x[1..]) {
            sup = sup.max(v.norm());
            neg = neg.max(-v.re);
        }
    }
    (sup, neg)
}

/// Samples on the trace grid `(0,1) × ∂ω`, ordered `(layer, boundary node)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceFunction {
    pub values: Vec<C64>,
    pub restricted_to_gamma1: bool,
}

impl TraceFunction {
    pub fn zeros(mesh: &FiberMesh) -> Self {
        Self { values: vec![C64::new(0.0, 0.0); mesh.trace_len()], restricted_to_gamma1: false }
    }

    /// Zeroes the `γ̌₀` samples and marks the trace as supported in `γ̌₁`.
    pub fn restrict_to_gamma1(mut self, mesh: &FiberMesh) -> Self {
        for (t, v) in self.values.iter_mut().enumerate() {
            if mesh.is_gamma0(t) {
                *v = C64::new(0.0, 0.0);
            }
        }
        self.restricted_to_gamma1 = true;
        self
    }

    /// Accepts the trace as `γ̌₁`-supported if `max_{γ̌₀}|f| ≤ rel_tol · max|f|`.
    pub fn check_gamma1(self, mesh: &FiberMesh, rel_tol: f64) -> Result<Self> {
        let big = self.max_abs();
        let leak = self
            .values
            .iter()
            .enumerate()
            .filter(|(t, _)| mesh.is_gamma0(*t))
            .fold(0.0, |m: f64, (_, v)| m.max(v.norm()));
        if leak > rel_tol * big {
            return Err(Error::Support { leak, allowed: rel_tol * big });
        }
        Ok(self.restrict_to_gamma1(mesh))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { values: self.values.iter().map(|v| v * c).collect(), restricted_to_gamma1: self.restricted_to_gamma1 }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
            restricted_to_gamma1: self.restricted_to_gamma1 && other.restricted_to_gamma1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Largest system solved with a dense factorization.
    pub dense_threshold: usize,
    /// Relative residual every solve must meet.
    pub residual_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { dense_threshold: 600, residual_tol: 1e-10 }
    }
}

type Factor = Box<dyn SolveCore<C64>>;

/// Factored fiber operator for one `(q, θ)`.
pub struct FiberSolver {
    mesh: Arc<FiberMesh>,
    theta: f64,
    matrix: SparseColMat<usize, C64>,
    factor: Factor,
    cfg: SolverConfig,
}

impl FiberSolver {
    pub fn new(mesh: Arc<FiberMesh>, q: &Potential, theta: f64, cfg: SolverConfig) -> Result<Self> {
        q.check_admissible()?;
        mesh.check_cell(q.values())?;
        let triplets = operator_triplets(&mesh, q.values(), theta);
        let m = mesh.unknowns();
        let fail = |reason: String| Error::SolverFailure { theta, reason };
        let matrix = SparseColMat::<usize, C64>::try_new_from_triplets(m, m, &triplets)
            .map_err(|e| fail(format!("assembly: {e:?}")))?;
        let factor: Factor = if m <= cfg.dense_threshold {
            let dense = matrix.to_dense();
            match dense.llt(Side::Lower) {
                Ok(llt) => Box::new(llt),
                Err(_) => Box::new(dense.partial_piv_lu()),
            }
        } else {
            match matrix.sp_cholesky(Side::Lower) {
                Ok(llt) => Box::new(llt),
                Err(_) => Box::new(matrix.sp_lu().map_err(|e| fail(format!("sparse LU: {e:?}")))?),
            }
        };
        Ok(Self { mesh, theta, matrix, factor, cfg })
    }

    pub fn mesh(&self) -> &Arc<FiberMesh> {
        &self.mesh
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Solves `A X = R` for a block of right-hand sides, checking the residual.
    fn solve_block(&self, rhs: Mat<C64>) -> Result<Mat<C64>> {
        let mut x = rhs.clone();
        self.factor.solve_in_place_with_conj(Conj::No, x.as_mut());
        let ax = &self.matrix * &x;
        let res = (&ax - &rhs).norm_l2();
        let scale = rhs.norm_l2();
        if !(res <= self.cfg.residual_tol * scale.max(f64::MIN_POSITIVE)) {
            return Err(Error::SolverFailure {
                theta: self.theta,
                reason: format!(
                    "relative residual {:.3e} above {:.1e} on a {}-unknown grid (N0 = {}, N = {})",
                    res / scale,
                    self.cfg.residual_tol,
                    self.mesh.unknowns(),
                    self.mesh.grid.n0(),
                    self.mesh.grid.n()
                ),
            });
        }
        Ok(x)
    }

    /// Right-hand side `−B f` for a set of traces (one per column).
    fn boundary_rhs(&self, traces: &[&[C64]]) -> Mat<C64> {
        let mesh = &self.mesh;
        let h2 = mesh.h * mesh.h;
        let n_int = mesh.interior.len();
        let nb = mesh.boundary.len();
        let strides = local_strides(&mesh.dims);
        Mat::from_fn(mesh.unknowns(), traces.len(), |row, col| {
            let layer = row / n_int;
            let local = mesh.interior[row % n_int];
            let mut acc = C64::new(0.0, 0.0);
            for &s in &strides {
                for nb_local in [local - s, local + s] {
                    if let NodeKind::Boundary(b) = mesh.kinds[nb_local] {
                        acc += traces[col][layer * nb + b] / h2;
                    }
                }
            }
            acc
        })
    }

    fn fill(&self, x: &Mat<C64>, col: usize, f: &[C64]) -> CellFunction {
        let mesh = &self.mesh;
        let mut u = CellFunction::zeros(mesh.grid, mesh.geom.clone());
        let n_int = mesh.interior.len();
        let nb = mesh.boundary.len();
        let vals = u.values_mut();
        for layer in 0..mesh.n0() {
            for (i, &local) in mesh.interior.iter().enumerate() {
                vals[mesh.lattice_index(layer, local)] = x[(layer * n_int + i, col)];
            }
            for (b, &local) in mesh.boundary_local.iter().enumerate() {
                vals[mesh.lattice_index(layer, local)] = f[layer * nb + b];
            }
        }
        u
    }

    /// Nodal solution on `ω̄̌` (zero elsewhere on the cell grid).
    pub fn solve(&self, f: &TraceFunction) -> Result<CellFunction> {
        if f.values.len() != self.mesh.trace_len() {
            return Err(Error::Shape(format!("trace has {} samples, mesh has {}", f.values.len(), self.mesh.trace_len())));
        }
        let x = self.solve_block(self.boundary_rhs(&[&f.values]))?;
        Ok(self.fill(&x, 0, &f.values))
    }

    /// `Λ_{q,θ} f`.
    pub fn dn_apply(&self, f: &TraceFunction) -> Result<TraceFunction> {
        self.mesh.neumann(&self.solve(f)?)
    }

    /// Full DN matrix on the trace grid.
    pub fn assemble_dn(&self) -> Result<DnMap> {
        let mesh = &self.mesh;
        let nt = mesh.trace_len();
        let nb = mesh.boundary.len();
        let n_int = mesh.interior.len();
        let eye: Vec<Vec<C64>> = (0..nt)
            .map(|j| {
                let mut e = vec![C64::new(0.0, 0.0); nt];
                e[j] = C64::new(1.0, 0.0);
                e
            })
            .collect();
        let refs: Vec<&[C64]> = eye.iter().map(Vec::as_slice).collect();
        let x = self.solve_block(self.boundary_rhs(&refs))?;
        let mut matrix = vec![C64::new(0.0, 0.0); nt * nt];
        for row in 0..nt {
            let (layer, b) = mesh.trace_slot(row);
            for &(loc, c) in &mesh.stencils[b] {
                match mesh.kinds[loc] {
                    NodeKind::Boundary(bb) => matrix[row * nt + layer * nb + bb] += c,
                    NodeKind::Interior(i) => {
                        let xr = layer * n_int + i;
                        for col in 0..nt {
                            matrix[row * nt + col] += x[(xr, col)] * c;
                        }
                    }
                }
            }
        }
        Ok(DnMap { theta: self.theta, dim: nt, matrix, mesh: self.mesh.clone() })
    }

    /// Harmonic-extension Gram matrix `U*WU` on the given trace slots (needs `q ≡ 0`).
    fn gram(&self, slots: &[usize]) -> Result<Mat<C64>> {
        let mesh = &self.mesh;
        let nt = mesh.trace_len();
        let n_int = mesh.interior.len();
        let cols: Vec<Vec<C64>> = slots
            .iter()
            .map(|&s| {
                let mut e = vec![C64::new(0.0, 0.0); nt];
                e[s] = C64::new(1.0, 0.0);
                e
            })
            .collect();
        let refs: Vec<&[C64]> = cols.iter().map(Vec::as_slice).collect();
        let x = self.solve_block(self.boundary_rhs(&refs))?;
        let w = Mat::from_fn(x.nrows(), 1, |row, _| {
            C64::new(mesh.volume_weights[mesh.interior[row % n_int]].sqrt(), 0.0)
        });
        let wx = Mat::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * w[(i, 0)]);
        let mut g = wx.adjoint() * &wx;
        for (j, &s) in slots.iter().enumerate() {
            let (_, b) = mesh.trace_slot(s);
            g[(j, j)] += C64::new(mesh.volume_weights[mesh.boundary_local[b]], 0.0);
        }
        Ok(g)
    }
}

fn operator_triplets(mesh: &FiberMesh, q: &CellFunction, theta: f64) -> Vec<Triplet<usize, usize, C64>> {
    let n0 = mesh.n0();
    let n_int = mesh.interior.len();
    let n = mesh.dims.len();
    let h2 = mesh.h * mesh.h;
    let h02 = mesh.h0 * mesh.h0;
    let strides = local_strides(&mesh.dims);
    let wrap_up = -C64::from_polar(1.0, theta) / h02;
    let wrap_down = -C64::from_polar(1.0, -theta) / h02;
    let mut t = Vec::with_capacity(mesh.unknowns() * (3 + 2 * n));
    for layer in 0..n0 {
        for (i, &local) in mesh.interior.iter().enumerate() {
            let row = layer * n_int + i;
            let qv = q.values()[mesh.lattice_index(layer, local)].re;
            t.push(Triplet::new(row, row, C64::new(2.0 * n as f64 / h2 + 2.0 / h02 + qv, 0.0)));
            for &s in &strides {
                for nb_local in [local - s, local + s] {
                    if let NodeKind::Interior(j) = mesh.kinds[nb_local] {
                        t.push(Triplet::new(row, layer * n_int + j, C64::new(-1.0 / h2, 0.0)));
                    }
                }
            }
            let (up, c_up) = if layer + 1 == n0 { (0, wrap_up) } else { (layer + 1, C64::new(-1.0 / h02, 0.0)) };
            let (down, c_down) = if layer == 0 { (n0 - 1, wrap_down) } else { (layer - 1, C64::new(-1.0 / h02, 0.0)) };
            t.push(Triplet::new(row, up * n_int + i, c_up));
            t.push(Triplet::new(row, down * n_int + i, c_down));
        }
    }
    t
}

/// Finite-difference solution of the fiber problem with Dirichlet data `f`.
pub fn solve_fiber(q: &Potential, theta: f64, f: &TraceFunction) -> Result<CellFunction> {
    let mesh = Arc::new(FiberMesh::new(*q.values().grid(), q.values().geometry().clone())?);
    FiberSolver::new(mesh, q, theta, SolverConfig::default())?.solve(f)
}

/// Discrete DN map `Λ_{q,θ}` on the full trace grid.
pub fn assemble_dn(q: &Potential, theta: f64) -> Result<DnMap> {
    let mesh = Arc::new(FiberMesh::new(*q.values().grid(), q.values().geometry().clone())?);
    FiberSolver::new(mesh, q, theta, SolverConfig::default())?.assemble_dn()
}

/// Dense DN operator, row-major over trace slots.
#[derive(Clone, Debug)]
pub struct DnMap {
    pub theta: f64,
    dim: usize,
    matrix: Vec<C64>,
    mesh: Arc<FiberMesh>,
}

impl DnMap {
    pub fn from_parts(theta: f64, mesh: Arc<FiberMesh>, matrix: Vec<C64>) -> Result<Self> {
        let dim = mesh.trace_len();
        if matrix.len() != dim * dim {
            return Err(Error::Shape(format!("DN matrix has {} entries, expected {}", matrix.len(), dim * dim)));
        }
        Ok(Self { theta, dim, matrix, mesh })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mesh(&self) -> &Arc<FiberMesh> {
        &self.mesh
    }

    pub fn matrix(&self) -> &[C64] {
        &self.matrix
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.matrix[i * self.dim + j]
    }

    pub fn apply(&self, f: &TraceFunction) -> TraceFunction {
        let values = self
            .matrix
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(&f.values).map(|(a, b)| a * b).sum())
            .collect();
        TraceFunction { values, restricted_to_gamma1: false }
    }

    fn compatible(&self, other: &DnMap) -> Result<()> {
        if self.dim != other.dim
            || (self.theta - other.theta).abs() > 1e-14
            || self.mesh.grid != other.mesh.grid
            || self.mesh.geom != other.mesh.geom
        {
            return Err(Error::Shape("DN maps differ in grid or theta".into()));
        }
        Ok(())
    }
}

/// Harmonic-extension Gram matrix defining `‖·‖_{ℋ_θ}` on a set of trace slots.
pub struct HscriptGram {
    theta: f64,
    mesh: Arc<FiberMesh>,
    slots: Vec<usize>,
    gram: Mat<C64>,
    chol_l: Mat<C64>,
}

impl HscriptGram {
    pub fn new(mesh: Arc<FiberMesh>, theta: f64, restrict_gamma1: bool, cfg: SolverConfig) -> Result<Self> {
        let zero = Potential::zero(mesh.grid, mesh.geom.clone());
        let solver = FiberSolver::new(mesh.clone(), &zero, theta, cfg)?;
        let slots = if restrict_gamma1 { mesh.gamma1_slots() } else { (0..mesh.trace_len()).collect() };
        let gram = solver.gram(&slots)?;
        let chol_l = gram
            .llt(Side::Lower)
            .map_err(|e| Error::SolverFailure { theta, reason: format!("Gram matrix not positive definite: {e:?}") })?
            .L()
            .to_owned();
        Ok(Self { theta, mesh, slots, gram, chol_l })
    }

    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn matrix(&self) -> &Mat<C64> {
        &self.gram
    }

    /// `sqrt(f* G f)` over the Gram slots.
    pub fn norm(&self, f: &TraceFunction) -> f64 {
        let v = Mat::from_fn(self.slots.len(), 1, |i, _| f.values[self.slots[i]]);
        (v.adjoint() * &self.gram * &v)[(0, 0)].re.max(0.0).sqrt()
    }
}

/// `‖f‖_{ℋ_θ}`: `L²(ω̌)` norm of the harmonic quasi-periodic extension.
pub fn hscript_norm(mesh: &Arc<FiberMesh>, f: &TraceFunction, theta: f64) -> Result<f64> {
    let zero = Potential::zero(mesh.grid, mesh.geom.clone());
    let u = FiberSolver::new(mesh.clone(), &zero, theta, SolverConfig::default())?.solve(f)?;
    mesh.volume_l2(&u)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-8, max_iter: 20_000 }
    }
}

/// `sup_f ‖(A − B)f‖_{L²(γ̌₁)} / ‖f‖_{ℋ_θ}`.
pub fn dn_diff_norm(a: &DnMap, b: &DnMap, restrict_gamma1: bool) -> Result<f64> {
    a.compatible(b)?;
    let gram = HscriptGram::new(a.mesh.clone(), a.theta, restrict_gamma1, SolverConfig::default())?;
    dn_diff_norm_with(&gram, a, b, PowerConfig::default())
}

/// As [`dn_diff_norm`] with a precomputed Gram matrix.
pub fn dn_diff_norm_with(gram: &HscriptGram, a: &DnMap, b: &DnMap, cfg: PowerConfig) -> Result<f64> {
    a.compatible(b)?;
    if (gram.theta - a.theta).abs() > 1e-14 || gram.mesh.trace_len() != a.dim {
        return Err(Error::Shape("Gram matrix built for another fiber".into()));
    }
    let s = &gram.slots;
    let m = s.len();
    let mesh = &a.mesh;
    // Z = L⁻¹ D* W^{1/2};  σ_max² = λ_max(Z Z*)
    let mut z = Mat::from_fn(m, m, |i, j| {
        let (ri, cj) = (s[j], s[i]);
        (a.entry(ri, cj) - b.entry(ri, cj)).conj() * mesh.trace_weight(ri).sqrt()
    });
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(gram.chol_l.as_ref(), z.as_mut(), faer::Par::Seq);
    let op = &z * z.adjoint();
    let lambda = power_iteration(&op, cfg)?;
    Ok(lambda.max(0.0).sqrt())
}

/// Largest eigenvalue of a Hermitian positive semidefinite matrix.
pub fn power_iteration(op: &Mat<C64>, cfg: PowerConfig) -> Result<f64> {
    let m = op.nrows();
    if m == 0 {
        return Ok(0.0);
    }
    let mut x = Mat::from_fn(m, 1, |i, _| C64::new(1.0 + 0.01 * (i % 7) as f64, 0.003 * (i % 5) as f64));
    let nx = x.norm_l2();
    x = &x * faer::Scale(C64::new(1.0 / nx, 0.0));
    let mut lambda = 0.0;
    for it in 0..cfg.max_iter {
        let y = op * &x;
        let next = (x.adjoint() * &y)[(0, 0)].re;
        let ny = y.norm_l2();
        if ny == 0.0 {
            return Ok(0.0);
        }
        if it > 0 && (next - lambda).abs() <= cfg.rel_tol * next.abs() {
            return Ok(next);
        }
        lambda = next;
        x = &y * faer::Scale(C64::new(1.0 / ny, 0.0));
    }
    Err(Error::NonConvergent { reason: format!("power iteration hit {} iterations", cfg.max_iter), last_estimate: lambda })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (GridSpec, CellGeometry) {
        (GridSpec::new(4, 8).unwrap(), CellGeometry::centered(1.0, &[1.0], 0.5).unwrap())
    }

    #[test]
    fn mesh_counts() {
        let (grid, geom) = small();
        let mesh = FiberMesh::new(grid, geom).unwrap();
        // box 4 x 2 cells: 5 x 3 nodes, 3 interior
        assert_eq!(mesh.closed_len(), 15);
        assert_eq!(mesh.interior_len(), 3);
        assert_eq!(mesh.boundary_len(), 12);
        let top = mesh.boundary_nodes().iter().filter(|b| b.gamma0).count();
        assert_eq!(top, 5);
        let total: f64 = (0..mesh.trace_len()).map(|t| mesh.trace_weight(t)).sum();
        // perimeter 2(1 + 0.5) times unit axial length
        assert!((total - 3.0).abs() < 1e-12);
        let vol: f64 = (0..mesh.closed_len()).map(|l| mesh.volume_weight(l)).sum::<f64>() * 4.0;
        assert!((vol - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_data_gives_zero() {
        let (grid, geom) = small();
        let q = Potential::zero(grid, geom.clone());
        let mesh = FiberMesh::new(grid, geom).unwrap();
        let u = solve_fiber(&q, 0.7, &TraceFunction::zeros(&mesh)).unwrap();
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn linear_functions_are_reproduced_exactly() {
        let (grid, geom) = small();
        let q = Potential::zero(grid, geom.clone());
        let mesh = FiberMesh::new(grid, geom).unwrap();
        let h = |x: &[f64]| C64::new(1.0 + 2.0 * x[1] - 3.0 * x[2], 0.0);
        let f = mesh.trace_from_fn(h);
        let u = solve_fiber(&q, 0.0, &f).unwrap();
        for layer in 0..4 {
            for local in 0..mesh.closed_len() {
                let x = mesh.node_point(layer, local);
                assert!((u.values()[mesh.lattice_index(layer, local)] - h(&x)).norm() < 1e-12);
            }
        }
        let g = mesh.neumann(&u).unwrap();
        for (t, v) in g.values.iter().enumerate() {
            let (_, b) = mesh.trace_slot(t);
            let node = &mesh.boundary_nodes()[b];
            let want: f64 = node
                .faces
                .iter()
                .zip(&node.face_weights)
                .map(|(f, w)| {
                    let grad = [2.0, -3.0][f.axis];
                    w * if f.upper { grad } else { -grad }
                })
                .sum::<f64>()
                / node.weight;
            assert!((v.re - want).abs() < 1e-10, "{t}: {v} vs {want}");
        }
    }

    #[test]
    fn dn_matrix_matches_apply() {
        let (grid, geom) = small();
        let q = Potential::from_cell(CellFunction::from_real_fn(grid, geom.clone(), |x| 1.0 + x[1] * x[2])).unwrap();
        let mesh = Arc::new(FiberMesh::new(grid, geom).unwrap());
        let solver = FiberSolver::new(mesh.clone(), &q, 1.1, SolverConfig::default()).unwrap();
        let dn = solver.assemble_dn().unwrap();
        let f = mesh.trace_from_fn(|x| C64::new(x[1].sin(), x[0].cos() * x[2]));
        let a = dn.apply(&f);
        let b = solver.dn_apply(&f).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn sparse_and_dense_paths_agree() {
        let grid = GridSpec::new(6, 8).unwrap();
        let geom = CellGeometry::centered(1.0, &[1.0], 0.5).unwrap();
        let q = Potential::from_cell(CellFunction::from_real_fn(grid, geom.clone(), |x| 0.5 + x[2])).unwrap();
        let mesh = Arc::new(FiberMesh::new(grid, geom).unwrap());
        let f = mesh.trace_from_fn(|x| C64::new(x[1], x[2] * x[0]));
        let dense = FiberSolver::new(mesh.clone(), &q, 2.0, SolverConfig::default()).unwrap();
        let sparse =
            FiberSolver::new(mesh.clone(), &q, 2.0, SolverConfig { dense_threshold: 0, ..Default::default() }).unwrap();
        let a = dense.solve(&f).unwrap();
        let b = sparse.solve(&f).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() < 1e-11);
    }

    #[test]
    fn inadmissible_potential_rejected() {
        let (grid, geom) = small();
        let c = geom.poincare_constant();
        let q = CellFunction::from_real_fn(grid, geom, |_| -c);
        assert!(matches!(Potential::from_cell(q), Err(Error::Admissibility(_))));
    }

    #[test]
    fn gamma1_support_check() {
        let (grid, geom) = small();
        let mesh = FiberMesh::new(grid, geom).unwrap();
        let f = mesh.trace_from_fn(|_| C64::new(1.0, 0.0));
        assert!(matches!(f.clone().check_gamma1(&mesh, 1e-8), Err(Error::Support { .. })));
        let g = mesh.trace_from_fn(|x| C64::new(x[2], 0.0)).check_gamma1(&mesh, 1e-8).unwrap();
        assert!(g.restricted_to_gamma1);
    }

    #[test]
    fn power_iteration_diagonal() {
        let m = Mat::from_fn(4, 4, |i, j| if i == j { C64::new([1.0, 4.0, 2.0, 0.5][i], 0.0) } else { C64::new(0.0, 0.0) });
        let l = power_iteration(&m, PowerConfig::default()).unwrap();
        assert!((l - 4.0).abs() < 1e-6);
        let z = Mat::<C64>::zeros(3, 3);
        assert_eq!(power_iteration(&z, PowerConfig::default()).unwrap(), 0.0);
    }
}
