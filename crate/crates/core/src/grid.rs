//! Cell geometry and uniform grids on `Q = [0,1] × [-R,R]^n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when snapping box faces to grid nodes.
const SNAP_TOL: f64 = 1e-9;

/// Open interval `(lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }
}

/// Cross-section `ω` (an axis-aligned box in `{xₙ < 0}` touching `{xₙ = 0}`)
/// inside the cube `[-R,R]^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeometry", into = "RawGeometry")]
pub struct CellGeometry {
    n: usize,
    r: f64,
    omega_box: Vec<Interval>,
}

#[derive(Serialize, Deserialize)]
struct RawGeometry {
    n: usize,
    #[serde(rename = "R")]
    r: f64,
    omega_box: Vec<Interval>,
}

impl TryFrom<RawGeometry> for CellGeometry {
    type Error = Error;
    fn try_from(raw: RawGeometry) -> Result<Self> {
        let g = CellGeometry::new(raw.r, raw.omega_box)?;
        if g.n != raw.n {
            return Err(Error::Geometry(format!(
                "n = {} but omega_box has {} intervals",
                raw.n, g.n
            )));
        }
        Ok(g)
    }
}

impl From<CellGeometry> for RawGeometry {
    fn from(g: CellGeometry) -> Self {
        RawGeometry { n: g.n, r: g.r, omega_box: g.omega_box }
    }
}

impl CellGeometry {
    pub fn new(r: f64, omega_box: Vec<Interval>) -> Result<Self> {
        let n = omega_box.len();
        if n < 2 {
            return Err(Error::Geometry(format!("spatial dimension {n} < 2")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Geometry(format!("half-width R = {r} must be positive")));
        }
        for (j, iv) in omega_box.iter().enumerate() {
            if !(iv.lo < iv.hi) || !iv.lo.is_finite() || !iv.hi.is_finite() {
                return Err(Error::Geometry(format!("interval {j} = ({}, {}) is empty", iv.lo, iv.hi)));
            }
            if iv.lo < -r - SNAP_TOL || iv.hi > r + SNAP_TOL {
                return Err(Error::Geometry(format!(
                    "interval {j} = ({}, {}) leaves [-R, R] with R = {r}",
                    iv.lo, iv.hi
                )));
            }
        }
        let last = omega_box[n - 1];
        if last.hi.abs() > SNAP_TOL || last.lo >= 0.0 {
            return Err(Error::Geometry(format!(
                "last interval must be (-d, 0) with d > 0, got ({}, {})",
                last.lo, last.hi
            )));
        }
        let mut omega_box = omega_box;
        omega_box[n - 1].hi = 0.0;
        Ok(Self { n, r, omega_box })
    }

    /// Centered box `∏ (-w_j/2, w_j/2) × (-depth, 0)`.
    pub fn centered(r: f64, widths: &[f64], depth: f64) -> Result<Self> {
        let mut b: Vec<Interval> = widths.iter().map(|w| Interval::new(-w / 2.0, w / 2.0)).collect();
        b.push(Interval::new(-depth, 0.0));
        Self::new(r, b)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Half-width `R` of the cell cross-section.
    pub fn half_width(&self) -> f64 {
        self.r
    }

    pub fn omega_box(&self) -> &[Interval] {
        &self.omega_box
    }

    /// `|ω|`.
    pub fn omega_volume(&self) -> f64 {
        self.omega_box.iter().map(Interval::len).product()
    }

    /// Poincaré constant of the box: first Dirichlet eigenvalue is `C_ω²`.
    pub fn poincare_constant(&self) -> f64 {
        let s: f64 = self.omega_box.iter().map(|iv| 1.0 / (iv.len() * iv.len())).sum();
        std::f64::consts::PI * s.sqrt()
    }

    /// Whether `x' ∈ ω` (open box).
    pub fn in_omega(&self, xp: &[f64]) -> bool {
        xp.iter().zip(&self.omega_box).all(|(x, iv)| iv.contains(*x))
    }
}

/// Uniform grid over `Q`: `N0` points on `[0,1)`, `N` points per spatial axis on `[-R,R)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct GridSpec {
    n0: usize,
    n: usize,
}

#[derive(Serialize, Deserialize)]
struct RawGrid {
    #[serde(rename = "N0")]
    n0: usize,
    #[serde(rename = "N")]
    n: usize,
}

impl TryFrom<RawGrid> for GridSpec {
    type Error = Error;
    fn try_from(raw: RawGrid) -> Result<Self> {
        GridSpec::new(raw.n0, raw.n)
    }
}

impl From<GridSpec> for RawGrid {
    fn from(g: GridSpec) -> Self {
        RawGrid { n0: g.n0, n: g.n }
    }
}

impl GridSpec {
    pub fn new(n0: usize, n: usize) -> Result<Self> {
        if n0 < 4 || n < 4 {
            return Err(Error::Grid(format!("need N0 >= 4 and N >= 4, got N0 = {n0}, N = {n}")));
        }
        if n % 2 != 0 {
            return Err(Error::Grid(format!("N = {n} must be even")));
        }
        Ok(Self { n0, n })
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h0(&self) -> f64 {
        1.0 / self.n0 as f64
    }

    pub fn h(&self, geom: &CellGeometry) -> f64 {
        2.0 * geom.half_width() / self.n as f64
    }

    /// Array shape `(N0, N, …, N)`.
    pub fn shape(&self, spatial_dim: usize) -> Vec<usize> {
        let mut s = vec![self.n; spatial_dim + 1];
        s[0] = self.n0;
        s
    }

    pub fn len(&self, spatial_dim: usize) -> usize {
        self.n0 * self.n.pow(spatial_dim as u32)
    }

    /// Coordinate of node `i` on a spatial axis.
    pub fn coord(&self, geom: &CellGeometry, i: usize) -> f64 {
        -geom.half_width() + i as f64 * self.h(geom)
    }

    /// Index of the node at `xₙ = 0`.
    pub fn zero_index(&self) -> usize {
        self.n / 2
    }

    /// Closed node ranges `[lo_j, hi_j]` of `ω̄` on each spatial axis.
    ///
    /// Box faces must sit on grid nodes and every axis needs at least two cells.
    pub fn box_ranges(&self, geom: &CellGeometry) -> Result<Vec<(usize, usize)>> {
        let h = self.h(geom);
        let r = geom.half_width();
        let snap = |x: f64| -> Result<usize> {
            let t = (x + r) / h;
            let i = t.round();
            if (t - i).abs() > 1e-6 || i < 0.0 || i > self.n as f64 {
                return Err(Error::Grid(format!("box face x = {x} is not a grid node (h = {h})")));
            }
            Ok(i as usize)
        };
        let mut out = Vec::with_capacity(geom.n());
        for (j, iv) in geom.omega_box().iter().enumerate() {
            let lo = snap(iv.lo)?;
            let hi = snap(iv.hi)?;
            if hi >= self.n {
                return Err(Error::Grid(format!("axis {j}: box reaches x = R, which is not a grid node")));
            }
            if hi < lo + 2 {
                return Err(Error::Grid(format!("axis {j}: box spans {} cells, need at least 2", hi - lo)));
            }
            out.push((lo, hi));
        }
        Ok(out)
    }
}

/// Row-major strides for the `(N0, N, …, N)` layout, `xₙ` fastest.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for a in (0..shape.len().saturating_sub(1)).rev() {
        s[a] = s[a + 1] * shape[a + 1];
    }
    s
}

/// Decodes a flat index into a multi-index.
pub fn unravel(mut flat: usize, shape: &[usize], out: &mut [usize]) {
    for a in (0..shape.len()).rev() {
        out[a] = flat % shape[a];
        flat /= shape[a];
    }
}
