//! Sampled functions on the period cell and the shifted lattice basis
//!
//! `e_α(x) = (2R)^{-n/2} exp(2πi α₀x₀ + iπ α'·x'/R)`,  `α ∈ ℤ^{1+n} − (0, ½, 0, …, 0)`.
//!
//! Spatial axis 1 carries the half-integer index, so the basis is
//! antiperiodic in `x₁` and periodic in every other variable.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{strides, unravel, CellGeometry, GridSpec};
use crate::C64;

/// Complex samples on the grid over `Q`, row-major in `(x₀, x₁, …, xₙ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CellFunction {
    grid: GridSpec,
    geom: CellGeometry,
    values: Vec<C64>,
}

impl CellFunction {
    pub fn zeros(grid: GridSpec, geom: CellGeometry) -> Self {
        let len = grid.len(geom.n());
        Self { grid, geom, values: vec![C64::new(0.0, 0.0); len] }
    }

    pub fn from_values(grid: GridSpec, geom: CellGeometry, values: Vec<C64>) -> Result<Self> {
        let len = grid.len(geom.n());
        if values.len() != len {
            return Err(Error::Shape(format!("expected {len} samples, got {}", values.len())));
        }
        Ok(Self { grid, geom, values })
    }

    /// Samples `f(x₀, x')` at every grid point.
    pub fn from_fn(grid: GridSpec, geom: CellGeometry, mut f: impl FnMut(&[f64]) -> C64) -> Self {
        let mut out = Self::zeros(grid, geom);
        let mut x = vec![0.0; out.geom.n() + 1];
        for flat in 0..out.values.len() {
            out.point_into(flat, &mut x);
            out.values[flat] = f(&x);
        }
        out
    }

    pub fn from_real_fn(grid: GridSpec, geom: CellGeometry, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        Self::from_fn(grid, geom, |x| C64::new(f(x), 0.0))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn geometry(&self) -> &CellGeometry {
        &self.geom
    }

    pub fn n(&self) -> usize {
        self.geom.n()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.grid.shape(self.geom.n())
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Quadrature weight `h₀hⁿ` of one sample.
    pub fn cell_weight(&self) -> f64 {
        self.grid.h0() * self.grid.h(&self.geom).powi(self.geom.n() as i32)
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let n = self.grid.n();
        idx[1..].iter().fold(idx[0], |acc, &i| acc * n + i)
    }

    pub fn get(&self, idx: &[usize]) -> C64 {
        self.values[self.flat_index(idx)]
    }

    /// Coordinates `(x₀, x')` of sample `flat`.
    pub fn point_into(&self, flat: usize, x: &mut [f64]) {
        let n = self.grid.n();
        let mut rest = flat;
        for a in (1..x.len()).rev() {
            x[a] = self.grid.coord(&self.geom, rest % n);
            rest /= n;
        }
        x[0] = rest as f64 * self.grid.h0();
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.geom.n() + 1];
        self.point_into(flat, &mut x);
        x
    }

    fn same_layout(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.geom != other.geom {
            return Err(Error::Shape("cell functions live on different grids".into()));
        }
        Ok(())
    }

    /// `⟨f, g⟩ = h₀hⁿ Σ f ḡ`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        self.same_layout(other)?;
        let s: C64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum();
        Ok(s * self.cell_weight())
    }

    /// Discrete `L²(Q)` norm.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.cell_weight()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.im.abs()))
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self { grid: self.grid, geom: self.geom.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, c: C64) -> Self {
        self.map(|v| v * c)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        self.same_layout(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid, geom: self.geom.clone(), values })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    /// Exchanges two spatial axes (`1 ≤ a, b ≤ n`).
    pub fn swap_spatial_axes(&self, a: usize, b: usize) -> Self {
        if a == b {
            return self.clone();
        }
        let shape = self.shape();
        let st = strides(&shape);
        let mut out = self.clone();
        let mut idx = vec![0; shape.len()];
        for flat in 0..self.values.len() {
            unravel(flat, &shape, &mut idx);
            idx.swap(a, b);
            let dst: usize = idx.iter().zip(&st).map(|(i, s)| i * s).sum();
            out.values[dst] = self.values[flat];
        }
        out
    }
}

/// `x* = (x₀, …, −xₙ)` on the grid: `iₙ ↦ (N − iₙ) mod N`.
pub fn reflect(f: &CellFunction) -> CellFunction {
    let n = f.grid.n();
    let mut out = f.clone();
    for (dst, chunk) in out.values.chunks_exact_mut(n).zip(f.values.chunks_exact(n)) {
        dst[0] = chunk[0];
        for i in 1..n {
            dst[i] = chunk[n - i];
        }
    }
    out
}

/// Zero outside `ω̌` in `{xₙ < 0}`, `q` on `ω̌`, even reflection in `{xₙ > 0}`.
pub fn extend_potential(q: &CellFunction) -> Result<CellFunction> {
    let im = q.max_imag();
    if im > 1e-12 {
        return Err(Error::InvalidParams(format!("potential must be real, max |Im q| = {im:.3e}")));
    }
    let n = q.n();
    let nn = q.grid.n();
    let mut out = CellFunction::zeros(q.grid, q.geom.clone());
    let mut x = vec![0.0; n + 1];
    for flat in 0..q.values.len() {
        q.point_into(flat, &mut x);
        if x[n] < 0.0 && q.geom.in_omega(&x[1..]) {
            let v = C64::new(q.values[flat].re, 0.0);
            let i_n = flat % nn;
            out.values[flat] = v;
            out.values[flat - i_n + (nn - i_n) % nn] = v;
        }
    }
    Ok(out)
}

/// `e_α(x)` evaluated analytically.
pub fn basis_value(geom: &CellGeometry, alpha: &LatticeIndex, x: &[f64]) -> C64 {
    let r = geom.half_width();
    let mut phase = 2.0 * PI * alpha.alpha0 as f64 * x[0];
    for (a, xj) in alpha.spatial().zip(&x[1..]) {
        phase += PI * a * xj / r;
    }
    C64::from_polar((2.0 * r).powf(-(geom.n() as f64) / 2.0), phase)
}

/// `α = (α₀, α₁, …, αₙ)` with `α₁ ∈ ℤ − ½` stored as `2α₁`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LatticeIndex {
    pub alpha0: i64,
    twice_alpha1: i64,
    rest: Vec<i64>,
}

impl LatticeIndex {
    /// `alpha1` must be a half-integer.
    pub fn new(alpha0: i64, alpha1: f64, rest: Vec<i64>) -> Result<Self> {
        let t = 2.0 * alpha1;
        if (t - t.round()).abs() > 1e-12 || (t.round() as i64).rem_euclid(2) != 1 {
            return Err(Error::InvalidParams(format!("alpha_1 = {alpha1} is not a half-integer")));
        }
        Ok(Self { alpha0, twice_alpha1: t.round() as i64, rest })
    }

    pub fn alpha1(&self) -> f64 {
        self.twice_alpha1 as f64 / 2.0
    }

    /// `(α₁, …, αₙ)` as reals.
    pub fn spatial(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.alpha1()).chain(self.rest.iter().map(|&a| a as f64))
    }

    pub fn n(&self) -> usize {
        1 + self.rest.len()
    }
}

/// Band of the discrete transform along one axis.
#[derive(Clone, Copy, Debug)]
enum Band {
    /// `{−N/2, …, N/2 − 1}`.
    Integer,
    /// `{−N/2 + ½, …, N/2 − ½}`.
    HalfInteger,
}

fn band_value(m: usize, len: usize, band: Band) -> f64 {
    match band {
        Band::Integer => {
            if m < len / 2 {
                m as f64
            } else {
                m as f64 - len as f64
            }
        }
        Band::HalfInteger => {
            let mt = if m <= len / 2 { m as f64 } else { m as f64 - len as f64 };
            mt - 0.5
        }
    }
}

fn band_position(value: f64, len: usize, band: Band) -> Option<usize> {
    let mt = match band {
        Band::Integer => value,
        Band::HalfInteger => value + 0.5,
    };
    if (mt - mt.round()).abs() > 1e-9 {
        return None;
    }
    let mt = mt.round() as i64;
    let (lo, hi) = match band {
        Band::Integer => (-(len as i64) / 2, len as i64 / 2 - 1),
        Band::HalfInteger => (-(len as i64) / 2 + 1, len as i64 / 2),
    };
    (lo..=hi).contains(&mt).then(|| mt.rem_euclid(len as i64) as usize)
}

/// Coefficients `⟨f, e_α⟩` on the discrete band, stored in transform order.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeCoefficients {
    grid: GridSpec,
    geom: CellGeometry,
    coeffs: Vec<C64>,
}

impl LatticeCoefficients {
    pub fn zeros(grid: GridSpec, geom: CellGeometry) -> Self {
        let len = grid.len(geom.n());
        Self { grid, geom, coeffs: vec![C64::new(0.0, 0.0); len] }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn geometry(&self) -> &CellGeometry {
        &self.geom
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Storage slot of `α`, or `None` if `α` lies outside the band.
    pub fn position(&self, alpha: &LatticeIndex) -> Option<usize> {
        if alpha.n() != self.geom.n() {
            return None;
        }
        let n = self.grid.n();
        let mut flat = band_position(alpha.alpha0 as f64, self.grid.n0(), Band::Integer)?;
        flat = flat * n + band_position(alpha.alpha1(), n, Band::HalfInteger)?;
        for &a in &alpha.rest {
            flat = flat * n + band_position(a as f64, n, Band::Integer)?;
        }
        Some(flat)
    }

    /// `α` stored in slot `flat`, as reals `(α₀, α₁, …, αₙ)`.
    pub fn alpha_at(&self, flat: usize) -> Vec<f64> {
        let shape = self.grid.shape(self.geom.n());
        let mut idx = vec![0; shape.len()];
        unravel(flat, &shape, &mut idx);
        idx.iter()
            .enumerate()
            .map(|(a, &m)| {
                let band = if a == 1 { Band::HalfInteger } else { Band::Integer };
                band_value(m, shape[a], band)
            })
            .collect()
    }

    pub fn get(&self, alpha: &LatticeIndex) -> Option<C64> {
        self.position(alpha).map(|p| self.coeffs[p])
    }

    pub fn set(&mut self, alpha: &LatticeIndex, value: C64) -> Result<()> {
        let p = self
            .position(alpha)
            .ok_or_else(|| Error::InvalidParams(format!("{alpha:?} outside the discrete band")))?;
        self.coeffs[p] = value;
        Ok(())
    }
}

/// FFT plans and phase tables for one `(grid, geometry)` pair.
pub struct SpectralPlan {
    grid: GridSpec,
    geom: CellGeometry,
    fwd0: Arc<dyn Fft<f64>>,
    inv0: Arc<dyn Fft<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// `exp(iπ i₁/N)`.
    modulation: Vec<C64>,
    /// `exp(iπ α_j)` per slot on the integer and half-integer bands.
    phase_int: Vec<C64>,
    phase_half: Vec<C64>,
}

impl SpectralPlan {
    pub fn new(grid: GridSpec, geom: CellGeometry) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.n();
        let modulation = (0..n).map(|i| C64::from_polar(1.0, PI * i as f64 / n as f64)).collect();
        let phase_int = (0..n).map(|m| C64::from_polar(1.0, PI * band_value(m, n, Band::Integer))).collect();
        let phase_half = (0..n).map(|m| C64::from_polar(1.0, PI * band_value(m, n, Band::HalfInteger))).collect();
        Self {
            fwd0: planner.plan_fft_forward(grid.n0()),
            inv0: planner.plan_fft_inverse(grid.n0()),
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            grid,
            geom,
            modulation,
            phase_int,
            phase_half,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn geometry(&self) -> &CellGeometry {
        &self.geom
    }

    fn check(&self, grid: &GridSpec, geom: &CellGeometry) -> Result<()> {
        if *grid != self.grid || *geom != self.geom {
            return Err(Error::Shape("spectral plan built for a different grid".into()));
        }
        Ok(())
    }

    fn transform_all_axes(&self, data: &mut [C64], forward: bool) {
        let shape = self.grid.shape(self.geom.n());
        let mut scratch = Vec::new();
        for (axis, &len) in shape.iter().enumerate() {
            let plan = match (axis == 0, forward) {
                (true, true) => &self.fwd0,
                (true, false) => &self.inv0,
                (false, true) => &self.fwd,
                (false, false) => &self.inv,
            };
            fft_axis(data, &shape, axis, len, plan.as_ref(), &mut scratch);
        }
    }

    /// Multiplies each slot by `∏_j exp(±iπ α_j)` over spatial axes.
    fn apply_phase(&self, data: &mut [C64], conj: bool) {
        let shape = self.grid.shape(self.geom.n());
        let mut idx = vec![0; shape.len()];
        for (flat, v) in data.iter_mut().enumerate() {
            unravel(flat, &shape, &mut idx);
            let mut p = self.phase_half[idx[1]];
            for &m in &idx[2..] {
                p *= self.phase_int[m];
            }
            *v *= if conj { p.conj() } else { p };
        }
    }

    fn modulate(&self, data: &mut [C64], conj: bool) {
        let n = self.grid.n();
        let inner = n.pow(self.geom.n() as u32 - 1);
        for (i, chunk) in data.chunks_exact_mut(inner).enumerate() {
            let m = self.modulation[i % n];
            let m = if conj { m.conj() } else { m };
            for v in chunk {
                *v *= m;
            }
        }
    }

    pub fn analyze(&self, f: &CellFunction) -> Result<LatticeCoefficients> {
        self.check(&f.grid, &f.geom)?;
        let mut data = f.values.clone();
        self.modulate(&mut data, false);
        self.transform_all_axes(&mut data, true);
        self.apply_phase(&mut data, false);
        let scale = f.cell_weight() * (2.0 * self.geom.half_width()).powf(-(self.geom.n() as f64) / 2.0);
        for v in &mut data {
            *v *= scale;
        }
        Ok(LatticeCoefficients { grid: self.grid, geom: self.geom.clone(), coeffs: data })
    }

    pub fn synthesize(&self, c: &LatticeCoefficients) -> Result<CellFunction> {
        self.check(&c.grid, &c.geom)?;
        let mut data = c.coeffs.clone();
        self.apply_phase(&mut data, true);
        self.transform_all_axes(&mut data, false);
        self.modulate(&mut data, true);
        let scale = (2.0 * self.geom.half_width()).powf(-(self.geom.n() as f64) / 2.0);
        for v in &mut data {
            *v *= scale;
        }
        Ok(CellFunction { grid: self.grid, geom: self.geom.clone(), values: data })
    }
}

/// In-place unnormalized DFT along `axis`.
pub(crate) fn fft_axis(
    data: &mut [C64],
    shape: &[usize],
    axis: usize,
    len: usize,
    plan: &dyn Fft<f64>,
    line: &mut Vec<C64>,
) {
    let st = strides(shape);
    let stride = st[axis];
    let block = stride * len;
    line.resize(len, C64::new(0.0, 0.0));
    let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
    for outer in (0..data.len()).step_by(block) {
        for inner in 0..stride {
            let base = outer + inner;
            for (k, slot) in line.iter_mut().enumerate() {
                *slot = data[base + k * stride];
            }
            plan.process_with_scratch(line, &mut scratch);
            for (k, slot) in line.iter().enumerate() {
                data[base + k * stride] = *slot;
            }
        }
    }
}

pub fn to_coefficients(f: &CellFunction) -> LatticeCoefficients {
    SpectralPlan::new(f.grid, f.geom.clone()).analyze(f).expect("plan matches input")
}

pub fn from_coefficients(c: &LatticeCoefficients) -> CellFunction {
    SpectralPlan::new(c.grid, c.geom.clone()).synthesize(c).expect("plan matches input")
}
