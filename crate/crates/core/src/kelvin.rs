//! Partial Kelvin transform `y′ = (2R/|x′|)² x′`, `y₀ = x₀`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

const SINGULAR: f64 = 1e-12;

/// Sphere `|x′ − a| = R` through the origin with `a = (0, …, 0, R)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KelvinChart {
    #[serde(rename = "R")]
    r: f64,
    n: usize,
}

impl KelvinChart {
    pub fn new(r: f64, n: usize) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Geometry(format!("sphere radius {r} must be positive")));
        }
        if n < 2 {
            return Err(Error::Geometry(format!("spatial dimension {n} must be >= 2")));
        }
        Ok(Self { r, n })
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn center(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.n];
        a[self.n - 1] = self.r;
        a
    }

    fn spatial_norm(&self, xp: &[f64]) -> Result<f64> {
        if xp.len() != self.n {
            return Err(Error::Shape(format!("expected {} spatial coordinates, got {}", self.n, xp.len())));
        }
        let norm = xp.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < SINGULAR {
            return Err(Error::SingularPoint { norm });
        }
        Ok(norm)
    }

    /// Inversion of the spatial part only.
    pub fn map_spatial(&self, xp: &[f64]) -> Result<Vec<f64>> {
        let norm = self.spatial_norm(xp)?;
        let s = (2.0 * self.r / norm).powi(2);
        Ok(xp.iter().map(|v| s * v).collect())
    }

    /// `(x₀, x′) ↦ (x₀, (2R/|x′|)² x′)`; an involution.
    pub fn map_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n + 1 {
            return Err(Error::Shape(format!("expected {} coordinates, got {}", self.n + 1, x.len())));
        }
        let mut y = Vec::with_capacity(x.len());
        y.push(x[0]);
        y.extend(self.map_spatial(&x[1..])?);
        Ok(y)
    }

    /// `(2R/|y′|)^{n−2}`.
    pub fn weight(&self, yp: &[f64]) -> Result<f64> {
        Ok((2.0 * self.r / self.spatial_norm(yp)?).powi(self.n as i32 - 2))
    }

    /// `(2R/|y′|)⁴`.
    pub fn potential_weight(&self, yp: &[f64]) -> Result<f64> {
        Ok((2.0 * self.r / self.spatial_norm(yp)?).powi(4))
    }

    /// `|det ∂x/∂y| = (2R/|y′|)^{2n}`.
    pub fn jacobian(&self, yp: &[f64]) -> Result<f64> {
        Ok((2.0 * self.r / self.spatial_norm(yp)?).powi(2 * self.n as i32))
    }

    /// `ũ(y) = (2R/|y′|)^{n−2} u(x(y))` for a closed-form `u`.
    pub fn transform_value(&self, u: impl Fn(&[f64]) -> C64, y: &[f64]) -> Result<C64> {
        let x = self.map_point(y)?;
        Ok(u(&x) * self.weight(&y[1..])?)
    }

    /// Points on `|x′ − a| = R` spread by a golden-angle spiral, parametrized from the
    /// origin so that `|x′|² = 2R xₙ` holds to rounding even next to it.
    pub fn sphere_points(&self, count: usize) -> Vec<Vec<f64>> {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let r = self.r;
        (1..=count)
            .map(|j| {
                // t and u = 1 − t from separate exact numerators
                let t = (j as f64 - 0.5) / count as f64;
                let u = (count as f64 - j as f64 + 0.5) / count as f64;
                let mut p = vec![0.0; self.n];
                if self.n == 2 {
                    let psi = 2.0 * std::f64::consts::PI * t;
                    p[0] = r * psi.sin();
                    p[1] = 2.0 * r * (0.5 * psi).sin().powi(2);
                } else {
                    let s = 2.0 * (t * u).sqrt();
                    let phi = golden * j as f64;
                    p[0] = r * s * phi.cos();
                    p[1] = r * s * phi.sin();
                    p[self.n - 1] = 2.0 * r * t;
                }
                p
            })
            .collect()
    }
}

/// Uniform tensor grid on a box in `ℝ^{1+n}`, nodes included at both ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub dims: Vec<usize>,
}

impl BoxGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, dims: Vec<usize>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != dims.len() || lo.is_empty() {
            return Err(Error::Shape("box grid axes disagree".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) || dims.iter().any(|&d| d < 2) {
            return Err(Error::Grid("box grid needs lo < hi and >= 2 nodes per axis".into()));
        }
        Ok(Self { lo, hi, dims })
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn step(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.dims[axis] - 1) as f64
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim()];
        crate::grid::unravel(flat, &self.dims, &mut idx);
        idx.iter().enumerate().map(|(a, &i)| self.lo[a] + i as f64 * self.step(a)).collect()
    }

    /// Trapezoid weight of a node.
    pub fn weight(&self, flat: usize) -> f64 {
        let mut idx = vec![0; self.dim()];
        crate::grid::unravel(flat, &self.dims, &mut idx);
        idx.iter()
            .enumerate()
            .map(|(a, &i)| if i == 0 || i + 1 == self.dims[a] { 0.5 * self.step(a) } else { self.step(a) })
            .product()
    }
}

/// Samples on a [`BoxGrid`] with multilinear (second-order) interpolation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub grid: BoxGrid,
    pub values: Vec<C64>,
}

impl GridField {
    pub fn from_fn(grid: BoxGrid, f: impl Fn(&[f64]) -> C64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self { grid, values }
    }

    pub fn interpolate(&self, x: &[f64]) -> Result<C64> {
        let g = &self.grid;
        let d = g.dim();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for a in 0..d {
            let t = (x[a] - g.lo[a]) / g.step(a);
            let tol = 1e-9;
            if t < -tol || t > (g.dims[a] - 1) as f64 + tol {
                return Err(Error::OutsideSource(x.to_vec()));
            }
            let t = t.clamp(0.0, (g.dims[a] - 1) as f64);
            let b = (t.floor() as usize).min(g.dims[a] - 2);
            base[a] = b;
            frac[a] = t - b as f64;
        }
        let mut acc = C64::new(0.0, 0.0);
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for a in 0..d {
                let bit = (corner >> a) & 1;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                flat = flat * g.dims[a] + base[a] + bit;
            }
            if w != 0.0 {
                acc += self.values[flat] * w;
            }
        }
        Ok(acc)
    }

    /// `(Σ w |u|²)^{1/2}` by the trapezoid rule.
    pub fn l2_norm(&self) -> f64 {
        self.values.iter().enumerate().map(|(i, v)| self.grid.weight(i) * v.norm_sqr()).sum::<f64>().sqrt()
    }
}

fn pull_back(ch: &KelvinChart, u: &GridField, target: &BoxGrid, power: impl Fn(&[f64]) -> Result<f64>) -> Result<GridField> {
    if target.dim() != ch.n() + 1 || u.grid.dim() != ch.n() + 1 {
        return Err(Error::Shape("grids must live in R^{1+n}".into()));
    }
    let values = (0..target.len())
        .map(|i| {
            let y = target.point(i);
            let x = ch.map_point(&y)?;
            Ok(u.interpolate(&x)? * power(&y[1..])?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridField { grid: target.clone(), values })
}

/// `ũ(y) = (2R/|y′|)^{n−2} u(x(y))` on `target`.
pub fn transform_function(ch: &KelvinChart, u: &GridField, target: &BoxGrid) -> Result<GridField> {
    pull_back(ch, u, target, |yp| ch.weight(yp))
}

/// `q̃(y) = (2R/|y′|)⁴ q(x(y))` on `target`.
pub fn transform_potential(ch: &KelvinChart, q: &GridField, target: &BoxGrid) -> Result<GridField> {
    pull_back(ch, q, target, |yp| ch.potential_weight(yp))
}

/// Central second-difference Laplacian in `x′` of a closed-form function.
pub fn spatial_laplacian(f: impl Fn(&[f64]) -> C64, x: &[f64], h: f64) -> C64 {
    let c = f(x);
    let mut p = x.to_vec();
    let mut acc = C64::new(0.0, 0.0);
    for a in 1..x.len() {
        p[a] = x[a] + h;
        let up = f(&p);
        p[a] = x[a] - h;
        let dn = f(&p);
        p[a] = x[a];
        acc += (up + dn - c * 2.0) / (h * h);
    }
    acc
}

/// `max |(|y′|/2R)^{n+2} Δ′_y ũ(y) − Δ′_x u(x(y))|` over `ys`, both sides by
/// central differences with step `h`.
pub fn conjugation_residual(ch: &KelvinChart, u: impl Fn(&[f64]) -> C64 + Copy, ys: &[Vec<f64>], h: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for y in ys {
        let x = ch.map_point(y)?;
        let ut = |z: &[f64]| ch.transform_value(u, z).unwrap_or(C64::new(f64::NAN, 0.0));
        let yn = y[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
        let lhs = spatial_laplacian(ut, y, h) * (yn / (2.0 * ch.radius())).powi(ch.n() as i32 + 2);
        let rhs = spatial_laplacian(u, &x, h);
        let d = (lhs - rhs).norm();
        if !d.is_finite() {
            return Err(Error::SingularPoint { norm: yn });
        }
        worst = worst.max(d);
    }
    Ok(worst)
}

/// Norm-equivalence constants over a set of `y` points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceFactors {
    /// Extremes of `(2R/|y′|)^{n−2}`.
    pub weight_low: f64,
    pub weight_high: f64,
    /// Extremes of `(2R/|y′|)⁴`.
    pub potential_low: f64,
    pub potential_high: f64,
    /// Extremes of `(|y′|/2R)²`, the `L²` ratio once `dx = (2R/|y′|)^{2n} dy` is included.
    pub jacobian_low: f64,
    pub jacobian_high: f64,
}

pub fn equivalence_factors(ch: &KelvinChart, ys: &[Vec<f64>]) -> Result<EquivalenceFactors> {
    if ys.is_empty() {
        return Err(Error::Domain("empty domain sample".into()));
    }
    let mut f = EquivalenceFactors {
        weight_low: f64::INFINITY,
        weight_high: 0.0,
        potential_low: f64::INFINITY,
        potential_high: 0.0,
        jacobian_low: f64::INFINITY,
        jacobian_high: 0.0,
    };
    for y in ys {
        let yp = &y[1..];
        let w = ch.weight(yp)?;
        let p = ch.potential_weight(yp)?;
        let j = (ch.weight(yp)?.powi(2) / ch.jacobian(yp)?).sqrt();
        f.weight_low = f.weight_low.min(w);
        f.weight_high = f.weight_high.max(w);
        f.potential_low = f.potential_low.min(p);
        f.potential_high = f.potential_high.max(p);
        f.jacobian_low = f.jacobian_low.min(j);
        f.jacobian_high = f.jacobian_high.max(j);
    }
    Ok(f)
}

/// `(‖ũ‖_{L²(ω̃)} / ‖u‖_{L²(ω)})` with both integrals taken on the `y` grid
/// (the second through the change of variables).
pub fn l2_quotient(ch: &KelvinChart, u: impl Fn(&[f64]) -> C64, target: &BoxGrid) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..target.len() {
        let y = target.point(i);
        let x = ch.map_point(&y)?;
        let w = target.weight(i);
        let ux = u(&x).norm_sqr();
        num += w * ch.weight(&y[1..])?.powi(2) * ux;
        den += w * ch.jacobian(&y[1..])? * ux;
    }
    Ok((num / den).sqrt())
}

/// `(Σ |ũ(y_i)|² / Σ |u(x_i)|²)^{1/2}` over paired samples.
pub fn sample_quotient(ch: &KelvinChart, u: impl Fn(&[f64]) -> C64, ys: &[Vec<f64>]) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for y in ys {
        let x = ch.map_point(y)?;
        let ux = u(&x).norm_sqr();
        num += ch.weight(&y[1..])?.powi(2) * ux;
        den += ux;
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_maps_to_plane() {
        for n in [2, 3, 4] {
            let ch = KelvinChart::new(0.7, n).unwrap();
            for p in ch.sphere_points(50) {
                let mut x = vec![0.3];
                x.extend(p);
                let y = ch.map_point(&x).unwrap();
                assert!((y[n] - 1.4).abs() < 1e-12, "{}", y[n]);
                assert_eq!(y[0], 0.3);
            }
        }
    }

    #[test]
    fn involution_and_fixed_sphere() {
        let ch = KelvinChart::new(1.0, 3).unwrap();
        let x = [0.2, 0.3, -1.1, 0.9];
        let back = ch.map_point(&ch.map_point(&x).unwrap()).unwrap();
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-14);
        }
        let y = ch.map_point(&[0.0, 0.0, 0.0, 2.0]).unwrap();
        assert_eq!(y, vec![0.0, 0.0, 0.0, 2.0]);
        assert!(matches!(ch.map_point(&[0.0, 0.0, 0.0, 0.0]), Err(Error::SingularPoint { .. })));
    }

    #[test]
    fn transformed_constant_is_harmonic() {
        let ch = KelvinChart::new(0.5, 3).unwrap();
        let one = |_: &[f64]| C64::new(1.0, 0.0);
        let y = [0.1, 0.4, -0.3, 1.2];
        let ut = |z: &[f64]| ch.transform_value(one, z).unwrap();
        let l1 = spatial_laplacian(ut, &y, 1e-2).norm();
        let l2 = spatial_laplacian(ut, &y, 5e-3).norm();
        assert!(l1 < 1e-3 && (l1 / l2 - 4.0).abs() < 0.1, "{l1} {l2}");
    }

    #[test]
    fn conjugation_second_order() {
        let ch = KelvinChart::new(0.5, 3).unwrap();
        let u = |x: &[f64]| C64::new(x[1] * x[1] * x[3] + (x[2] * 2.0).sin() + x[3].exp(), 0.0);
        let ys = vec![vec![0.0, 0.3, 0.2, 1.1], vec![0.5, -0.2, 0.4, 1.4]];
        let r1 = conjugation_residual(&ch, u, &ys, 0.02).unwrap();
        let r2 = conjugation_residual(&ch, u, &ys, 0.01).unwrap();
        assert!((r1 / r2 - 4.0).abs() < 0.5, "{r1} {r2}");
    }

    #[test]
    fn equivalence_examples() {
        let ch = KelvinChart::new(1.0, 3).unwrap();
        let shell: Vec<Vec<f64>> = (0..10).map(|j| {
            let t = j as f64 * 0.3;
            vec![0.0, 2.0 * t.cos(), 0.0, 2.0 * t.sin()]
        }).collect();
        let f = equivalence_factors(&ch, &shell).unwrap();
        assert!((f.weight_low - 1.0).abs() < 1e-14 && (f.weight_high - 1.0).abs() < 1e-14);
        let radial = vec![vec![0.0, 0.0, 0.0, 2.0 / 2f64.sqrt()], vec![0.0, 0.0, 0.0, 2.0 * 2f64.sqrt()]];
        let f = equivalence_factors(&ch, &radial).unwrap();
        assert!((f.weight_low - 2f64.powf(-0.5)).abs() < 1e-14);
        assert!((f.weight_high - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn grid_transform_matches_closed_form() {
        let ch = KelvinChart::new(0.5, 2).unwrap();
        let u = |x: &[f64]| C64::new(x[1] + 2.0 * x[2], x[0]);
        let src = BoxGrid::new(vec![0.0, -0.6, 0.2], vec![1.0, 0.6, 1.2], vec![5, 61, 51]).unwrap();
        let field = GridField::from_fn(src, u);
        let target = BoxGrid::new(vec![0.0, -0.3, 1.0], vec![1.0, 0.3, 1.2], vec![3, 7, 5]).unwrap();
        let q = transform_potential(&ch, &field, &target).unwrap();
        let ut = transform_function(&ch, &field, &target).unwrap();
        for i in 0..target.len() {
            let y = target.point(i);
            let x = ch.map_point(&y).unwrap();
            assert!((ut.values[i] - u(&x)).norm() < 1e-12);
            assert!((q.values[i] - u(&x) * ch.potential_weight(&y[1..]).unwrap()).norm() < 1e-12);
        }
        let far = BoxGrid::new(vec![0.0, -0.3, 0.1], vec![1.0, 0.3, 0.2], vec![2, 2, 2]).unwrap();
        assert!(matches!(transform_function(&ch, &field, &far), Err(Error::OutsideSource(_))));
    }
}
