//! Complex geometric optics solutions `u = e^{ζ·x}(1 + r)` on the period cell.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{reflect, CellFunction, SpectralPlan};
use crate::linalg::{cdot, dot2};
use crate::C64;

const VEC_TOL: f64 = 1e-12;

/// Axial frequency `k`, stored as `2k` so that both `ℤ` and `ℤ + ½` are exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct AxialFrequency {
    twice: i64,
}

impl AxialFrequency {
    pub fn from_twice(twice: i64) -> Self {
        Self { twice }
    }

    pub fn integer(k: i64) -> Self {
        Self { twice: 2 * k }
    }

    /// `k = m + ½`.
    pub fn half(m: i64) -> Self {
        Self { twice: 2 * m + 1 }
    }

    pub fn value(self) -> f64 {
        self.twice as f64 / 2.0
    }

    pub fn twice(self) -> i64 {
        self.twice
    }

    pub fn is_half_integer(self) -> bool {
        self.twice.rem_euclid(2) == 1
    }

    /// Phase shift `σ_k`.
    ///
    /// Half-integer `k`: `7/4` if `k − ½` is even, `5/4` if odd. Integer `k`:
    /// `1` if `k` is even, `3/2` if odd, which makes both `ζ₁` and `ζ₂`
    /// θ-quasi-periodic.
    pub fn sigma(self) -> f64 {
        if self.is_half_integer() {
            if self.twice.rem_euclid(4) == 1 {
                1.75
            } else {
                1.25
            }
        } else if self.twice.rem_euclid(4) == 0 {
            1.0
        } else {
            1.5
        }
    }
}

impl TryFrom<f64> for AxialFrequency {
    type Error = Error;
    fn try_from(k: f64) -> Result<Self> {
        let t = 2.0 * k;
        if !t.is_finite() || (t - t.round()).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!("k = {k} is not in Z/2")));
        }
        Ok(Self { twice: t.round() as i64 })
    }
}

impl From<AxialFrequency> for f64 {
    fn from(k: AxialFrequency) -> f64 {
        k.value()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgoParams {
    pub theta: f64,
    pub k: AxialFrequency,
    pub r: f64,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
}

impl CgoParams {
    pub fn validate(&self) -> Result<()> {
        let n = self.xi.len();
        if n < 2 || self.eta.len() != n {
            return Err(Error::InvalidParams(format!(
                "xi and eta must share a dimension >= 2 (got {} and {})",
                n,
                self.eta.len()
            )));
        }
        if !(0.0..2.0 * PI).contains(&self.theta) {
            return Err(Error::InvalidParams(format!("theta = {} outside [0, 2pi)", self.theta)));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::InvalidParams(format!("r = {} must be positive", self.r)));
        }
        let xi_norm = dot2(self.xi.iter().map(|&a| (a, a))).sqrt();
        if (xi_norm - 1.0).abs() > VEC_TOL {
            return Err(Error::InvalidParams(format!("|xi| = {xi_norm}, expected 1")));
        }
        let xe = dot2(self.xi.iter().zip(&self.eta).map(|(&a, &b)| (a, b)));
        if xe.abs() > VEC_TOL {
            return Err(Error::InvalidParams(format!("xi . eta = {xe:.3e}")));
        }
        if self.xi[n - 1].abs() > VEC_TOL {
            return Err(Error::InvalidParams(format!("xi . e_n = {:.3e}", self.xi[n - 1])));
        }
        if self.eta.iter().all(|&e| e == 0.0) {
            return Err(Error::InvalidParams("eta = 0".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.xi.len()
    }

    /// `θ + 2π([r] + σ_k)`.
    pub fn axial_shift(&self) -> f64 {
        self.theta + 2.0 * PI * (self.r.floor() + self.k.sigma())
    }

    pub fn eta_star(&self) -> Vec<f64> {
        star_real(&self.eta)
    }

    /// `κ = ½(η + η*) + (θ + 2π([r] + σ_k))(2πk/|η|²)(η − η*)`.
    pub fn kappa(&self) -> Vec<f64> {
        self.kappa_signed(1.0)
    }

    fn kappa_signed(&self, sign: f64) -> Vec<f64> {
        let es = self.eta_star();
        let eta2 = dot2(self.eta.iter().map(|&a| (a, a)));
        let f = sign * self.axial_shift() * 2.0 * PI * self.k.value() / eta2;
        self.eta.iter().zip(&es).map(|(e, s)| 0.5 * (e + s) + f * (e - s)).collect()
    }
}

fn star_real(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    if let Some(last) = s.last_mut() {
        *last = -*last;
    }
    s
}

/// `v ↦ v*` on `ℂ^{1+n}` (last component negated).
pub fn star(v: &[C64]) -> Vec<C64> {
    let mut s = v.to_vec();
    if let Some(last) = s.last_mut() {
        *last = -*last;
    }
    s
}

fn conj(v: &[C64]) -> Vec<C64> {
    v.iter().map(|z| z.conj()).collect()
}

fn add(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgoPhase {
    pub params: CgoParams,
    pub l: Vec<f64>,
    pub tau: f64,
    pub zeta1: Vec<C64>,
    pub zeta2: Vec<C64>,
    pub sigma_k: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    One,
    Two,
}

impl CgoPhase {
    pub fn zeta(&self, which: Branch) -> &[C64] {
        match which {
            Branch::One => &self.zeta1,
            Branch::Two => &self.zeta2,
        }
    }

    pub fn n(&self) -> usize {
        self.params.n()
    }
}

pub fn build_phase(p: &CgoParams) -> Result<CgoPhase> {
    p.validate()?;
    let n = p.n();
    let k = p.k.value();
    let c = p.axial_shift();
    let eta2 = dot2(p.eta.iter().map(|&a| (a, a)));
    let mut l = Vec::with_capacity(n + 1);
    l.push(c);
    l.extend(p.eta.iter().map(|e| -c * 2.0 * PI * k / eta2 * e));
    let tau2 = eta2 / 4.0 + PI * PI * k * k + dot2(l.iter().map(|&a| (a, a)));
    let tau = tau2.sqrt();
    let mut zeta1 = Vec::with_capacity(n + 1);
    let mut zeta2 = Vec::with_capacity(n + 1);
    zeta1.push(C64::new(0.0, PI * k + l[0]));
    zeta2.push(C64::new(0.0, -PI * k + l[0]));
    for j in 0..n {
        zeta1.push(C64::new(-tau * p.xi[j], p.eta[j] / 2.0 + l[j + 1]));
        zeta2.push(C64::new(tau * p.xi[j], -p.eta[j] / 2.0 + l[j + 1]));
    }
    Ok(CgoPhase { params: p.clone(), l, tau, zeta1, zeta2, sigma_k: p.k.sigma() })
}

/// Returns `(ζ₁* + ζ̄₂, ζ₁ + ζ̄₂*)`.
pub fn cross_phase_vectors(ph: &CgoPhase) -> (Vec<C64>, Vec<C64>) {
    (
        add(&star(&ph.zeta1), &conj(&ph.zeta2)),
        add(&ph.zeta1, &conj(&star(&ph.zeta2))),
    )
}

/// Residuals of the phase identities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    /// `|ζ·ζ|` for `ζ₁, ζ₂, ζ₁*, ζ₂*`.
    pub null: [f64; 4],
    /// Max deviation of the four sum identities.
    pub sums: [f64; 4],
    /// `|exp(ζ_j·e₀) − e^{iθ}|` for `j = 1, 2`.
    pub quasi_periodicity: [f64; 2],
    /// `|τ² − |η|²/4 − π²k² − |l|²|`.
    pub tau: f64,
}

impl IdentityReport {
    pub fn max_null(&self) -> f64 {
        self.null.iter().fold(0.0, |a: f64, b| a.max(*b))
    }

    pub fn max_sum(&self) -> f64 {
        self.sums.iter().fold(0.0, |a: f64, b| a.max(*b))
    }
}

fn max_dev(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).norm()))
}

pub fn identity_report(ph: &CgoPhase) -> IdentityReport {
    let p = &ph.params;
    let k2pi = 2.0 * PI * p.k.value();
    let target = |spatial: &[f64]| -> Vec<C64> {
        std::iter::once(C64::new(0.0, k2pi)).chain(spatial.iter().map(|&s| C64::new(0.0, s))).collect()
    };
    let (c1, c2) = cross_phase_vectors(ph);
    let sums = [
        max_dev(&add(&ph.zeta1, &conj(&ph.zeta2)), &target(&p.eta)),
        max_dev(&add(&star(&ph.zeta1), &conj(&star(&ph.zeta2))), &target(&p.eta_star())),
        max_dev(&c1, &target(&p.kappa_signed(1.0))),
        max_dev(&c2, &target(&p.kappa_signed(-1.0))),
    ];
    let null = [
        cdot(&ph.zeta1, &ph.zeta1).norm(),
        cdot(&ph.zeta2, &ph.zeta2).norm(),
        cdot(&star(&ph.zeta1), &star(&ph.zeta1)).norm(),
        cdot(&star(&ph.zeta2), &star(&ph.zeta2)).norm(),
    ];
    let e = C64::from_polar(1.0, p.theta);
    let quasi_periodicity = [(ph.zeta1[0].exp() - e).norm(), (ph.zeta2[0].exp() - e).norm()];
    let eta2 = dot2(p.eta.iter().map(|&a| (a, a)));
    let k = p.k.value();
    let tau = (ph.tau * ph.tau - eta2 / 4.0 - PI * PI * k * k - dot2(ph.l.iter().map(|&a| (a, a)))).abs();
    IdentityReport { null, sums, quasi_periodicity, tau }
}

/// Solution operator `G_ζ` of `−Δ − 2ζ·∇` on the lattice band.
///
/// The spatial axis carrying `Re ζ'` is swapped onto axis 1 so that it
/// carries the half-integer index.
pub struct GreenOperator {
    plan: SpectralPlan,
    axis: usize,
    zeta: Vec<C64>,
    inv_den: Vec<C64>,
}

impl GreenOperator {
    pub fn new(zeta: &[C64], plan: SpectralPlan) -> Result<Self> {
        let n = plan.geometry().n();
        if zeta.len() != n + 1 {
            return Err(Error::Shape(format!("zeta has {} components, expected {}", zeta.len(), n + 1)));
        }
        let re: Vec<f64> = zeta[1..].iter().map(|z| z.re).collect();
        let big = re.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        let axes: Vec<usize> = (0..n).filter(|&j| re[j].abs() > VEC_TOL * big.max(1.0)).collect();
        if big == 0.0 || axes.len() != 1 || zeta[0].re.abs() > VEC_TOL * big {
            return Err(Error::InvalidParams(format!(
                "Re zeta = ({}, {re:?}) is not aligned with a spatial axis",
                zeta[0].re
            )));
        }
        let axis = axes[0] + 1;
        let mut zp = zeta.to_vec();
        zp.swap(1, axis);
        let r = plan.geometry().half_width();
        let coeffs = crate::lattice::LatticeCoefficients::zeros(*plan.grid(), plan.geometry().clone());
        let inv_den = (0..coeffs.coeffs().len())
            .map(|flat| {
                let a = coeffs.alpha_at(flat);
                1.0 / denominator(&a, &zp, r)
            })
            .collect();
        Ok(Self { plan, axis, zeta: zeta.to_vec(), inv_den })
    }

    pub fn for_grid(zeta: &[C64], f: &CellFunction) -> Result<Self> {
        Self::new(zeta, SpectralPlan::new(*f.grid(), f.geometry().clone()))
    }

    pub fn zeta(&self) -> &[C64] {
        &self.zeta
    }

    /// Spatial axis (1-based) aligned with `Re ζ'`.
    pub fn axis(&self) -> usize {
        self.axis
    }

    /// Exact operator norm on the band, `max_α |1/den(α)|`.
    pub fn multiplier_max(&self) -> f64 {
        self.inv_den.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    fn apply_multiplier(&self, phi: &CellFunction, adjoint: bool) -> Result<CellFunction> {
        let swapped = phi.swap_spatial_axes(1, self.axis);
        let mut c = self.plan.analyze(&swapped)?;
        for (v, m) in c.coeffs_mut().iter_mut().zip(&self.inv_den) {
            *v *= if adjoint { m.conj() } else { *m };
        }
        Ok(self.plan.synthesize(&c)?.swap_spatial_axes(1, self.axis))
    }

    pub fn apply(&self, phi: &CellFunction) -> Result<CellFunction> {
        self.apply_multiplier(phi, false)
    }

    pub fn apply_adjoint(&self, phi: &CellFunction) -> Result<CellFunction> {
        self.apply_multiplier(phi, true)
    }
}

/// `π²(4α₀² + |α'|²/R² − 4iπ⁻¹ζ₀α₀ − 2i(πR)⁻¹ζ'·α')`.
pub fn denominator(alpha: &[f64], zeta: &[C64], r: f64) -> C64 {
    let a2: f64 = alpha[1..].iter().map(|a| a * a).sum();
    let za: C64 = zeta[1..].iter().zip(&alpha[1..]).map(|(z, a)| z * a).sum();
    let i = C64::new(0.0, 1.0);
    (4.0 * alpha[0] * alpha[0] + a2 / (r * r)) * PI * PI
        - i * 4.0 * PI * zeta[0] * alpha[0]
        - i * 2.0 * PI / r * za
}

/// `apply_G` for a one-off call.
pub fn apply_g(zeta: &[C64], phi: &CellFunction) -> Result<CellFunction> {
    GreenOperator::for_grid(zeta, phi)?.apply(phi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemainderConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RemainderConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200 }
    }
}

#[derive(Clone, Debug)]
pub struct Remainder {
    pub r: CellFunction,
    pub iterations: usize,
    /// `‖G_ζ‖ ‖q‖_∞`, an upper bound for the contraction ratio.
    pub contraction_bound: f64,
    /// Last observed ratio of successive update norms.
    pub contraction_observed: f64,
    /// `C = τ ‖r‖ / (R ‖q‖_∞)`.
    pub constant: f64,
}

/// Fixed point of `r = −G_ζ(q(1 + r))` starting from `r = 0`.
pub fn solve_remainder(
    ph: &CgoPhase,
    which: Branch,
    q_ext: &CellFunction,
    cfg: RemainderConfig,
) -> Result<Remainder> {
    let g = GreenOperator::for_grid(ph.zeta(which), q_ext)?;
    solve_remainder_with(&g, ph.tau, q_ext, cfg)
}

pub fn solve_remainder_with(
    g: &GreenOperator,
    tau: f64,
    q_ext: &CellFunction,
    cfg: RemainderConfig,
) -> Result<Remainder> {
    if q_ext.max_imag() > 1e-12 {
        return Err(Error::InvalidParams("extended potential must be real".into()));
    }
    let asym = reflect(q_ext).sub(q_ext)?.max_abs();
    if asym > 1e-12 {
        return Err(Error::InvalidParams(format!("extended potential is not even in x_n ({asym:.3e})")));
    }
    let r_half = q_ext.geometry().half_width();
    let qmax = q_ext.max_abs();
    if tau <= 2.0 * PI * r_half * qmax {
        return Err(Error::NonConvergent {
            reason: format!("tau = {tau:.4} <= 2 pi R ||q||_inf = {:.4}", 2.0 * PI * r_half * qmax),
            last_estimate: g.multiplier_max() * qmax,
        });
    }
    let one = C64::new(1.0, 0.0);
    let mut r = CellFunction::zeros(*q_ext.grid(), q_ext.geometry().clone());
    let mut prev_step = f64::NAN;
    let mut ratio = 0.0;
    for it in 1..=cfg.max_iter {
        let rhs = q_ext.zip_with(&r, |q, rv| q * (one + rv))?;
        let next = g.apply(&rhs)?.scale(-one);
        let step = next.sub(&r)?.l2_norm();
        if prev_step.is_finite() && prev_step > 0.0 {
            ratio = step / prev_step;
        }
        prev_step = step;
        r = next;
        if step < cfg.tol {
            let constant = if qmax > 0.0 { tau * r.l2_norm() / (r_half * qmax) } else { 0.0 };
            return Ok(Remainder {
                r,
                iterations: it,
                contraction_bound: g.multiplier_max() * qmax,
                contraction_observed: ratio,
                constant,
            });
        }
    }
    Err(Error::NonConvergent {
        reason: format!("remainder iteration hit the cap of {}", cfg.max_iter),
        last_estimate: ratio,
    })
}

/// `e^{ζ·x}` at a point.
pub fn plane_wave(zeta: &[C64], x: &[f64]) -> C64 {
    zeta.iter().zip(x).map(|(z, xi)| z * xi).sum::<C64>().exp()
}

/// `u = e^{ζ·x}(1 + r)` on the grid.
pub fn assemble_u(ph: &CgoPhase, which: Branch, r: &CellFunction) -> CellFunction {
    let zeta = ph.zeta(which);
    let mut out = r.clone();
    let mut x = vec![0.0; r.n() + 1];
    for (flat, v) in out.values_mut().iter_mut().enumerate() {
        r.point_into(flat, &mut x);
        *v = plane_wave(zeta, &x) * (C64::new(1.0, 0.0) + *v);
    }
    out
}

/// `v = u − u*`, which vanishes on `{xₙ = 0}`.
pub fn assemble_v(ph: &CgoPhase, which: Branch, r: &CellFunction) -> CellFunction {
    let zeta = ph.zeta(which);
    let zs = star(zeta);
    let rs = reflect(r);
    let one = C64::new(1.0, 0.0);
    let mut out = r.clone();
    let mut x = vec![0.0; r.n() + 1];
    for (flat, v) in out.values_mut().iter_mut().enumerate() {
        r.point_into(flat, &mut x);
        // e^{ζ·x*} = e^{ζ*·x}
        *v = plane_wave(zeta, &x) * (one + r.values()[flat]) - plane_wave(&zs, &x) * (one + rs.values()[flat]);
    }
    out
}

/// `max |v(1, x') − e^{iθ} v(0, x')| / max |v|`, using periodicity of `r`.
pub fn quasi_periodicity_defect(ph: &CgoPhase, which: Branch, r: &CellFunction) -> f64 {
    let zeta = ph.zeta(which);
    let zs = star(zeta);
    let rs = reflect(r);
    let one = C64::new(1.0, 0.0);
    let e = C64::from_polar(1.0, ph.params.theta);
    let layer = r.len() / r.grid().n0();
    let mut x = vec![0.0; r.n() + 1];
    let mut worst: f64 = 0.0;
    let mut big: f64 = 0.0;
    for flat in 0..layer {
        r.point_into(flat, &mut x);
        let v0 = plane_wave(zeta, &x) * (one + r.values()[flat]) - plane_wave(&zs, &x) * (one + rs.values()[flat]);
        x[0] = 1.0;
        let v1 = plane_wave(zeta, &x) * (one + r.values()[flat]) - plane_wave(&zs, &x) * (one + rs.values()[flat]);
        worst = worst.max((v1 - e * v0).norm());
        big = big.max(v0.norm());
    }
    if big == 0.0 {
        0.0
    } else {
        worst / big
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{CellGeometry, GridSpec};
    use crate::lattice::extend_potential;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example() -> CgoParams {
        CgoParams { theta: 0.0, k: AxialFrequency::half(0), r: 1.0, xi: vec![1.0, 0.0, 0.0], eta: vec![0.0, 2.0, 0.0] }
    }

    #[test]
    fn sigma_table() {
        assert_eq!(AxialFrequency::half(0).sigma(), 1.75);
        assert_eq!(AxialFrequency::half(1).sigma(), 1.25);
        assert_eq!(AxialFrequency::half(2).sigma(), 1.75);
        assert_eq!(AxialFrequency::half(-1).sigma(), 1.25);
        assert_eq!(AxialFrequency::half(-2).sigma(), 1.75);
        assert_eq!(AxialFrequency::integer(0).sigma(), 1.0);
        assert_eq!(AxialFrequency::integer(3).sigma(), 1.5);
        assert_eq!(AxialFrequency::integer(-1).sigma(), 1.5);
    }

    #[test]
    fn worked_example() {
        let ph = build_phase(&example()).unwrap();
        assert_eq!(ph.sigma_k, 1.75);
        let c = 11.0 * PI / 2.0;
        let want = [c, 0.0, -c * PI / 2.0, 0.0];
        for (a, b) in ph.l.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        let tau = ((1.0 + PI * PI / 4.0) * (1.0 + c * c)).sqrt();
        assert!((ph.tau - tau).abs() < 1e-12);
        assert!((ph.tau - 32.23).abs() < 5e-3);
        assert!(cdot(&ph.zeta1, &ph.zeta1).norm() < 1e-9);
        let (a, b) = cross_phase_vectors(&ph);
        let want = [C64::new(0.0, PI), C64::new(0.0, 0.0), C64::new(0.0, 2.0), C64::new(0.0, 0.0)];
        assert!(max_dev(&a, &want) < 1e-12);
        assert!(max_dev(&b, &want) < 1e-12);
    }

    #[test]
    fn sum_identity_is_exact() {
        let mut p = example();
        p.eta = vec![0.0, 1.3, -0.7];
        p.theta = 2.1;
        p.r = 3.7;
        let ph = build_phase(&p).unwrap();
        let s = add(&ph.zeta1, &conj(&ph.zeta2));
        assert_eq!(s[0].re, 0.0);
        for (j, e) in p.eta.iter().enumerate() {
            assert_eq!(s[j + 1].re, 0.0);
            assert!((s[j + 1].im - e).abs() < 1e-13);
        }
        assert!((s[0].im - PI).abs() < 1e-14);
    }

    #[test]
    fn rejects_invalid() {
        let mut p = example();
        p.xi = vec![0.0, 0.0, 1.0];
        p.eta = vec![1.0, 0.0, 0.0];
        assert!(build_phase(&p).is_err());
        let mut p = example();
        p.eta = vec![1e-3, 2.0, 0.0];
        assert!(build_phase(&p).is_err());
        let mut p = example();
        p.eta = vec![0.0; 3];
        assert!(build_phase(&p).is_err());
        let mut p = example();
        p.xi = vec![1.0 + 1e-9, 0.0, 0.0];
        assert!(build_phase(&p).is_err());
        assert!(AxialFrequency::try_from(0.3).is_err());
    }

    #[test]
    fn half_integer_branch_two_is_shifted_by_pi() {
        let ph = build_phase(&example()).unwrap();
        let rep = identity_report(&ph);
        assert!(rep.quasi_periodicity[0] < 1e-10);
        let e = -C64::from_polar(1.0, ph.params.theta);
        assert!((ph.zeta2[0].exp() - e).norm() < 1e-10);
        let mut p = example();
        p.k = AxialFrequency::integer(1);
        let rep = identity_report(&build_phase(&p).unwrap());
        assert!(rep.quasi_periodicity.iter().all(|&d| d < 1e-10));
    }

    #[test]
    fn identities_random_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let n = rng.random_range(2..=3);
            let mut xi = vec![0.0; n];
            let axis = rng.random_range(0..n - 1);
            xi[axis] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let mut eta: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            eta[axis] = 0.0;
            let len = eta.iter().map(|e| e * e).sum::<f64>().sqrt().max(1e-3);
            let target = rng.random_range(1.0..4.0);
            eta.iter_mut().for_each(|e| *e *= target / len);
            let p = CgoParams {
                theta: rng.random_range(0.0..2.0 * PI),
                k: AxialFrequency::from_twice(rng.random_range(-5..=5)),
                r: rng.random_range(0.01..5.0),
                xi,
                eta,
            };
            let ph = build_phase(&p).unwrap();
            let rep = identity_report(&ph);
            assert!(rep.max_null() < 1e-9, "{rep:?}");
            assert!(rep.max_sum() < 1e-12, "{rep:?}");
            let (a, b) = cross_phase_vectors(&ph);
            assert!(a.iter().chain(&b).all(|z| z.re.abs() < 1e-12));
        }
    }

    fn cell(n: usize, n0: usize, nn: usize) -> (GridSpec, CellGeometry) {
        let w = vec![1.0; n - 1];
        (GridSpec::new(n0, nn).unwrap(), CellGeometry::centered(1.0, &w, 0.5).unwrap())
    }

    #[test]
    fn green_single_mode() {
        let (grid, geom) = cell(2, 8, 8);
        let ph = build_phase(&CgoParams {
            theta: 0.4,
            k: AxialFrequency::half(1),
            r: 0.5,
            xi: vec![1.0, 0.0],
            eta: vec![0.0, 1.5],
        })
        .unwrap();
        let alpha = crate::lattice::LatticeIndex::new(2, -1.5, vec![1]).unwrap();
        let phi = CellFunction::from_fn(grid, geom.clone(), |x| crate::lattice::basis_value(&geom, &alpha, x));
        let r = apply_g(&ph.zeta1, &phi).unwrap();
        let den = denominator(&[2.0, -1.5, 1.0], &ph.zeta1, 1.0);
        let want = phi.scale(1.0 / den);
        assert!(r.sub(&want).unwrap().max_abs() < 1e-12);
        let z = CellFunction::zeros(grid, geom);
        assert_eq!(apply_g(&ph.zeta1, &z).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn green_requires_axis_alignment() {
        let (grid, geom) = cell(3, 4, 4);
        let f = CellFunction::zeros(grid, geom);
        let bad = vec![C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(-1.0, 0.0), C64::new(0.0, 0.0)];
        assert!(apply_g(&bad, &f).is_err());
        let good = vec![C64::new(0.0, 1.0), C64::new(0.0, 0.0), C64::new(3.0, 0.5), C64::new(0.0, 0.0)];
        let g = GreenOperator::for_grid(&good, &f).unwrap();
        assert_eq!(g.axis(), 2);
    }

    #[test]
    fn multiplier_bound() {
        let (grid, geom) = cell(3, 8, 8);
        let ph = build_phase(&example()).unwrap();
        let f = CellFunction::zeros(grid, geom);
        for z in [&ph.zeta1, &ph.zeta2] {
            let g = GreenOperator::for_grid(z, &f).unwrap();
            assert!(g.multiplier_max() <= 1.0 / (PI * ph.tau) + 1e-15);
            assert!(g.multiplier_max() <= PI / ph.tau);
        }
    }

    fn smooth_q(grid: GridSpec, geom: CellGeometry) -> CellFunction {
        let q = CellFunction::from_real_fn(grid, geom, |x| {
            let s = (x[1] / 0.5).powi(2) + ((x[2] + 0.25) / 0.25).powi(2);
            if s < 1.0 {
                (1.0 + (2.0 * PI * x[0]).cos() * 0.5) * (-1.0 / (1.0 - s)).exp() * std::f64::consts::E
            } else {
                0.0
            }
        });
        extend_potential(&q).unwrap()
    }

    #[test]
    fn remainder_zero_potential() {
        let (grid, geom) = cell(2, 8, 16);
        let ph = build_phase(&CgoParams { theta: 1.0, k: AxialFrequency::integer(1), r: 2.0, xi: vec![1.0, 0.0], eta: vec![0.0, 3.0] }).unwrap();
        let z = CellFunction::zeros(grid, geom);
        let rem = solve_remainder(&ph, Branch::One, &z, RemainderConfig::default()).unwrap();
        assert_eq!(rem.iterations, 1);
        assert_eq!(rem.r.max_abs(), 0.0);
    }

    #[test]
    fn remainder_fixed_point_and_quasi_periodicity() {
        let (grid, geom) = cell(2, 8, 16);
        let q = smooth_q(grid, geom);
        let ph = build_phase(&CgoParams { theta: 1.0, k: AxialFrequency::integer(1), r: 2.0, xi: vec![1.0, 0.0], eta: vec![0.0, 3.0] }).unwrap();
        for which in [Branch::One, Branch::Two] {
            let cfg = RemainderConfig::default();
            let rem = solve_remainder(&ph, which, &q, cfg).unwrap();
            let g = GreenOperator::for_grid(ph.zeta(which), &q).unwrap();
            let one = C64::new(1.0, 0.0);
            let lhs = rem.r.add(&g.apply(&q.mul(&rem.r).unwrap()).unwrap()).unwrap();
            let rhs = g.apply(&q).unwrap().scale(-one);
            assert!(lhs.sub(&rhs).unwrap().l2_norm() < cfg.tol);
            assert!(quasi_periodicity_defect(&ph, which, &rem.r) < 1e-9);
            let v = assemble_v(&ph, which, &rem.r);
            let layer_zero = grid.zero_index();
            let big = v.max_abs();
            for (flat, val) in v.values().iter().enumerate() {
                if flat % 16 == layer_zero {
                    assert!(val.norm() < 1e-10 * big);
                }
            }
        }
    }

    #[test]
    fn too_small_tau_is_rejected() {
        let (grid, geom) = cell(2, 8, 16);
        let q = smooth_q(grid, geom).scale(C64::new(100.0, 0.0));
        let ph = build_phase(&CgoParams { theta: 0.0, k: AxialFrequency::integer(0), r: 0.1, xi: vec![1.0, 0.0], eta: vec![0.0, 1.0] }).unwrap();
        assert!(matches!(solve_remainder(&ph, Branch::One, &q, RemainderConfig::default()), Err(Error::NonConvergent { .. })));
    }

    #[test]
    fn v_for_zero_remainder_matches_closed_form() {
        let (grid, geom) = cell(2, 8, 8);
        let ph = build_phase(&CgoParams { theta: 0.3, k: AxialFrequency::half(0), r: 0.5, xi: vec![-1.0, 0.0], eta: vec![0.0, 2.0] }).unwrap();
        let r = CellFunction::zeros(grid, geom);
        let v = assemble_v(&ph, Branch::One, &r);
        let z = &ph.zeta1;
        for flat in 0..v.len() {
            let x = v.point(flat);
            let e1 = (z[0] * x[0] + z[1] * x[1] + z[2] * x[2]).exp();
            let e2 = (z[0] * x[0] + z[1] * x[1] - z[2] * x[2]).exp();
            assert!((v.values()[flat] - (e1 - e2)).norm() < 1e-12 * e1.norm().max(1.0));
        }
    }
}
