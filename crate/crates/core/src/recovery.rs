//! Fourier data of `q₁ − q₂` from boundary pairings, decay and a-priori
//! bounds, the weighted `H⁻¹` norm and the `ε / r / ρ` schedule.

use std::f64::consts::PI;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::cgo::{cross_phase_vectors, plane_wave, star, CgoPhase};
use crate::error::{Error, Result};
use crate::fiber::{FiberMesh, FiberSolver, Potential, SolverConfig};
use crate::lattice::{fft_axis, reflect, CellFunction};
use crate::C64;

/// `Σ_Q e^{2πikx₀ + iη·x'} f(x) h₀hⁿ` by direct quadrature (any real `η`).
pub fn fourier_coefficient(f: &CellFunction, k: f64, eta: &[f64]) -> C64 {
    let n = f.n();
    let w = f.cell_weight();
    let mut x = vec![0.0; n + 1];
    let mut acc = C64::new(0.0, 0.0);
    for (flat, v) in f.values().iter().enumerate() {
        if *v == C64::new(0.0, 0.0) {
            continue;
        }
        f.point_into(flat, &mut x);
        let phase = 2.0 * PI * k * x[0] + eta.iter().zip(&x[1..]).map(|(e, xi)| e * xi).sum::<f64>();
        acc += v * C64::from_polar(1.0, phase);
    }
    acc * w
}

/// `q̂_k(η)` of the even extension, halved: `½ Σ_Q e^{2πikx₀ + iη·x'} q_ext h₀hⁿ`.
pub fn q_hat(q_ext: &CellFunction, k: f64, eta: &[f64]) -> C64 {
    fourier_coefficient(q_ext, k, eta) * 0.5
}

/// Boundary-pairing decomposition `I₁ − I₂ + I₃ − I₄`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingTerms {
    pub i1: C64,
    pub i2: C64,
    pub i3: C64,
    pub i4: C64,
}

impl PairingTerms {
    pub fn total(&self) -> C64 {
        self.i1 - self.i2 + self.i3 - self.i4
    }
}

/// The four integrals over `ω̌` by closed-box trapezoid quadrature.
///
/// `q` is the potential difference (values outside `ω̌` are ignored);
/// `r1`, `r2` are the remainders of `ζ₁`, `ζ₂`.
pub fn pairing_terms(
    mesh: &FiberMesh,
    q: &CellFunction,
    ph: &CgoPhase,
    r1: &CellFunction,
    r2: &CellFunction,
) -> Result<PairingTerms> {
    for f in [q, r1, r2] {
        if f.grid() != mesh.grid() || f.geometry() != mesh.geometry() {
            return Err(Error::Shape("pairing inputs must share the fiber grid".into()));
        }
    }
    let a = add_conj(&ph.zeta1, &ph.zeta2);
    let b = add_conj(&star(&ph.zeta1), &star(&ph.zeta2));
    let (c, d) = cross_phase_vectors(ph);
    let r1s = reflect(r1);
    let r2s = reflect(r2);
    let mut t = PairingTerms {
        i1: C64::new(0.0, 0.0),
        i2: C64::new(0.0, 0.0),
        i3: C64::new(0.0, 0.0),
        i4: C64::new(0.0, 0.0),
    };
    let mix = |x: C64, y: C64| x + y.conj() + x * y.conj();
    for layer in 0..mesh.n0() {
        for local in 0..mesh.closed_len() {
            let flat = mesh.lattice_index(layer, local);
            let qv = q.values()[flat];
            if qv == C64::new(0.0, 0.0) {
                continue;
            }
            let x = mesh.node_point(layer, local);
            let w = qv * mesh.volume_weight(local);
            let (ea, eb, ec, ed) = (plane_wave(&a, &x), plane_wave(&b, &x), plane_wave(&c, &x), plane_wave(&d, &x));
            let (p1, p2, p1s, p2s) = (r1.values()[flat], r2.values()[flat], r1s.values()[flat], r2s.values()[flat]);
            t.i1 += w * (ea + eb);
            t.i2 += w * (ec + ed);
            t.i3 += w * (ea * mix(p1, p2) + eb * mix(p1s, p2s));
            t.i4 += w * (ec * mix(p1s, p2) + ed * mix(p1, p2s));
        }
    }
    Ok(t)
}

fn add_conj(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x + y.conj()).collect()
}

/// `⟨(Λ_{q₁,θ} − Λ_{q₂,θ}) v₁, v₂⟩` on `γ̌` with factored solvers.
pub fn pairing_lhs_with(s1: &FiberSolver, s2: &FiberSolver, v1: &CellFunction, v2: &CellFunction) -> Result<C64> {
    let mesh = s1.mesh();
    if (s1.theta() - s2.theta()).abs() > 1e-14 {
        return Err(Error::Shape("solvers built for different theta".into()));
    }
    let f = mesh.trace_of(v1)?.check_gamma1(mesh, 1e-8)?;
    let g = mesh.trace_of(v2)?.check_gamma1(mesh, 1e-8)?;
    let d = s1.dn_apply(&f)?.sub(&s2.dn_apply(&f)?);
    Ok(mesh.surface_inner(&d, &g))
}

pub fn pairing_lhs(q1: &Potential, q2: &Potential, theta: f64, v1: &CellFunction, v2: &CellFunction) -> Result<C64> {
    let mesh = std::sync::Arc::new(FiberMesh::new(*q1.values().grid(), q1.values().geometry().clone())?);
    let cfg = SolverConfig::default();
    let s1 = FiberSolver::new(mesh.clone(), q1, theta, cfg)?;
    let s2 = FiberSolver::new(mesh, q2, theta, cfg)?;
    pairing_lhs_with(&s1, &s2, v1, v2)
}

/// `C (exp(−ε²(k² + |ρ|²)/4π) + ε^α)`.
pub fn decay_bound(c: f64, alpha: f64, epsilon: f64, k: f64, rho: &[f64]) -> f64 {
    let r2: f64 = rho.iter().map(|x| x * x).sum();
    c * ((-epsilon * epsilon * (k * k + r2) / (4.0 * PI)).exp() + epsilon.powf(alpha))
}

/// Constant in the decay lemma from the Gaussian mollifier argument.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayCalibration {
    /// `‖q̃‖_{L¹}`.
    pub l1: f64,
    /// `sup_y ‖q̃(·+y) − q̃‖_{L¹} / |y|^α` over the sampled shifts.
    pub holder_constant: f64,
    pub alpha: f64,
    /// `max(‖q̃‖₁, C_h ((1+n)/2π)^{α/2})`.
    pub c: f64,
}

/// Calibrates `C` for the zero extension `q̃` of `q` (supported in `ω̌`).
pub fn calibrate_decay(q: &CellFunction, alpha: f64, shifts: &[Vec<f64>]) -> DecayCalibration {
    let n = q.n() as f64;
    let l1 = q.values().iter().map(|v| v.norm()).sum::<f64>() * q.cell_weight();
    let holder_constant = shifts
        .iter()
        .map(|y| {
            let len = y.iter().map(|a| a * a).sum::<f64>().sqrt();
            if len == 0.0 {
                0.0
            } else {
                shift_modulus(q, y) / len.powf(alpha)
            }
        })
        .fold(0.0, f64::max);
    let c = l1.max(holder_constant * ((1.0 + n) / (2.0 * PI)).powf(alpha / 2.0));
    DecayCalibration { l1, holder_constant, alpha, c }
}

/// Zero extension of the cell samples to `ℝ^{1+n}` (no axial periodicity).
struct ZeroExtension<'a> {
    f: &'a CellFunction,
    h0: f64,
    h: f64,
    r: f64,
}

impl<'a> ZeroExtension<'a> {
    fn new(f: &'a CellFunction) -> Self {
        Self { f, h0: f.grid().h0(), h: f.grid().h(f.geometry()), r: f.geometry().half_width() }
    }

    fn node(&self, idx: &[i64]) -> f64 {
        let n0 = self.f.grid().n0() as i64;
        let nn = self.f.grid().n() as i64;
        if idx[0] < 0 || idx[0] >= n0 || idx[1..].iter().any(|&i| i < 0 || i >= nn) {
            return 0.0;
        }
        let flat = idx[1..].iter().fold(idx[0] as usize, |acc, &i| acc * nn as usize + i as usize);
        self.f.values()[flat].re
    }

    /// Multilinear interpolation of the node values.
    fn eval(&self, x: &[f64]) -> f64 {
        let d = x.len();
        let mut base = vec![0i64; d];
        let mut frac = vec![0.0; d];
        for a in 0..d {
            let t = if a == 0 { x[0] / self.h0 } else { (x[a] + self.r) / self.h };
            let fl = t.floor();
            base[a] = fl as i64;
            frac[a] = t - fl;
        }
        let mut acc = 0.0;
        let mut idx = vec![0i64; d];
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            for a in 0..d {
                let bit = (corner >> a) & 1;
                idx[a] = base[a] + bit as i64;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            if w != 0.0 {
                acc += w * self.node(&idx);
            }
        }
        acc
    }
}

/// `‖q̃(· + y) − q̃‖_{L¹(ℝ^{1+n})}` on the (unbounded) grid lattice.
pub fn shift_modulus(q: &CellFunction, y: &[f64]) -> f64 {
    let ext = ZeroExtension::new(q);
    let d = q.n() + 1;
    // bounding box of the support, widened by the shift
    let mut lo = vec![i64::MAX; d];
    let mut hi = vec![i64::MIN; d];
    let shape = q.shape();
    let mut idx = vec![0usize; d];
    for (flat, v) in q.values().iter().enumerate() {
        if v.re != 0.0 {
            crate::grid::unravel(flat, &shape, &mut idx);
            for a in 0..d {
                lo[a] = lo[a].min(idx[a] as i64);
                hi[a] = hi[a].max(idx[a] as i64);
            }
        }
    }
    if lo[0] == i64::MAX {
        return 0.0;
    }
    let steps: Vec<f64> = (0..d).map(|a| if a == 0 { ext.h0 } else { ext.h }).collect();
    for a in 0..d {
        let s = (y[a].abs() / steps[a]).ceil() as i64 + 1;
        lo[a] -= s;
        hi[a] += s;
    }
    let dims: Vec<usize> = (0..d).map(|a| (hi[a] - lo[a] + 1) as usize).collect();
    let total: usize = dims.iter().product();
    let mut node = vec![0i64; d];
    let mut x = vec![0.0; d];
    let mut acc = 0.0;
    let mut local = vec![0usize; d];
    for flat in 0..total {
        crate::grid::unravel(flat, &dims, &mut local);
        for a in 0..d {
            node[a] = lo[a] + local[a] as i64;
            x[a] = if a == 0 { node[a] as f64 * ext.h0 } else { -ext.r + node[a] as f64 * ext.h } + y[a];
        }
        acc += (ext.eval(&x) - ext.node(&node)).abs();
    }
    acc * q.cell_weight()
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Fits `(C, α)` in `‖q̃(·+y) − q̃‖₁ ≈ C|y|^α` along direction `dir`.
pub fn fit_holder(q: &CellFunction, dir: &[f64], lengths: &[f64]) -> (f64, f64) {
    let norm = dir.iter().map(|a| a * a).sum::<f64>().sqrt();
    let (lx, ly): (Vec<f64>, Vec<f64>) = lengths
        .iter()
        .map(|&l| {
            let y: Vec<f64> = dir.iter().map(|a| a / norm * l).collect();
            (l.ln(), shift_modulus(q, &y).ln())
        })
        .unzip();
    let (slope, icpt) = fit_line(&lx, &ly);
    (icpt.exp(), slope)
}

/// Stability schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub alpha: f64,
    pub alpha_tilde: f64,
    pub n: usize,
    pub epsilon: f64,
    pub r: f64,
    pub rho: f64,
    /// `ln δ` (δ itself may underflow).
    pub log_delta: f64,
    pub delta: f64,
}

impl ScheduleParams {
    /// `(4 + n)/α̃`.
    pub fn power(&self) -> f64 {
        (4.0 + self.n as f64) / self.alpha_tilde
    }

    /// Asymptotic exponent `γ/2 = α̃/(4+n)` of `ρ ~ |ln δ|^{γ/2}`.
    pub fn asymptotic_exponent(&self) -> f64 {
        1.0 / self.power()
    }

    /// `C ρ^{-2}` with `C = 1`.
    pub fn h_minus1_bound(&self) -> f64 {
        self.rho.powi(-2)
    }
}

pub fn run_schedule(delta: f64, alpha: f64, n: usize) -> Result<ScheduleParams> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Schedule(format!("delta = {delta} must lie in (0, 1)")));
    }
    run_schedule_log(delta.ln(), alpha, n)
}

/// Solves `ρ^{1+n} exp(400 ρ^{(4+n)/α̃}) δ = ρ^{-2}` given `ln δ`.
pub fn run_schedule_log(log_delta: f64, alpha: f64, n: usize) -> Result<ScheduleParams> {
    if !(log_delta < 0.0) {
        return Err(Error::Schedule(format!("ln delta = {log_delta} must be negative")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Schedule(format!("alpha = {alpha} outside (0, 1]")));
    }
    let alpha_tilde = 1.0 - 1.0 / (2.0 * alpha);
    if alpha_tilde <= 0.0 {
        return Err(Error::Schedule(format!("alpha_tilde = {alpha_tilde} <= 0 (alpha must exceed 1/2)")));
    }
    let nf = n as f64;
    let p = (4.0 + nf) / alpha_tilde;
    let l = -log_delta;
    // s = ln ρ; (3 + n)s + 400 e^{ps} − L is increasing in s
    let g = |s: f64| (3.0 + nf) * s + 400.0 * (p * s).exp() - l;
    let mut lo = ((l - 400.0) / (3.0 + nf)).min(0.0) - 1.0;
    let mut hi = ((l / 400.0).ln() / p).max(0.0) + 1.0;
    if !(g(lo) < 0.0 && g(hi) > 0.0) {
        return Err(Error::Schedule("failed to bracket the balance equation".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    let s = 0.5 * (lo + hi);
    let rho = s.exp();
    let r = (p * s).exp();
    let epsilon = r.powf(-1.0 / (2.0 * alpha));
    Ok(ScheduleParams { alpha, alpha_tilde, n, epsilon, r, rho, log_delta, delta: log_delta.exp() })
}

/// `ln` of the right-hand side of the a-priori estimate with `C = 1`:
/// `e^{2τ}δ + exp(−(2ε²r²k²/|η|⁴)|η − η*|²) + ε^α + 1/r`.
pub fn apriori_estimate_log(sched: &ScheduleParams, ph: &CgoPhase) -> f64 {
    let p = &ph.params;
    let k = p.k.value();
    let eta2: f64 = p.eta.iter().map(|e| e * e).sum();
    let diff2: f64 = p.eta.iter().zip(p.eta_star()).map(|(a, b)| (a - b) * (a - b)).sum();
    let e = sched.epsilon;
    let terms = [
        2.0 * ph.tau + sched.log_delta,
        -(2.0 * e * e * sched.r * sched.r * k * k / (eta2 * eta2)) * diff2,
        sched.alpha * e.ln(),
        -sched.r.ln(),
    ];
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

pub fn apriori_estimate(sched: &ScheduleParams, ph: &CgoPhase) -> f64 {
    apriori_estimate_log(sched, ph).exp()
}

/// `q̂_k(η)` on a uniform `η` grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierSlice {
    pub k: f64,
    /// Grid spacing in `η` (all axes).
    pub eta_step: f64,
    /// Points per axis; `η_m = eta_step · (m − len/2)`.
    pub len: usize,
    pub n: usize,
    pub pad: usize,
    pub values: Vec<C64>,
}

impl FourierSlice {
    pub fn eta(&self, flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        let mut rem = flat;
        for j in (0..self.n).rev() {
            out[j] = self.eta_step * ((rem % self.len) as f64 - (self.len / 2) as f64);
            rem /= self.len;
        }
        out
    }

    /// Slot of `η` exactly on the grid.
    pub fn position(&self, eta: &[f64]) -> Option<usize> {
        let mut flat = 0;
        for e in eta {
            let m = e / self.eta_step + (self.len / 2) as f64;
            let mr = m.round();
            if (m - mr).abs() > 1e-9 || mr < 0.0 || mr >= self.len as f64 {
                return None;
            }
            flat = flat * self.len + mr as usize;
        }
        Some(flat)
    }
}

/// Slices `q̂_k(η) = ∫ e^{iη·x'} ∫₀¹ e^{2πikx₀} f dx₀ dx'` for integer `k`, zero-padded by `pad`.
pub fn fourier_slices(f: &CellFunction, ks: &[i64], pad: usize) -> Result<Vec<FourierSlice>> {
    if pad == 0 {
        return Err(Error::InvalidParams("padding factor must be >= 1".into()));
    }
    let n = f.n();
    let n0 = f.grid().n0();
    let nn = f.grid().n();
    let big = nn * pad;
    let h0 = f.grid().h0();
    let h = f.grid().h(f.geometry());
    let r = f.geometry().half_width();
    let spatial = nn.pow(n as u32);
    let mut planner = FftPlanner::new();
    let inv = planner.plan_fft_inverse(big);
    let eta_step = 2.0 * PI / (big as f64 * h);
    let shape = vec![big; n];
    let mut scratch = Vec::new();
    ks.iter()
        .map(|&k| {
            let mut data = vec![C64::new(0.0, 0.0); big.pow(n as u32)];
            for s in 0..spatial {
                let mut acc = C64::new(0.0, 0.0);
                for i0 in 0..n0 {
                    acc += f.values()[i0 * spatial + s] * C64::from_polar(1.0, 2.0 * PI * k as f64 * i0 as f64 * h0);
                }
                // place spatial index s into the padded array
                let mut rem = s;
                let mut flat = 0;
                let mut mul = 1;
                for _ in 0..n {
                    flat += (rem % nn) * mul;
                    rem /= nn;
                    mul *= big;
                }
                data[flat] = acc * h0;
            }
            for axis in 0..n {
                fft_axis(&mut data, &shape, axis, big, inv.as_ref(), &mut scratch);
            }
            // reorder to centred η and apply e^{−iηR} per axis
            let mut values = vec![C64::new(0.0, 0.0); data.len()];
            let mut idx = vec![0; n];
            for (flat, v) in values.iter_mut().enumerate() {
                crate::grid::unravel(flat, &shape, &mut idx);
                let mut src = 0;
                let mut phase = 0.0;
                for &m in idx.iter() {
                    let mc = m as i64 - (big / 2) as i64;
                    src = src * big + mc.rem_euclid(big as i64) as usize;
                    phase -= eta_step * mc as f64 * r;
                }
                *v = data[src] * C64::from_polar(h.powi(n as i32), phase);
            }
            Ok(FourierSlice { k: k as f64, eta_step, len: big, n, pad, values })
        })
        .collect()
}

/// `(Σ_k ∫ (1 + k² + |η|²)^{-1} |q̂_k(η)|² dη / (2π)ⁿ)^{1/2}` by the slice quadrature.
pub fn h_minus1_norm(slices: &[FourierSlice]) -> f64 {
    slices
        .iter()
        .map(|s| {
            let w = (s.eta_step / (2.0 * PI)).powi(s.n as i32);
            s.values
                .iter()
                .enumerate()
                .map(|(flat, v)| {
                    let e2: f64 = s.eta(flat).iter().map(|e| e * e).sum();
                    w * v.norm_sqr() / (1.0 + s.k * s.k + e2)
                })
                .sum::<f64>()
        })
        .sum::<f64>()
        .sqrt()
}

/// Result of the `L∞` interpolation step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interpolation {
    pub value: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub formula: String,
}

/// `‖q‖_{H^{−1}}^τ ‖q‖_{H^s}^{1−τ}` with `τ = (s − (1+n)/2 − ε)/(s + 1)`, `ε = (s − (1+n)/2)/2`.
pub fn interpolate_linf(h_minus1: f64, h_s: f64, s: f64, n: usize) -> Result<Interpolation> {
    let crit = (1.0 + n as f64) / 2.0;
    if s <= crit {
        return Err(Error::Domain(format!("s = {s} must exceed (1+n)/2 = {crit}")));
    }
    if h_minus1 < 0.0 || h_s < 0.0 {
        return Err(Error::Domain("norms must be nonnegative".into()));
    }
    let epsilon = (s - crit) / 2.0;
    let tau = (s - crit - epsilon) / (s + 1.0);
    let value = if h_minus1 == 0.0 { 0.0 } else { h_minus1.powf(tau) * h_s.powf(1.0 - tau) };
    Ok(Interpolation {
        value,
        tau,
        epsilon,
        formula: "tau = (s - (1+n)/2 - eps)/(s+1), eps = (s - (1+n)/2)/2; target H^{(1+n)/2+eps}".into(),
    })
}

/// Periodic Sobolev norm on the cell, `(Σ (1 + |ω|²)^s |f̂(ω)|²)^{1/2}` with
/// `ω = (2πm₀, πm'/R)` over the standard DFT band.
pub fn sobolev_norm(f: &CellFunction, s: f64) -> f64 {
    let shape = f.shape();
    let mut data = f.values().to_vec();
    let mut planner = FftPlanner::new();
    let mut scratch = Vec::new();
    for (axis, &len) in shape.iter().enumerate() {
        let plan = planner.plan_fft_forward(len);
        fft_axis(&mut data, &shape, axis, len, plan.as_ref(), &mut scratch);
    }
    let total = data.len() as f64;
    let vol = 1.0 * (2.0 * f.geometry().half_width()).powi(f.n() as i32);
    let r = f.geometry().half_width();
    let mut idx = vec![0; shape.len()];
    data.iter()
        .enumerate()
        .map(|(flat, v)| {
            crate::grid::unravel(flat, &shape, &mut idx);
            let mut w2 = 0.0;
            for (a, &m) in idx.iter().enumerate() {
                let mc = if m < shape[a] / 2 { m as f64 } else { m as f64 - shape[a] as f64 };
                let om = if a == 0 { 2.0 * PI * mc } else { PI * mc / r };
                w2 += om * om;
            }
            (1.0 + w2).powf(s) * v.norm_sqr() / (total * total) * vol
        })
        .sum::<f64>()
        .sqrt()
}

/// One row of the stability experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub scale: f64,
    pub delta: f64,
    pub rho: f64,
    pub r: f64,
    pub epsilon: f64,
    pub h_minus1_bound: f64,
    pub h_minus1_actual: f64,
    pub linf_actual: f64,
    pub theta_star: f64,
    pub n: usize,
    pub n0: usize,
    pub n_grid: usize,
    pub half_width: f64,
    pub schedule: ScheduleParams,
}

impl StabilityRecord {
    pub fn is_valid(&self) -> bool {
        [self.delta, self.rho, self.r, self.epsilon, self.h_minus1_bound, self.h_minus1_actual, self.linf_actual]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{CellGeometry, GridSpec};

    fn layout() -> (GridSpec, CellGeometry) {
        (GridSpec::new(8, 16).unwrap(), CellGeometry::centered(1.0, &[1.0], 0.5).unwrap())
    }

    #[test]
    fn schedule_identities() {
        for &(ld, alpha, n) in &[(-10.0, 1.0, 2), (-100.0, 0.8, 3), (-1000.0, 0.6, 2), (-1e6, 1.0, 3)] {
            let s = run_schedule_log(ld, alpha, n).unwrap();
            assert!((s.epsilon.powf(2.0 * alpha) * s.r - 1.0).abs() < 1e-12);
            assert!((s.rho.powf(s.power()) / s.r - 1.0).abs() < 1e-12);
            let bal = (1.0 + n as f64) * s.rho.ln() + 400.0 * s.r + ld + 2.0 * s.rho.ln();
            assert!(bal.abs() < 1e-9 * ld.abs());
        }
    }

    #[test]
    fn schedule_rejects() {
        assert!(run_schedule(1.0, 1.0, 2).is_err());
        assert!(run_schedule(0.0, 1.0, 2).is_err());
        assert!(run_schedule(0.1, 0.5, 2).is_err());
        assert!(run_schedule(0.1, 0.4, 2).is_err());
    }

    #[test]
    fn schedule_monotone_in_delta() {
        let mut prev = 0.0;
        for j in 1..30 {
            let s = run_schedule(0.5f64.powi(j), 1.0, 2).unwrap();
            assert!(s.rho > prev);
            prev = s.rho;
        }
    }

    #[test]
    fn interpolation_basics() {
        assert_eq!(interpolate_linf(0.0, 3.0, 2.0, 2).unwrap().value, 0.0);
        let i = interpolate_linf(2.5, 2.5, 3.0, 2).unwrap();
        assert!((i.value - 2.5).abs() < 1e-14);
        assert!(i.tau > 0.0 && i.tau < 1.0);
        assert!(interpolate_linf(1.0, 1.0, 1.5, 2).is_err());
    }

    #[test]
    fn decay_bound_shape() {
        let b0 = decay_bound(2.0, 1.0, 1e-9, 3.0, &[1.0, 2.0]);
        assert!((b0 - 2.0).abs() < 1e-8);
        assert_eq!(decay_bound(1.0, 0.7, 0.3, 1.0, &[1.0, -2.0]), decay_bound(1.0, 0.7, 0.3, 1.0, &[-1.0, 2.0]));
        assert!(decay_bound(1.0, 0.7, 0.3, 1.0, &[5.0, 0.0]) < decay_bound(1.0, 0.7, 0.3, 1.0, &[1.0, 0.0]));
    }

    #[test]
    fn shift_modulus_zero_and_axial_bound() {
        let (grid, geom) = layout();
        let q = CellFunction::from_real_fn(grid, geom.clone(), |x| if geom.in_omega(&x[1..]) { 1.0 + x[1] } else { 0.0 });
        assert_eq!(shift_modulus(&q, &[0.0, 0.0, 0.0]), 0.0);
        let sup = q.max_abs();
        let area = geom.omega_volume();
        for y0 in [0.05, 0.125, 0.3] {
            let m = shift_modulus(&q, &[y0, 0.0, 0.0]);
            assert!(m <= 2.0 * sup * area * y0 * (1.0 + 1e-12) + 1e-12, "{m}");
        }
    }

    #[test]
    fn slices_match_direct_quadrature() {
        let (grid, geom) = layout();
        let f = CellFunction::from_fn(grid, geom, |x| {
            C64::new((-(x[1] * x[1] + x[2] * x[2]) * 8.0).exp() * (1.0 + (2.0 * PI * x[0]).cos()), 0.0)
        });
        let slices = fourier_slices(&f, &[-1, 0, 2], 2).unwrap();
        for s in &slices {
            for flat in (0..s.values.len()).step_by(37) {
                let eta = s.eta(flat);
                let want = fourier_coefficient(&f, s.k, &eta);
                assert!((s.values[flat] - want).norm() < 1e-12, "{} {:?}", s.k, eta);
            }
        }
        let scaled = fourier_slices(&f.scale(C64::new(-3.0, 0.0)), &[-1, 0, 2], 2).unwrap();
        assert!((h_minus1_norm(&scaled) - 3.0 * h_minus1_norm(&slices)).abs() < 1e-12);
    }
}
