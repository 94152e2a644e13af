//! End-to-end pipelines shared by the command-line driver and the test suites.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cgo::{
    assemble_v, build_phase, identity_report, solve_remainder, AxialFrequency, Branch, CgoParams, RemainderConfig,
};
use crate::error::{Error, Result};
use crate::fbg::dn_sup_over_angles;
use crate::fiber::{FiberMesh, FiberSolver, Potential, SolverConfig};
use crate::grid::{CellGeometry, GridSpec};
use crate::lattice::{extend_potential, CellFunction};
use crate::profiles::Profile;
use crate::recovery::{fit_line, fourier_slices, h_minus1_norm, pairing_lhs_with, pairing_terms, run_schedule, PairingTerms, StabilityRecord};
use crate::C64;

/// Random admissible parameters: `ξ = ±e_j` with `j < n`, `|η| ∈ [1, 4]`,
/// `2k ∈ [−5, 5]`, `r ∈ (0.01, 5)`.
pub fn random_cgo_params<R: Rng>(rng: &mut R, n: usize) -> CgoParams {
    let mut xi = vec![0.0; n];
    let axis = rng.random_range(0..n - 1);
    xi[axis] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let mut eta: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    eta[axis] = 0.0;
    let len = eta.iter().map(|e| e * e).sum::<f64>().sqrt().max(1e-3);
    let target = rng.random_range(1.0..4.0);
    eta.iter_mut().for_each(|e| *e *= target / len);
    CgoParams {
        theta: rng.random_range(0.0..2.0 * PI),
        k: AxialFrequency::from_twice(rng.random_range(-5..=5)),
        r: rng.random_range(0.01..5.0),
        xi,
        eta,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityRow {
    pub index: usize,
    pub n: usize,
    pub theta: f64,
    pub k: f64,
    pub r: f64,
    pub tau: f64,
    pub max_null: f64,
    pub max_sum: f64,
    /// `|exp(ζ₁·e₀) − e^{iθ}|`.
    pub quasi_periodicity: f64,
    /// `|exp(ζ₂·e₀) ∓ e^{iθ}|`, sign `−` for half-integer `k`.
    pub branch2_phase_defect: f64,
}

/// Phase identities for `count` random parameter sets, cycling through `dims`.
pub fn cgo_identity_sweep(seed: u64, count: usize, dims: &[usize]) -> Result<Vec<IdentityRow>> {
    if dims.is_empty() || dims.iter().any(|&n| n < 2) {
        return Err(Error::InvalidParams("dimensions must be >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|index| {
            let n = dims[index % dims.len()];
            let p = random_cgo_params(&mut rng, n);
            let ph = build_phase(&p)?;
            let rep = identity_report(&ph);
            Ok(IdentityRow {
                index,
                n,
                theta: p.theta,
                k: p.k.value(),
                r: p.r,
                tau: ph.tau,
                max_null: rep.max_null(),
                max_sum: rep.max_sum(),
                quasi_periodicity: rep.quasi_periodicity[0],
                branch2_phase_defect: {
                    let sign = if p.k.is_half_integer() { -1.0 } else { 1.0 };
                    (ph.zeta2[0].exp() - C64::from_polar(sign, p.theta)).norm()
                },
            })
        })
        .collect()
}

/// Closed-form solutions of `Δu = 0` used to measure solver order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Manufactured {
    /// `e^{x₁} cos xₙ`, periodic in `x₀` (needs `θ = 0`).
    Harmonic,
    /// `e^{i(θ+2πm)x₀} e^{|θ+2πm| x₁}`.
    Separated { m: i64 },
}

impl Manufactured {
    pub fn eval(&self, theta: f64, x: &[f64]) -> C64 {
        match *self {
            Manufactured::Harmonic => C64::new(x[1].exp() * x[x.len() - 1].cos(), 0.0),
            Manufactured::Separated { m } => {
                let w = theta + 2.0 * PI * m as f64;
                C64::from_polar((w.abs() * x[1]).exp(), w * x[0])
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardError {
    pub n0: usize,
    pub n: usize,
    pub h: f64,
    /// `max |u_h − u| / max |u|` over the closed box.
    pub rel_error: f64,
}

pub fn forward_error(grid: GridSpec, geom: &CellGeometry, theta: f64, kind: Manufactured) -> Result<ForwardError> {
    if kind == Manufactured::Harmonic && theta != 0.0 {
        return Err(Error::InvalidParams("the x0-independent solution is only 0-quasi-periodic".into()));
    }
    let mesh = Arc::new(FiberMesh::new(grid, geom.clone())?);
    let q = Potential::zero(grid, geom.clone());
    let solver = FiberSolver::new(mesh.clone(), &q, theta, SolverConfig::default())?;
    let f = mesh.trace_from_fn(|x| kind.eval(theta, x));
    let u = solver.solve(&f)?;
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for layer in 0..mesh.n0() {
        for local in 0..mesh.closed_len() {
            let exact = kind.eval(theta, &mesh.node_point(layer, local));
            err = err.max((u.values()[mesh.lattice_index(layer, local)] - exact).norm());
            scale = scale.max(exact.norm());
        }
    }
    Ok(ForwardError { n0: grid.n0(), n: grid.n(), h: mesh.h(), rel_error: err / scale })
}

/// `log(e_coarse / e_fine) / log(ratio)`.
pub fn observed_order(e_coarse: f64, e_fine: f64, ratio: f64) -> f64 {
    (e_coarse / e_fine).ln() / ratio.ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemainderPoint {
    pub r: f64,
    pub tau: f64,
    pub r_norm: f64,
    pub iterations: usize,
    pub constant: f64,
}

/// `‖r‖_{L²(Q)}` for `base` with its `r` parameter replaced by each entry of `rs`.
pub fn remainder_sweep(q_ext: &CellFunction, base: &CgoParams, rs: &[f64]) -> Result<Vec<RemainderPoint>> {
    rs.iter()
        .map(|&r| {
            let mut p = base.clone();
            p.r = r;
            let ph = build_phase(&p)?;
            let rem = solve_remainder(&ph, Branch::One, q_ext, RemainderConfig::default())?;
            Ok(RemainderPoint { r, tau: ph.tau, r_norm: rem.r.l2_norm(), iterations: rem.iterations, constant: rem.constant })
        })
        .collect()
}

/// Alessandrini consistency experiment on one grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingSetup {
    pub geometry: CellGeometry,
    pub grid: GridSpec,
    pub params: CgoParams,
    pub q1: Profile,
    pub q2: Profile,
}

impl PairingSetup {
    /// Thin cylinder of radius `r`, `ω = (−r/2, r/2)^{n−1} × (−r/2, 0)`, integer `k = 1`,
    /// `ξ = e₁`, `η = 4eₙ`, `r = 3.5` (so `τ ≈ 54`). `N` must be a multiple of 4.
    pub fn thin_cylinder(dim: usize, r: f64, n0: usize, n: usize) -> Result<Self> {
        let mut xi = vec![0.0; dim];
        xi[0] = 1.0;
        let mut eta = vec![0.0; dim];
        eta[dim - 1] = 4.0;
        Ok(Self {
            geometry: CellGeometry::centered(r, &vec![r; dim - 1], r / 2.0)?,
            grid: GridSpec::new(n0, n)?,
            params: CgoParams { theta: 0.7, k: AxialFrequency::integer(1), r: 3.5, xi, eta },
            q1: Profile::Bump { amp: 5.0 },
            q2: Profile::Zero,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingReport {
    pub n0: usize,
    pub n: usize,
    pub tau: f64,
    pub terms: PairingTerms,
    pub lhs: C64,
    /// `|lhs − (I₁ − I₂ + I₃ − I₄)| / |I₁|`.
    pub rel_gap: f64,
}

pub fn pairing_consistency(setup: &PairingSetup) -> Result<PairingReport> {
    let (grid, geom) = (setup.grid, &setup.geometry);
    let q1 = setup.q1.potential(grid, geom)?;
    let q2 = setup.q2.potential(grid, geom)?;
    let ph = build_phase(&setup.params)?;
    let cfg = RemainderConfig::default();
    let r1 = solve_remainder(&ph, Branch::One, &extend_potential(q1.values())?, cfg)?.r;
    let r2 = solve_remainder(&ph, Branch::Two, &extend_potential(q2.values())?, cfg)?.r;
    let v1 = assemble_v(&ph, Branch::One, &r1);
    let v2 = assemble_v(&ph, Branch::Two, &r2);
    let mesh = Arc::new(FiberMesh::new(grid, geom.clone())?);
    let terms = pairing_terms(&mesh, &q1.difference(&q2)?, &ph, &r1, &r2)?;
    let scfg = SolverConfig::default();
    let s1 = FiberSolver::new(mesh.clone(), &q1, ph.params.theta, scfg)?;
    let s2 = FiberSolver::new(mesh, &q2, ph.params.theta, scfg)?;
    let lhs = pairing_lhs_with(&s1, &s2, &v1, &v2)?;
    let rel_gap = (lhs - terms.total()).norm() / terms.i1.norm().max(f64::EPSILON);
    Ok(PairingReport { n0: grid.n0(), n: grid.n(), tau: ph.tau, terms, lhs, rel_gap })
}

/// `q₂ = q₁ + s·perturbation` for each `s`, measured against the DN data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub geometry: CellGeometry,
    pub grid: GridSpec,
    /// Number of equispaced θ samples.
    pub thetas: usize,
    pub base: Profile,
    pub perturbation: Profile,
    pub scales: Vec<f64>,
    pub alpha: f64,
    /// Axial frequencies `−K..=K` in the `H⁻¹` quadrature.
    pub k_max: i64,
    pub pad: usize,
}

impl StabilityConfig {
    pub fn desk(n: usize, scales: Vec<f64>) -> Result<Self> {
        Ok(Self {
            geometry: CellGeometry::centered(1.0, &vec![1.0; n - 1], 0.5)?,
            grid: GridSpec::new(16, 32)?,
            thetas: 8,
            base: Profile::Bump { amp: 1.0 },
            perturbation: Profile::Bump { amp: 1.0 },
            scales,
            alpha: 1.0,
            k_max: 4,
            pad: 2,
        })
    }
}

pub fn stability_curve(cfg: &StabilityConfig) -> Result<Vec<StabilityRecord>> {
    if cfg.scales.is_empty() {
        return Err(Error::InvalidParams("sweep nonempty: no perturbation scales given".into()));
    }
    let (grid, geom) = (cfg.grid, &cfg.geometry);
    let q1 = cfg.base.potential(grid, geom)?;
    let thetas: Vec<f64> = (0..cfg.thetas).map(|j| 2.0 * PI * j as f64 / cfg.thetas as f64).collect();
    let ks: Vec<i64> = (-cfg.k_max..=cfg.k_max).collect();
    cfg.scales
        .iter()
        .map(|&s| {
            let pert = cfg.perturbation.scaled(s).sample(grid, geom);
            let q2 = Potential::from_cell(q1.values().add(&pert)?)?;
            let dn = dn_sup_over_angles(&q1, &q2, &thetas, SolverConfig::default())?;
            let diff = q1.difference(&q2)?;
            let schedule = run_schedule(dn.sup, cfg.alpha, geom.n())?;
            Ok(StabilityRecord {
                scale: s,
                delta: dn.sup,
                rho: schedule.rho,
                r: schedule.r,
                epsilon: schedule.epsilon,
                h_minus1_bound: schedule.h_minus1_bound(),
                h_minus1_actual: h_minus1_norm(&fourier_slices(&diff, &ks, cfg.pad)?),
                linf_actual: diff.max_abs(),
                theta_star: dn.theta_star,
                n: geom.n(),
                n0: grid.n0(),
                n_grid: grid.n(),
                half_width: geom.half_width(),
                schedule,
            })
        })
        .collect()
}

/// Fit of `‖q₁ − q₂‖ ≈ C |ln δ|^{−σ}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub sigma: f64,
    pub c: f64,
    /// `max |fit/actual − 1|`.
    pub rel_residual: f64,
}

pub fn fit_log_envelope(records: &[StabilityRecord]) -> EnvelopeFit {
    let x: Vec<f64> = records.iter().map(|r| r.delta.ln().abs().ln()).collect();
    let y: Vec<f64> = records.iter().map(|r| r.h_minus1_actual.ln()).collect();
    let (slope, icpt) = fit_line(&x, &y);
    let rel_residual = x
        .iter()
        .zip(&y)
        .map(|(xi, yi)| ((icpt + slope * xi).exp() / yi.exp() - 1.0).abs())
        .fold(0.0, f64::max);
    EnvelopeFit { sigma: -slope, c: icpt.exp(), rel_residual }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_sweep_is_deterministic() {
        let a = cgo_identity_sweep(7, 10, &[2, 3]).unwrap();
        assert_eq!(a, cgo_identity_sweep(7, 10, &[2, 3]).unwrap());
        assert!(a.iter().all(|r| r.max_null < 1e-9 && r.max_sum < 1e-12));
        assert!(cgo_identity_sweep(7, 10, &[]).is_err());
    }

    #[test]
    fn forward_error_decreases() {
        let geom = CellGeometry::centered(1.0, &[1.0], 0.5).unwrap();
        let e1 = forward_error(GridSpec::new(8, 8).unwrap(), &geom, 0.0, Manufactured::Harmonic).unwrap();
        let e2 = forward_error(GridSpec::new(16, 16).unwrap(), &geom, 0.0, Manufactured::Harmonic).unwrap();
        assert!(observed_order(e1.rel_error, e2.rel_error, 2.0) > 1.8);
        assert!(forward_error(GridSpec::new(8, 8).unwrap(), &geom, 0.3, Manufactured::Harmonic).is_err());
    }

    #[test]
    fn empty_sweep_rejected() {
        let cfg = StabilityConfig::desk(2, vec![]).unwrap();
        let err = stability_curve(&cfg).unwrap_err();
        assert!(err.to_string().contains("sweep nonempty"));
    }
}
