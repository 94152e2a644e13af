//! One pipeline per subcommand.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};

use floquet_cgo::cgo::{build_phase, solve_remainder, Branch, GreenOperator, RemainderConfig};
use floquet_cgo::experiment::{
    cgo_identity_sweep, fit_log_envelope, forward_error, observed_order, pairing_consistency, stability_curve,
    Manufactured, PairingSetup, StabilityConfig,
};
use floquet_cgo::fbg::dn_sup_over_angles;
use floquet_cgo::fiber::{Potential, SolverConfig};
use floquet_cgo::io::{write_csv, write_stability_csv};
use floquet_cgo::kelvin::{
    conjugation_residual, equivalence_factors, l2_quotient, sample_quotient, BoxGrid, KelvinChart,
};
use floquet_cgo::lattice::extend_potential;
use floquet_cgo::recovery::{
    fit_line, fourier_slices, h_minus1_norm, interpolate_linf, run_schedule, sobolev_norm, StabilityRecord,
};
use floquet_cgo::{GridSpec, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scenario::{Command, KelvinCheck, Scenario, SweepParameter};

type Res<T> = Result<T, String>;

pub struct Table {
    pub name: String,
    pub rows: usize,
    pub bytes: Vec<u8>,
}

impl Table {
    fn new<T: Serialize>(name: &str, rows: &[T]) -> Res<Self> {
        let mut bytes = Vec::new();
        write_csv(&mut bytes, rows).map_err(|e| e.to_string())?;
        Ok(Self { name: format!("{name}.csv"), rows: rows.len(), bytes })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, pass: value <= limit }
    }

    fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, pass: value >= limit }
    }

    /// `value` is 1 when the property holds.
    fn holds(name: &str, ok: bool) -> Self {
        Self { name: name.into(), value: if ok { 1.0 } else { 0.0 }, limit: 1.0, pass: ok }
    }
}

#[derive(Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub constants: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
}

impl Outcome {
    fn constant(&mut self, key: &str, value: f64) {
        if value.is_finite() {
            self.constants.insert(key.into(), value);
        }
    }
}

/// Maps `f` over `items` on scoped threads; results keep the input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> Res<R> + Sync) -> Res<Vec<R>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len());
    if workers <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Res<R>>> = (0..items.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= items.len() {
                            break done;
                        }
                        done.push((i, f(&items[i])));
                    }
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("sweep worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every sweep point visited")).collect()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn monotone_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

pub fn run(s: &Scenario) -> Res<Outcome> {
    s.validate()?;
    let out = match s.command {
        Command::CgoCheck => cgo_check(s),
        Command::Forward => forward(s),
        Command::DnNorm => dn_norm(s),
        Command::Pairing => pairing(s),
        Command::Recover => recover(s),
        Command::Kelvin => kelvin(s),
        Command::StabilityCurve => stability(s),
    };
    out.map_err(|e| format!("scenario '{}' ({}): {e}", s.name, s.command))
}

#[derive(Serialize)]
struct RemainderRow {
    r: f64,
    tau: f64,
    r_norm: f64,
    iterations: usize,
    constant: f64,
    green_norm: f64,
    green_bound: f64,
}

fn cgo_check(s: &Scenario) -> Res<Outcome> {
    let sweep = s.sweep()?;
    let tol = &s.tolerances;
    let mut out = Outcome::default();
    if sweep.parameter == SweepParameter::Samples {
        let rows = cgo_identity_sweep(s.seed, sweep.values[0] as usize, &[s.n()]).map_err(err)?;
        let fold = |f: fn(&floquet_cgo::experiment::IdentityRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
        out.checks.push(Check::at_most("max |zeta.zeta|", fold(|r| r.max_null), tol.identity));
        out.checks.push(Check::at_most("max sum-identity residual", fold(|r| r.max_sum), tol.identity));
        out.checks.push(Check::at_most("max |exp(zeta1.e0) - e^(i theta)|", fold(|r| r.quasi_periodicity), tol.quasi_periodicity));
        out.checks.push(Check::at_most("max branch-2 phase defect", fold(|r| r.branch2_phase_defect), tol.quasi_periodicity));
        out.tables.push(Table::new("cgo_identities", &rows)?);
        return Ok(out);
    }
    let (grid, geom) = (s.grid_spec()?, s.cell_geometry()?);
    let q = s.profile("q1", &s.q1)?.sample(grid, &geom);
    let q_ext = extend_potential(&q).map_err(err)?;
    let base = s.cgo_params()?;
    let cfg = RemainderConfig { tol: tol.remainder_tol, max_iter: tol.remainder_max_iter };
    let rows = par_map(&sweep.values, |&r| {
        let mut p = base.clone();
        p.r = r;
        let ph = build_phase(&p).map_err(err)?;
        let rem = solve_remainder(&ph, Branch::One, &q_ext, cfg).map_err(err)?;
        let g = GreenOperator::for_grid(&ph.zeta1, &q_ext).map_err(err)?;
        Ok(RemainderRow {
            r,
            tau: ph.tau,
            r_norm: rem.r.l2_norm(),
            iterations: rem.iterations,
            constant: rem.constant,
            green_norm: g.multiplier_max(),
            green_bound: PI * geom.half_width() / ph.tau,
        })
    })?;
    let worst = rows.iter().map(|r| r.green_norm / r.green_bound).fold(0.0, f64::max);
    out.checks.push(Check::at_most("max ||G|| / (pi R / tau)", worst, tol.multiplier_slack));
    if rows.len() >= 2 {
        let x: Vec<f64> = rows.iter().map(|r| r.tau.ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.r_norm.ln()).collect();
        out.constant("remainder_slope", fit_line(&x, &y).0);
    }
    out.tables.push(Table::new("remainder", &rows)?);
    Ok(out)
}

#[derive(Serialize)]
struct ForwardRow {
    solution: String,
    theta: f64,
    #[serde(rename = "N0")]
    n0: usize,
    #[serde(rename = "N")]
    n: usize,
    h: f64,
    rel_error: f64,
    order: Option<f64>,
}

fn forward(s: &Scenario) -> Res<Outcome> {
    let geom = s.cell_geometry()?;
    let ns: Vec<usize> = s.sweep()?.values.iter().map(|&v| v as usize).collect();
    let kinds = [
        ("harmonic", Manufactured::Harmonic, 0.0),
        ("separated-m0", Manufactured::Separated { m: 0 }, 0.7),
        ("separated-m1", Manufactured::Separated { m: 1 }, 0.7),
    ];
    let mut out = Outcome::default();
    let mut rows = Vec::new();
    for (label, kind, theta) in kinds {
        let errs = par_map(&ns, |&n| {
            let grid = GridSpec::new(n, n).map_err(err)?;
            forward_error(grid, &geom, theta, kind).map_err(err)
        })?;
        for (i, e) in errs.iter().enumerate() {
            let order = (i > 0).then(|| observed_order(errs[i - 1].rel_error, e.rel_error, errs[i - 1].h / e.h));
            rows.push(ForwardRow { solution: label.into(), theta, n0: e.n0, n: e.n, h: e.h, rel_error: e.rel_error, order });
        }
        if let Some(order) = rows.last().and_then(|r| r.order) {
            out.constant(&format!("order_{label}"), order);
            out.checks.push(Check::at_least(&format!("{label} order on finest pair"), order, s.tolerances.forward_order));
        }
    }
    out.tables.push(Table::new("forward", &rows)?);
    Ok(out)
}

fn potential_pair(s: &Scenario) -> Res<(Potential, Potential)> {
    let (grid, geom) = (s.grid_spec()?, s.cell_geometry()?);
    let q1 = s.profile("q1", &s.q1)?.potential(grid, &geom).map_err(err)?;
    let q2 = s.profile("q2", &s.q2)?.potential(grid, &geom).map_err(err)?;
    Ok((q1, q2))
}

fn thetas(s: &Scenario) -> Vec<f64> {
    (0..s.thetas).map(|j| 2.0 * PI * j as f64 / s.thetas as f64).collect()
}

fn solver_config(s: &Scenario) -> SolverConfig {
    SolverConfig { dense_threshold: s.tolerances.dense_threshold, residual_tol: s.tolerances.solver_residual }
}

#[derive(Serialize)]
struct DnRow {
    scale: f64,
    delta: f64,
    theta_star: f64,
}

#[derive(Serialize)]
struct DnThetaRow {
    scale: f64,
    theta: f64,
    norm: f64,
}

fn dn_norm(s: &Scenario) -> Res<Outcome> {
    let (q1, q2) = potential_pair(s)?;
    let step = q2.values().sub(q1.values()).map_err(err)?;
    let angles = thetas(s);
    let cfg = solver_config(s);
    let sups = par_map(&s.sweep()?.values, |&scale| {
        let qs = Potential::from_cell(q1.values().add(&step.scale(C64::new(scale, 0.0))).map_err(err)?).map_err(err)?;
        Ok((scale, dn_sup_over_angles(&q1, &qs, &angles, cfg).map_err(err)?))
    })?;
    let mut out = Outcome::default();
    let rows: Vec<DnRow> = sups.iter().map(|(scale, d)| DnRow { scale: *scale, delta: d.sup, theta_star: d.theta_star }).collect();
    let per: Vec<DnThetaRow> = sups
        .iter()
        .flat_map(|(scale, d)| d.per_theta.iter().map(move |&(theta, norm)| DnThetaRow { scale: *scale, theta, norm }))
        .collect();
    let nonzero: Vec<&DnRow> = rows.iter().filter(|r| r.scale != 0.0).collect();
    if step.max_abs() > 0.0 && !nonzero.is_empty() {
        let min = nonzero.iter().map(|r| r.delta).fold(f64::INFINITY, f64::min);
        out.checks.push(Check::at_least("min delta over nonzero scales", min, f64::MIN_POSITIVE));
    }
    let mut by_scale: Vec<&DnRow> = rows.iter().collect();
    by_scale.sort_by(|a, b| b.scale.abs().total_cmp(&a.scale.abs()));
    out.checks.push(Check::holds("delta decreases with |scale|", monotone_decreasing(&by_scale.iter().map(|r| r.delta).collect::<Vec<_>>())));
    out.constant("delta_max", rows.iter().map(|r| r.delta).fold(0.0, f64::max));
    out.tables.push(Table::new("dn_norm", &rows)?);
    out.tables.push(Table::new("dn_norm_theta", &per)?);
    Ok(out)
}

#[derive(Serialize)]
struct PairingRow {
    #[serde(rename = "N0")]
    n0: usize,
    #[serde(rename = "N")]
    n: usize,
    tau: f64,
    i1_re: f64,
    i1_im: f64,
    i2_re: f64,
    i2_im: f64,
    i3_re: f64,
    i3_im: f64,
    i4_re: f64,
    i4_im: f64,
    lhs_re: f64,
    lhs_im: f64,
    rel_gap: f64,
}

fn pairing(s: &Scenario) -> Res<Outcome> {
    let geometry = s.cell_geometry()?;
    let params = s.cgo_params()?;
    let (q1, q2) = (s.profile("q1", &s.q1)?, s.profile("q2", &s.q2)?);
    let ns: Vec<usize> = s.sweep()?.values.iter().map(|&v| v as usize).collect();
    let reps = par_map(&ns, |&n| {
        let grid = GridSpec::new(2 * n, n).map_err(err)?;
        let setup = PairingSetup { geometry: geometry.clone(), grid, params: params.clone(), q1, q2 };
        pairing_consistency(&setup).map_err(err)
    })?;
    let rows: Vec<PairingRow> = reps
        .iter()
        .map(|r| PairingRow {
            n0: r.n0,
            n: r.n,
            tau: r.tau,
            i1_re: r.terms.i1.re,
            i1_im: r.terms.i1.im,
            i2_re: r.terms.i2.re,
            i2_im: r.terms.i2.im,
            i3_re: r.terms.i3.re,
            i3_im: r.terms.i3.im,
            i4_re: r.terms.i4.re,
            i4_im: r.terms.i4.im,
            lhs_re: r.lhs.re,
            lhs_im: r.lhs.im,
            rel_gap: r.rel_gap,
        })
        .collect();
    let mut out = Outcome::default();
    let gaps: Vec<f64> = rows.iter().map(|r| r.rel_gap).collect();
    out.checks.push(Check::at_most("relative gap on finest grid", gaps[gaps.len() - 1], s.tolerances.pairing_gap));
    out.checks.push(Check::holds("gap decreases with N", monotone_decreasing(&gaps)));
    out.constant("tau", rows[0].tau);
    out.tables.push(Table::new("pairing", &rows)?);
    Ok(out)
}

#[derive(Serialize)]
struct SliceRow {
    k: i64,
    eta_step: f64,
    peak_abs: f64,
    peak_eta_norm: f64,
    h_minus1_sqr: f64,
}

fn recover(s: &Scenario) -> Res<Outcome> {
    let (q1, q2) = potential_pair(s)?;
    let rc = &s.recovery;
    let diff = q1.difference(&q2).map_err(err)?;
    let ks: Vec<i64> = s.sweep()?.values.iter().map(|&v| v as i64).collect();
    let slices = fourier_slices(&diff, &ks, rc.pad).map_err(err)?;
    let rows: Vec<SliceRow> = slices
        .iter()
        .map(|sl| {
            let (flat, peak) = sl.values.iter().enumerate().fold((0, 0.0), |b, (i, v)| if v.norm() > b.1 { (i, v.norm()) } else { b });
            SliceRow {
                k: sl.k as i64,
                eta_step: sl.eta_step,
                peak_abs: peak,
                peak_eta_norm: sl.eta(flat).iter().map(|e| e * e).sum::<f64>().sqrt(),
                h_minus1_sqr: h_minus1_norm(std::slice::from_ref(sl)).powi(2),
            }
        })
        .collect();
    let dn = dn_sup_over_angles(&q1, &q2, &thetas(s), solver_config(s)).map_err(err)?;
    let schedule = run_schedule(dn.sup, rc.alpha, s.n()).map_err(err)?;
    let h_minus1 = h_minus1_norm(&slices);
    let h_s = sobolev_norm(&diff, rc.sobolev_s);
    let interp = interpolate_linf(h_minus1, h_s, rc.sobolev_s, s.n()).map_err(err)?;
    let mut out = Outcome::default();
    for (key, v) in [
        ("delta", dn.sup),
        ("theta_star", dn.theta_star),
        ("rho", schedule.rho),
        ("r", schedule.r),
        ("epsilon", schedule.epsilon),
        ("h_minus1_bound", schedule.h_minus1_bound()),
        ("h_minus1_actual", h_minus1),
        ("sobolev_norm", h_s),
        ("linf_interpolated", interp.value),
        ("linf_actual", diff.max_abs()),
    ] {
        out.constant(key, v);
    }
    let ident = (schedule.epsilon.powf(2.0 * rc.alpha) * schedule.r - 1.0)
        .abs()
        .max((schedule.rho.powf(schedule.power()) / schedule.r - 1.0).abs());
    out.checks.push(Check::at_most("schedule identity residual", ident, 1e-12));
    out.tables.push(Table::new("fourier_slices", &rows)?);
    Ok(out)
}

#[derive(Serialize)]
struct SphereRow {
    index: usize,
    sphere_deviation: f64,
    y_n: f64,
    defect: f64,
}

#[derive(Serialize)]
struct ConjugationRow {
    h: f64,
    residual: f64,
    order: Option<f64>,
}

#[derive(Serialize)]
struct QuotientRow {
    index: usize,
    sample_quotient: f64,
    l2_quotient: f64,
}

fn kelvin(s: &Scenario) -> Res<Outcome> {
    let n = s.n();
    let r = s.kelvin.radius;
    let ch = KelvinChart::new(r, n).map_err(err)?;
    let sweep = s.sweep()?;
    let expected = match s.kelvin.check {
        KelvinCheck::Conjugation => SweepParameter::H,
        _ => SweepParameter::Samples,
    };
    if sweep.parameter != expected {
        return Err(format!("`kelvin.check` = {:?} needs `sweep.parameter` = {expected:?}", s.kelvin.check));
    }
    let mut out = Outcome::default();
    match s.kelvin.check {
        KelvinCheck::SphereToPlane => {
            let a = ch.center();
            let mut rows = Vec::new();
            for (index, p) in ch.sphere_points(sweep.values[0] as usize).iter().enumerate() {
                let y = ch.map_spatial(p).map_err(err)?;
                let dist = p.iter().zip(&a).map(|(x, c)| (x - c) * (x - c)).sum::<f64>().sqrt();
                rows.push(SphereRow { index, sphere_deviation: (dist - r).abs(), y_n: y[n - 1], defect: (y[n - 1] - 2.0 * r).abs() });
            }
            let worst = rows.iter().map(|r| r.defect).fold(0.0, f64::max);
            out.checks.push(Check::at_most("max |y_n - 2R|", worst, s.tolerances.sphere_to_plane));
            out.tables.push(Table::new("kelvin_sphere_to_plane", &rows)?);
        }
        KelvinCheck::Conjugation => {
            let u = |x: &[f64]| C64::new(x[1] * x[1] * x[x.len() - 1] + (2.0 * x[x.len() - 1]).sin() + x[0].cos() * x[1], 0.0);
            let ys: Vec<Vec<f64>> = (0..3)
                .map(|j| {
                    let mut y = vec![0.2 * j as f64];
                    y.extend((1..n).map(|i| 0.3 * r * ((i + j) as f64).sin()));
                    y.push(r * (2.2 + 0.3 * j as f64));
                    y
                })
                .collect();
            let res = par_map(&sweep.values, |&h| conjugation_residual(&ch, u, &ys, h).map_err(err))?;
            let rows: Vec<ConjugationRow> = sweep
                .values
                .iter()
                .zip(&res)
                .enumerate()
                .map(|(i, (&h, &residual))| ConjugationRow {
                    h,
                    residual,
                    order: (i > 0).then(|| observed_order(res[i - 1], residual, sweep.values[i - 1] / h)),
                })
                .collect();
            for row in rows.iter().filter(|r| r.order.is_some()) {
                out.checks.push(Check::at_least(&format!("conjugation order at h = {}", row.h), row.order.unwrap_or(0.0), s.tolerances.conjugation_order));
            }
            out.tables.push(Table::new("kelvin_conjugation", &rows)?);
        }
        KelvinCheck::Equivalence => {
            let mut lo = vec![0.0];
            let mut hi = vec![1.0];
            lo.extend(std::iter::repeat(-0.8 * r).take(n - 1));
            hi.extend(std::iter::repeat(0.8 * r).take(n - 1));
            lo.push(2.0 * r);
            hi.push(3.2 * r);
            let mut dims = vec![5];
            dims.extend(std::iter::repeat(17).take(n));
            let target = BoxGrid::new(lo, hi, dims).map_err(err)?;
            let ys: Vec<Vec<f64>> = (0..target.len()).map(|i| target.point(i)).collect();
            let f = equivalence_factors(&ch, &ys).map_err(err)?;
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            let mut rows = Vec::new();
            for index in 0..sweep.values[0] as usize {
                let c: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
                let u = move |x: &[f64]| C64::new(c[0] + c[1] * x[1] + c[2] * x[x.len() - 1] * x[1], c[3] * (c[4] * x[x.len() - 1]).exp() + c[4] * x[0]);
                rows.push(QuotientRow {
                    index,
                    sample_quotient: sample_quotient(&ch, u.clone(), &ys).map_err(err)?,
                    l2_quotient: l2_quotient(&ch, u, &target).map_err(err)?,
                });
            }
            for (key, v) in [
                ("weight_low", f.weight_low),
                ("weight_high", f.weight_high),
                ("jacobian_low", f.jacobian_low),
                ("jacobian_high", f.jacobian_high),
            ] {
                out.constant(key, v);
            }
            let weight_ok = rows.iter().all(|q| f.weight_low <= q.sample_quotient && q.sample_quotient <= f.weight_high);
            let jac_ok = rows.iter().all(|q| f.jacobian_low <= q.l2_quotient && q.l2_quotient <= f.jacobian_high);
            out.checks.push(Check::holds("weight constants bracket sample quotients", weight_ok));
            out.checks.push(Check::holds("Jacobian-corrected constants bracket L2 quotients", jac_ok));
            out.tables.push(Table::new("kelvin_equivalence", &rows)?);
        }
    }
    Ok(out)
}

fn stability(s: &Scenario) -> Res<Outcome> {
    let rc = &s.recovery;
    let cfg = StabilityConfig {
        geometry: s.cell_geometry()?,
        grid: s.grid_spec()?,
        thetas: s.thetas,
        base: s.profile("q1", &s.q1)?,
        perturbation: s.profile("q2", &s.q2)?,
        scales: s.sweep()?.values.clone(),
        alpha: rc.alpha,
        k_max: rc.k_max,
        pad: rc.pad,
    };
    let recs: Vec<StabilityRecord> = par_map(&cfg.scales, |&scale| {
        let one = StabilityConfig { scales: vec![scale], ..cfg.clone() };
        stability_curve(&one).map_err(err).map(|mut v| v.remove(0))
    })?;
    let mut out = Outcome::default();
    let mut sorted: Vec<&StabilityRecord> = recs.iter().collect();
    sorted.sort_by(|a, b| b.scale.abs().total_cmp(&a.scale.abs()));
    let deltas: Vec<f64> = sorted.iter().map(|r| r.delta).collect();
    let errors: Vec<f64> = sorted.iter().map(|r| r.h_minus1_actual).collect();
    out.checks.push(Check::holds("delta strictly monotone in the scale", monotone_decreasing(&deltas)));
    out.checks.push(Check::holds("H^-1 error strictly monotone in the scale", monotone_decreasing(&errors)));
    if recs.len() >= 2 {
        let fit = fit_log_envelope(&recs);
        out.constant("envelope_sigma", fit.sigma);
        out.constant("envelope_c", fit.c);
        out.constant("envelope_rel_residual", fit.rel_residual);
    }
    let mut bytes = Vec::new();
    write_stability_csv(&mut bytes, &recs).map_err(err)?;
    out.tables.push(Table { name: "stability.csv".into(), rows: recs.len(), bytes });
    Ok(out)
}
