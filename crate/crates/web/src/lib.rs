//! Browser bindings for three small views of the toolkit: a CGO solution slice,
//! the partial Kelvin map, and the `ε / r / ρ` schedule.

use floquet_cgo::cgo::{assemble_v, build_phase, solve_remainder, AxialFrequency, Branch, CgoParams, RemainderConfig};
use floquet_cgo::kelvin::KelvinChart;
use floquet_cgo::lattice::extend_potential;
use floquet_cgo::profiles::Profile;
use floquet_cgo::recovery::run_schedule_log;
use floquet_cgo::{CellGeometry, GridSpec};
use wasm_bindgen::prelude::*;

/// `|v|` on the slice `x₀ = 0` of the cell, row-major in `(x₁, x₂)`.
#[wasm_bindgen]
pub struct CgoSlice {
    size: usize,
    tau: f64,
    remainder: f64,
    iterations: usize,
    values: Vec<f64>,
}

#[wasm_bindgen]
impl CgoSlice {
    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.size
    }

    #[wasm_bindgen(getter)]
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `‖r‖_{L²}` of the remainder.
    #[wasm_bindgen(getter)]
    pub fn remainder(&self) -> f64 {
        self.remainder
    }

    #[wasm_bindgen(getter)]
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }
}

/// `n = 2`, `R = 1`, `ω = (−½, ½) × (−½, 0)`, `ξ = e₁`, `η = (0, eta)`, `q = bump:amp`.
pub fn cgo_slice_native(theta: f64, k_twice: i32, r: f64, eta: f64, amp: f64, size: usize) -> Result<CgoSlice, String> {
    let geom = CellGeometry::centered(1.0, &[1.0], 0.5).map_err(|e| e.to_string())?;
    let grid = GridSpec::new(8, size).map_err(|e| e.to_string())?;
    let q = Profile::Bump { amp }.sample(grid, &geom);
    let q_ext = extend_potential(&q).map_err(|e| e.to_string())?;
    let p = CgoParams { theta, k: AxialFrequency::from_twice(k_twice as i64), r, xi: vec![1.0, 0.0], eta: vec![0.0, eta] };
    let ph = build_phase(&p).map_err(|e| e.to_string())?;
    let rem = solve_remainder(&ph, Branch::One, &q_ext, RemainderConfig::default()).map_err(|e| e.to_string())?;
    let v = assemble_v(&ph, Branch::One, &rem.r);
    let values = v.values()[..size * size].iter().map(|z| z.norm()).collect();
    Ok(CgoSlice { size, tau: ph.tau, remainder: rem.r.l2_norm(), iterations: rem.iterations, values })
}

#[wasm_bindgen]
pub fn cgo_slice(theta: f64, k_twice: i32, r: f64, eta: f64, amp: f64, size: usize) -> Result<CgoSlice, JsError> {
    cgo_slice_native(theta, k_twice, r, eta, amp, size).map_err(|e| JsError::new(&e))
}

/// Circle `|x′ − a| = scale·R` sampled at `samples` points and its image, interleaved
/// as `x₁, x₂, y₁, y₂`; points within `1e-9` of the origin are `NaN`.
pub fn kelvin_circle_native(radius: f64, scale: f64, samples: usize) -> Result<Vec<f64>, String> {
    let ch = KelvinChart::new(radius, 2).map_err(|e| e.to_string())?;
    let a = ch.center();
    let mut out = Vec::with_capacity(4 * samples);
    for j in 0..samples {
        let phi = 2.0 * std::f64::consts::PI * j as f64 / (samples - 1).max(1) as f64;
        let x = [a[0] + scale * radius * phi.cos(), a[1] + scale * radius * phi.sin()];
        let y = if x.iter().map(|v| v * v).sum::<f64>() < 1e-18 {
            vec![f64::NAN; 2]
        } else {
            ch.map_spatial(&x).map_err(|e| e.to_string())?
        };
        out.extend([x[0], x[1], y[0], y[1]]);
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn kelvin_circle(radius: f64, scale: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    kelvin_circle_native(radius, scale, samples).map_err(|e| JsError::new(&e))
}

/// `[y₁, y₂, (2R/|y′|)^{n−2}, (2R/|y′|)^{2n}]` at the image of `x′`, here `n = 2`.
pub fn kelvin_point_native(radius: f64, x1: f64, x2: f64) -> Result<Vec<f64>, String> {
    let ch = KelvinChart::new(radius, 2).map_err(|e| e.to_string())?;
    let y = ch.map_spatial(&[x1, x2]).map_err(|e| e.to_string())?;
    let w = ch.weight(&y).map_err(|e| e.to_string())?;
    let j = ch.jacobian(&y).map_err(|e| e.to_string())?;
    Ok(vec![y[0], y[1], w, j])
}

#[wasm_bindgen]
pub fn kelvin_point(radius: f64, x1: f64, x2: f64) -> Result<Vec<f64>, JsError> {
    kelvin_point_native(radius, x1, x2).map_err(|e| JsError::new(&e))
}

/// Rows `[|ln δ|, ρ, ε, r, ρ⁻²]` for `|ln δ|` log-spaced over `[10^lo, 10^hi]`.
pub fn schedule_curve_native(alpha: f64, n: usize, lo: f64, hi: f64, count: usize) -> Result<Vec<f64>, String> {
    if count < 2 || !(hi > lo) {
        return Err("need count >= 2 and hi > lo".into());
    }
    let mut out = Vec::with_capacity(5 * count);
    for j in 0..count {
        let l = 10f64.powf(lo + (hi - lo) * j as f64 / (count - 1) as f64);
        let s = run_schedule_log(-l, alpha, n).map_err(|e| e.to_string())?;
        out.extend([l, s.rho, s.epsilon, s.r, s.h_minus1_bound()]);
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn schedule_curve(alpha: f64, n: usize, lo: f64, hi: f64, count: usize) -> Result<Vec<f64>, JsError> {
    schedule_curve_native(alpha, n, lo, hi, count).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slice_vanishes_on_the_patch() {
        let s = cgo_slice_native(0.3, 1, 2.5, 2.0, 1.0, 16).unwrap();
        assert_eq!(s.values().len(), 256);
        assert!(s.tau > 0.0 && s.remainder > 0.0);
        // xₙ = 0 is the column i₂ = N/2
        let peak = s.values.iter().cloned().fold(0.0, f64::max);
        for i1 in 0..16 {
            assert!(s.values[i1 * 16 + 8] < 1e-12 * peak);
        }
    }

    #[test]
    fn unit_circle_lands_on_the_line() {
        let pts = kelvin_circle_native(0.5, 1.0, 65).unwrap();
        for c in pts.chunks(4).filter(|c| c[2].is_finite()) {
            assert!((c[3] - 1.0).abs() < 1e-9);
        }
        let p = kelvin_point_native(0.5, 0.3, 0.4).unwrap();
        assert!((p[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn schedule_grows_with_log_delta() {
        let rows = schedule_curve_native(1.0, 2, 1.0, 4.0, 7).unwrap();
        let rho: Vec<f64> = rows.chunks(5).map(|r| r[1]).collect();
        assert!(rho.windows(2).all(|w| w[1] > w[0]));
        assert!(schedule_curve_native(1.0, 2, 1.0, 1.0, 7).is_err());
    }

    #[test]
    fn page_control_ranges_evaluate() {
        for n in 2..=6 {
            for alpha in [0.55, 0.75, 1.0] {
                let rows = schedule_curve_native(alpha, n, 0.5, 4.0, 80).unwrap();
                assert!(rows.iter().all(|v| v.is_finite()), "n={n} alpha={alpha}");
            }
        }
        for (theta, k2, r, eta, amp) in [(0.0, -6, 0.5, 0.5, 0.0), (6.28, 6, 4.0, 4.0, 2.0), (3.1, 0, 1.0, 0.5, 0.5)] {
            let s = cgo_slice_native(theta, k2, r, eta, amp, 32).unwrap();
            assert!(s.values.iter().all(|v| v.is_finite()));
        }
        let e = cgo_slice_native(3.1, 0, 1.0, 0.5, 3.0, 32).err().unwrap();
        assert!(e.contains("not convergent"), "{e}");
    }
}
