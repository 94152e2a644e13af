use std::sync::Arc;

use floquet_cgo::cgo::{build_phase, star};
use floquet_cgo::experiment::random_cgo_params;
use floquet_cgo::fbg::{fbg_forward, fbg_inverse, CylinderFunction, ThetaGrid};
use floquet_cgo::fiber::{dn_diff_norm, FiberMesh, FiberSolver, Potential, SolverConfig};
use floquet_cgo::kelvin::KelvinChart;
use floquet_cgo::lattice::{from_coefficients, reflect, to_coefficients};
use floquet_cgo::recovery::run_schedule_log;
use floquet_cgo::{CellFunction, CellGeometry, GridSpec, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cell(dim: usize, n0: usize, n: usize, vals: &[(f64, f64)]) -> CellFunction {
    let geom = CellGeometry::centered(1.0, &vec![1.0; dim - 1], 0.5).unwrap();
    let grid = GridSpec::new(n0, n).unwrap();
    let len = n0 * n.pow(dim as u32);
    let values = (0..len).map(|i| C64::new(vals[i % vals.len()].0, vals[(i * 7 + 3) % vals.len()].1)).collect();
    CellFunction::from_values(grid, geom, values).unwrap()
}

fn values() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reflection_is_an_involution(vals in values(), dim in 2usize..4) {
        let f = cell(dim, 4, 8, &vals);
        prop_assert_eq!(reflect(&reflect(&f)), f.clone());
        prop_assert!((reflect(&f).l2_norm() - f.l2_norm()).abs() < 1e-12);
    }

    #[test]
    fn lattice_transform_round_trips(vals in values()) {
        let f = cell(2, 4, 8, &vals);
        let back = from_coefficients(&to_coefficients(&f));
        prop_assert!(back.sub(&f).unwrap().max_abs() < 1e-12);
        prop_assert!((to_coefficients(&f).l2_norm() - f.l2_norm()).abs() < 1e-10 * (1.0 + f.l2_norm()));
    }

    #[test]
    fn phases_are_null_and_star_is_an_involution(seed in any::<u64>(), dim in 2usize..5) {
        let p = random_cgo_params(&mut ChaCha8Rng::seed_from_u64(seed), dim);
        let ph = build_phase(&p).unwrap();
        for z in [&ph.zeta1, &ph.zeta2] {
            let zz: C64 = z.iter().map(|v| v * v).sum();
            prop_assert!(zz.norm() < 1e-9 * (1.0 + ph.tau * ph.tau));
            prop_assert_eq!(&star(&star(z)), z);
        }
    }

    #[test]
    fn fbg_is_unitary(vals in values(), k in 0usize..4, extra in 1usize..6) {
        let cells: Vec<CellFunction> = (0..2 * k + 1)
            .map(|m| cell(2, 4, 4, &vals).scale(C64::new(1.0 + m as f64, -(m as f64))))
            .collect();
        let f = CylinderFunction::new(k, cells).unwrap();
        let m = 2 * k + 1 + extra;
        let fibers = fbg_forward(&f, ThetaGrid::new(m).unwrap());
        let fiber_sqr: f64 = fibers.iter().map(|c| c.l2_norm().powi(2)).sum::<f64>() / m as f64;
        prop_assert!((fiber_sqr - f.norm_sqr()).abs() < 1e-10 * f.norm_sqr().max(1.0));
        let back = fbg_inverse(&fibers, k).unwrap();
        for (a, b) in back.cells().iter().zip(f.cells()) {
            prop_assert!(a.sub(b).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn schedule_identities_hold(log_delta in -1e5f64..-5.0, alpha in 0.55f64..=1.0, n in 2usize..5) {
        let s = run_schedule_log(log_delta, alpha, n).unwrap();
        prop_assert!((s.epsilon.powf(2.0 * alpha) * s.r - 1.0).abs() < 1e-12);
        prop_assert!((s.rho.powf(s.power()) / s.r - 1.0).abs() < 1e-12);
        let deeper = run_schedule_log(2.0 * log_delta, alpha, n).unwrap();
        prop_assert!(deeper.rho > s.rho);
    }

    #[test]
    fn kelvin_map_is_an_involution(x in prop::collection::vec(-3.0f64..3.0, 4), r in 0.1f64..2.0) {
        let ch = KelvinChart::new(r, 3).unwrap();
        prop_assume!(x[1..].iter().map(|v| v * v).sum::<f64>() > 1e-2);
        let back = ch.map_point(&ch.map_point(&x).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn dn_difference_norm_is_symmetric(amp in 0.1f64..3.0, theta in 0.0f64..6.28) {
        let geom = CellGeometry::centered(1.0, &[1.0], 0.5).unwrap();
        let grid = GridSpec::new(4, 8).unwrap();
        let mesh = Arc::new(FiberMesh::new(grid, geom.clone()).unwrap());
        let bump = CellFunction::from_real_fn(grid, geom.clone(), |x| {
            if geom.in_omega(&x[1..]) && x[2] < 0.0 { amp * (1.0 - x[1] * x[1]) } else { 0.0 }
        });
        let q1 = Potential::zero(grid, geom.clone());
        let q2 = Potential::from_cell(bump).unwrap();
        let a = FiberSolver::new(mesh.clone(), &q1, theta, SolverConfig::default()).unwrap().assemble_dn().unwrap();
        let b = FiberSolver::new(mesh, &q2, theta, SolverConfig::default()).unwrap().assemble_dn().unwrap();
        let ab = dn_diff_norm(&a, &b, true).unwrap();
        let ba = dn_diff_norm(&b, &a, true).unwrap();
        prop_assert!(ab > 0.0);
        prop_assert!((ab - ba).abs() <= 1e-6 * ab);
        prop_assert_eq!(dn_diff_norm(&a, &a, true).unwrap(), 0.0);
    }
}
