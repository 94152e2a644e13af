use std::sync::Arc;

use floquet_cgo::cgo::{build_phase, quasi_periodicity_defect, solve_remainder, AxialFrequency, Branch, CgoParams, RemainderConfig};
use floquet_cgo::experiment::{cgo_identity_sweep, stability_curve, StabilityConfig};
use floquet_cgo::fbg::{dn_sup_over_theta, ThetaGrid};
use floquet_cgo::fiber::{FiberMesh, FiberSolver, SolverConfig};
use floquet_cgo::io::{read_dn_binary, read_stability_csv, write_dn_binary, write_stability_csv};
use floquet_cgo::lattice::extend_potential;
use floquet_cgo::profiles::Profile;
use floquet_cgo::{CellGeometry, GridSpec};

fn desk() -> (GridSpec, CellGeometry) {
    (GridSpec::new(4, 8).unwrap(), CellGeometry::centered(1.0, &[1.0], 0.5).unwrap())
}

#[test]
fn identity_sweep_is_clean_and_reproducible() {
    let a = cgo_identity_sweep(5, 100, &[2, 3]).unwrap();
    assert_eq!(a.len(), 100);
    assert!(a.iter().all(|r| r.max_null < 1e-9 && r.max_sum < 1e-9 && r.quasi_periodicity < 1e-10 && r.branch2_phase_defect < 1e-10));
    assert_eq!(a, cgo_identity_sweep(5, 100, &[2, 3]).unwrap());
}

#[test]
fn dn_distance_shrinks_with_the_perturbation() {
    let (grid, geom) = desk();
    let q1 = Profile::Zero.potential(grid, &geom).unwrap();
    let thetas = ThetaGrid::new(4).unwrap();
    let big = dn_sup_over_theta(&q1, &Profile::Bump { amp: 0.1 }.potential(grid, &geom).unwrap(), thetas).unwrap();
    let small = dn_sup_over_theta(&q1, &Profile::Bump { amp: 0.05 }.potential(grid, &geom).unwrap(), thetas).unwrap();
    assert!(small.sup > 0.0 && small.sup < big.sup);
    assert!((big.sup / small.sup - 2.0).abs() < 0.05);
}

#[test]
fn cgo_solution_is_quasi_periodic() {
    let (grid, geom) = desk();
    let q = Profile::Bump { amp: 1.0 }.sample(grid, &geom);
    let q_ext = extend_potential(&q).unwrap();
    for k in [AxialFrequency::integer(1), AxialFrequency::integer(-2), AxialFrequency::half(1)] {
        let p = CgoParams { theta: 1.1, k, r: 3.3, xi: vec![1.0, 0.0], eta: vec![0.0, 2.0] };
        let ph = build_phase(&p).unwrap();
        // with half-integer k only the first branch carries the phase e^{iθ}
        let branches: &[Branch] = if k.is_half_integer() { &[Branch::One] } else { &[Branch::One, Branch::Two] };
        for &which in branches {
            let rem = solve_remainder(&ph, which, &q_ext, RemainderConfig::default()).unwrap();
            assert!(rem.contraction_observed < 1.0);
            assert!(quasi_periodicity_defect(&ph, which, &rem.r) < 1e-10, "{k:?} {which:?}");
        }
    }
}

#[test]
fn dn_map_survives_binary_round_trip() {
    let (grid, geom) = desk();
    let q = Profile::Trig { amp: 0.5, mode: 1 }.potential(grid, &geom).unwrap();
    let mesh = Arc::new(FiberMesh::new(grid, geom).unwrap());
    let dn = FiberSolver::new(mesh, &q, 0.4, SolverConfig::default()).unwrap().assemble_dn().unwrap();
    let mut buf = Vec::new();
    write_dn_binary(&mut buf, &dn).unwrap();
    let back = read_dn_binary(buf.as_slice()).unwrap();
    assert_eq!(back.matrix(), dn.matrix());
    assert_eq!(back.dim(), dn.dim());
}

#[test]
fn stability_rows_round_trip_through_csv() {
    let (grid, geom) = desk();
    let cfg = StabilityConfig { geometry: geom, grid, thetas: 2, ..StabilityConfig::desk(2, vec![0.2, 0.1]).unwrap() };
    let recs = stability_curve(&cfg).unwrap();
    assert!(recs[1].delta < recs[0].delta);
    let mut buf = Vec::new();
    write_stability_csv(&mut buf, &recs).unwrap();
    let rows = read_stability_csv(buf.as_slice()).unwrap();
    assert_eq!(rows.len(), 2);
    let empty = StabilityConfig { scales: vec![], ..cfg };
    assert!(stability_curve(&empty).unwrap_err().to_string().contains("sweep nonempty"));
}
