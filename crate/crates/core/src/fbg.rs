//! Floquet–Bloch–Gelfand transform on truncated cylinders:
//! `𝒰(f)_θ(x₀, x') = Σ_m e^{imθ} f(x₀ + m, x')`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{dn_diff_norm_with, FiberMesh, FiberSolver, HscriptGram, Potential, PowerConfig, SolverConfig};
use crate::lattice::CellFunction;
use crate::C64;

/// Function on `[−K, K+1) × [−R,R]ⁿ`, stored as the `2K + 1` unit cells.
#[derive(Clone, Debug, PartialEq)]
pub struct CylinderFunction {
    k: usize,
    cells: Vec<CellFunction>,
}

impl CylinderFunction {
    /// `cells[i]` holds the cell `m = i − K`.
    pub fn new(k: usize, cells: Vec<CellFunction>) -> Result<Self> {
        if cells.len() != 2 * k + 1 {
            return Err(Error::Shape(format!("K = {k} needs {} cells, got {}", 2 * k + 1, cells.len())));
        }
        if cells.windows(2).any(|w| w[0].grid() != w[1].grid() || w[0].geometry() != w[1].geometry()) {
            return Err(Error::Shape("cells live on different grids".into()));
        }
        Ok(Self { k, cells })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cells(&self) -> &[CellFunction] {
        &self.cells
    }

    /// Cell `m ∈ [−K, K]`; zero outside the stored range.
    pub fn cell(&self, m: i64) -> Option<&CellFunction> {
        let i = m + self.k as i64;
        (0..self.cells.len() as i64).contains(&i).then(|| &self.cells[i as usize])
    }

    /// `Σ_m ‖f_m‖²`.
    pub fn norm_sqr(&self) -> f64 {
        self.cells.iter().map(|c| c.l2_norm().powi(2)).sum()
    }
}

/// `M` equispaced angles `θ_j = 2πj/M`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThetaGrid {
    m: usize,
}

impl ThetaGrid {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParams("theta grid needs M >= 1".into()));
        }
        Ok(Self { m })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn theta(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.m as f64
    }

    pub fn thetas(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.theta(j)).collect()
    }
}

pub fn fbg_forward(f: &CylinderFunction, thetas: ThetaGrid) -> Vec<CellFunction> {
    let k = f.k as i64;
    (0..thetas.len())
        .map(|j| {
            let theta = thetas.theta(j);
            let mut acc = CellFunction::zeros(*f.cells[0].grid(), f.cells[0].geometry().clone());
            for (i, cell) in f.cells.iter().enumerate() {
                let phase = C64::from_polar(1.0, (i as i64 - k) as f64 * theta);
                for (a, b) in acc.values_mut().iter_mut().zip(cell.values()) {
                    *a += phase * b;
                }
            }
            acc
        })
        .collect()
}

/// `f_m = (1/M) Σ_j e^{−imθ_j} 𝒰(f)_{θ_j}`, exact when `M > 2K + 1`.
pub fn fbg_inverse(fibers: &[CellFunction], k: usize) -> Result<CylinderFunction> {
    let m = fibers.len();
    if m <= 2 * k + 1 {
        return Err(Error::Alias { m, cells: 2 * k + 1 });
    }
    let grid = ThetaGrid::new(m)?;
    let cells = (-(k as i64)..=k as i64)
        .map(|cell| {
            let mut acc = CellFunction::zeros(*fibers[0].grid(), fibers[0].geometry().clone());
            for (j, fib) in fibers.iter().enumerate() {
                let phase = C64::from_polar(1.0 / m as f64, -(cell as f64) * grid.theta(j));
                for (a, b) in acc.values_mut().iter_mut().zip(fib.values()) {
                    *a += phase * b;
                }
            }
            acc
        })
        .collect();
    CylinderFunction::new(k, cells)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DnSup {
    pub sup: f64,
    pub theta_star: f64,
    /// `(θ, ‖Λ_{q₁,θ} − Λ_{q₂,θ}‖_*)` per grid angle.
    pub per_theta: Vec<(f64, f64)>,
}

/// `max_θ ‖Λ_{q₁,γ̌₁,θ} − Λ_{q₂,γ̌₁,θ}‖_*` over an explicit list of angles.
pub fn dn_sup_over_angles(q1: &Potential, q2: &Potential, thetas: &[f64], cfg: SolverConfig) -> Result<DnSup> {
    if q1.values().grid() != q2.values().grid() || q1.values().geometry() != q2.values().geometry() {
        return Err(Error::Shape("potentials live on different grids".into()));
    }
    let mesh = Arc::new(FiberMesh::new(*q1.values().grid(), q1.values().geometry().clone())?);
    let mut per_theta = Vec::with_capacity(thetas.len());
    for &theta in thetas {
        let gram = HscriptGram::new(mesh.clone(), theta, true, cfg)?;
        let a = FiberSolver::new(mesh.clone(), q1, theta, cfg)?.assemble_dn()?;
        let b = FiberSolver::new(mesh.clone(), q2, theta, cfg)?.assemble_dn()?;
        per_theta.push((theta, dn_diff_norm_with(&gram, &a, &b, PowerConfig::default())?));
    }
    let (theta_star, sup) = per_theta
        .iter()
        .copied()
        .fold((f64::NAN, 0.0), |best, (t, v)| if v > best.1 || best.0.is_nan() { (t, v) } else { best });
    Ok(DnSup { sup, theta_star, per_theta })
}

pub fn dn_sup_over_theta(q1: &Potential, q2: &Potential, thetas: ThetaGrid) -> Result<DnSup> {
    dn_sup_over_angles(q1, q2, &thetas.thetas(), SolverConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{CellGeometry, GridSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn layout() -> (GridSpec, CellGeometry) {
        (GridSpec::new(4, 4).unwrap(), CellGeometry::centered(1.0, &[1.0], 1.0).unwrap())
    }

    fn random_cylinder(k: usize, seed: u64) -> CylinderFunction {
        let (grid, geom) = layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = (0..2 * k + 1)
            .map(|_| CellFunction::from_fn(grid, geom.clone(), |_| C64::new(rng.random(), rng.random())))
            .collect();
        CylinderFunction::new(k, cells).unwrap()
    }

    #[test]
    fn single_cell_is_theta_independent() {
        let f = random_cylinder(0, 1);
        let fibers = fbg_forward(&f, ThetaGrid::new(5).unwrap());
        for fib in &fibers {
            assert_eq!(fib, &f.cells()[0]);
        }
        let back = fbg_inverse(&fibers[..2], 0).unwrap();
        assert!(back.cells()[0].sub(&f.cells()[0]).unwrap().max_abs() < 1e-15);
        assert!(matches!(fbg_inverse(&fibers[..1], 0), Err(Error::Alias { .. })));
    }

    #[test]
    fn shift_multiplies_by_phase() {
        let f = random_cylinder(2, 2);
        let (grid, geom) = layout();
        // g(x) = f(x + 1): cell m of g is cell m + 1 of f
        let mut cells: Vec<CellFunction> = f.cells()[1..].to_vec();
        cells.push(CellFunction::zeros(grid, geom));
        let mut padded_f = f.cells().to_vec();
        padded_f.insert(0, cells.last().unwrap().clone());
        padded_f.push(cells.last().unwrap().clone());
        let f3 = CylinderFunction::new(3, padded_f).unwrap();
        let mut g_cells = f3.cells()[1..].to_vec();
        g_cells.push(cells.last().unwrap().clone());
        let g3 = CylinderFunction::new(3, g_cells).unwrap();
        let tg = ThetaGrid::new(9).unwrap();
        let uf = fbg_forward(&f3, tg);
        let ug = fbg_forward(&g3, tg);
        for (j, (a, b)) in uf.iter().zip(&ug).enumerate() {
            let want = a.scale(C64::from_polar(1.0, -tg.theta(j)));
            assert!(b.sub(&want).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        let (grid, geom) = layout();
        let z = CylinderFunction::new(1, vec![CellFunction::zeros(grid, geom); 3]).unwrap();
        assert!(fbg_forward(&z, ThetaGrid::new(4).unwrap()).iter().all(|c| c.max_abs() == 0.0));
    }
}
