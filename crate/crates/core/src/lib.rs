//! Numerical toolkit for the partial-data inverse problem for `-Δ + q` on an
//! infinite cylinder `ℝ × ω` with a 1-periodic potential.
//!
//! The crate covers every constructive step of the log-type stability
//! argument at desk scale:
//!
//! - [`lattice`]: sampled functions on the period cell `Q = [0,1] × [-R,R]^n`
//!   and the shifted Fourier basis `e_α` (half-integer index along `x₁`).
//! - [`cgo`]: complex geometric optics phases `ζ₁, ζ₂`, the multiplier
//!   solution operator `G_ζ` and the remainder fixed point.
//! - [`fiber`]: second-order finite differences for the θ-fiber boundary
//!   value problem, discrete DN maps and their `ℋ_θ → L²` difference norm.
//! - [`fbg`]: the Floquet–Bloch–Gelfand transform on truncated cylinders.
//! - [`recovery`]: Fourier data of `q₁ - q₂` from boundary pairings, decay and
//!   a-priori bounds, the weighted `H⁻¹` norm and the `ε / r / ρ` schedule.
//! - [`kelvin`]: the partial Kelvin transform flattening a spherical patch.
//!
//! Coordinates are `x = (x₀, x₁, …, xₙ)` with `x₀` the periodic (axial)
//! variable and `xₙ` the direction normal to the flat patch `{xₙ = 0}`.

pub mod cgo;
pub mod error;
pub mod experiment;
pub mod fbg;
pub mod fiber;
pub mod grid;
pub mod io;
pub mod kelvin;
pub mod lattice;
pub mod linalg;
pub mod profiles;
pub mod recovery;

pub use error::{Error, Result};
pub use grid::{CellGeometry, GridSpec, Interval};
pub use lattice::CellFunction;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Crate version, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
