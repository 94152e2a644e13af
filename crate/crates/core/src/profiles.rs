//! Named analytic potentials sampled on `ω̌`, parsed from `name:param:…` strings.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::Potential;
use crate::grid::{CellGeometry, GridSpec};
use crate::lattice::CellFunction;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Profile {
    Zero,
    /// `A·B(x′)·(1 + ½cos 2πx₀)` with the polynomial bump `B = Π(1 − t_j²)³`.
    Bump { amp: f64 },
    /// `A·cos(2πm x₀)·B(x′)`.
    Trig { amp: f64, mode: i64 },
    /// `A·|xₙ|^α` on `ω`.
    HolderKink { amp: f64, alpha: f64 },
    /// Constant `A` on `ω`.
    Constant { amp: f64 },
}

/// Coordinates of `x′` rescaled so `ω` becomes `(−1, 1)ⁿ`.
fn unit_coords(geom: &CellGeometry, xp: &[f64]) -> Vec<f64> {
    geom.omega_box()
        .iter()
        .zip(xp)
        .map(|(iv, x)| 2.0 * (x - iv.lo) / iv.len() - 1.0)
        .collect()
}

fn bump(t: &[f64]) -> f64 {
    t.iter().map(|s| (1.0 - s * s).max(0.0).powi(3)).product()
}

impl Profile {
    /// Value at `x = (x₀, x′)` with `x′ ∈ ω`.
    pub fn eval(&self, geom: &CellGeometry, x: &[f64]) -> f64 {
        let t = unit_coords(geom, &x[1..]);
        match *self {
            Profile::Zero => 0.0,
            Profile::Bump { amp } => amp * bump(&t) * (1.0 + 0.5 * (2.0 * PI * x[0]).cos()),
            Profile::Trig { amp, mode } => amp * (2.0 * PI * mode as f64 * x[0]).cos() * bump(&t),
            Profile::HolderKink { amp, alpha } => amp * x[x.len() - 1].abs().powf(alpha),
            Profile::Constant { amp } => amp,
        }
    }

    /// Samples at open-`ω` points, zero elsewhere.
    pub fn sample(&self, grid: GridSpec, geom: &CellGeometry) -> CellFunction {
        CellFunction::from_real_fn(grid, geom.clone(), |x| if geom.in_omega(&x[1..]) { self.eval(geom, x) } else { 0.0 })
    }

    /// Sampled potential with bounds read off the samples.
    pub fn potential(&self, grid: GridSpec, geom: &CellGeometry) -> Result<Potential> {
        let p = Potential::from_cell(self.sample(grid, geom))?;
        Ok(match self {
            Profile::HolderKink { alpha, .. } => p.with_holder_alpha(*alpha),
            Profile::Bump { .. } | Profile::Trig { .. } => p.with_holder_alpha(1.0),
            _ => p,
        })
    }

    /// The same profile with its amplitude multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        match *self {
            Profile::Zero => Profile::Zero,
            Profile::Bump { amp } => Profile::Bump { amp: amp * s },
            Profile::Trig { amp, mode } => Profile::Trig { amp: amp * s, mode },
            Profile::HolderKink { amp, alpha } => Profile::HolderKink { amp: amp * s, alpha },
            Profile::Constant { amp } => Profile::Constant { amp: amp * s },
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .ok_or_else(|| Error::Format(format!("profile '{s}' is missing parameter {i}")))?
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("profile '{s}': {e}")))
        };
        let arity = |n: usize| -> Result<()> {
            if parts.len() != n + 1 {
                return Err(Error::Format(format!("profile '{s}' expects {n} parameter(s)")));
            }
            Ok(())
        };
        match parts[0] {
            "zero" => {
                arity(0)?;
                Ok(Profile::Zero)
            }
            "bump" => {
                arity(1)?;
                Ok(Profile::Bump { amp: num(1)? })
            }
            "trig" => {
                arity(2)?;
                let mode = num(2)?;
                if mode.fract() != 0.0 {
                    return Err(Error::Format(format!("profile '{s}': mode must be an integer")));
                }
                Ok(Profile::Trig { amp: num(1)?, mode: mode as i64 })
            }
            "kink" | "holder" => {
                arity(2)?;
                let alpha = num(2)?;
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(Error::Format(format!("profile '{s}': alpha must lie in (0, 1]")));
                }
                Ok(Profile::HolderKink { amp: num(1)?, alpha })
            }
            "const" => {
                arity(1)?;
                Ok(Profile::Constant { amp: num(1)? })
            }
            other => Err(Error::Format(format!("unknown profile '{other}' (zero, bump, trig, kink, const)"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Zero => write!(f, "zero"),
            Profile::Bump { amp } => write!(f, "bump:{amp}"),
            Profile::Trig { amp, mode } => write!(f, "trig:{amp}:{mode}"),
            Profile::HolderKink { amp, alpha } => write!(f, "kink:{amp}:{alpha}"),
            Profile::Constant { amp } => write!(f, "const:{amp}"),
        }
    }
}

impl TryFrom<String> for Profile {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Profile> for String {
    fn from(p: Profile) -> String {
        p.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        for s in ["zero", "bump:0.1", "trig:2:3", "kink:1:0.5", "const:-0.25"] {
            let p: Profile = s.parse().unwrap();
            assert_eq!(p.to_string().parse::<Profile>().unwrap(), p);
        }
        for bad in ["", "bump", "bump:x", "trig:1:0.5", "kink:1:0", "spline:1", "zero:1"] {
            assert!(bad.parse::<Profile>().is_err(), "{bad}");
        }
    }

    #[test]
    fn support_and_admissibility() {
        let geom = CellGeometry::centered(1.0, &[1.0], 0.5).unwrap();
        let grid = GridSpec::new(8, 16).unwrap();
        let q = Profile::Bump { amp: 2.0 }.potential(grid, &geom).unwrap();
        let mut x = vec![0.0; 3];
        for (flat, v) in q.values().values().iter().enumerate() {
            q.values().point_into(flat, &mut x);
            if !geom.in_omega(&x[1..]) {
                assert_eq!(*v, crate::C64::new(0.0, 0.0));
            }
        }
        assert!(q.m_plus <= 3.0);
        assert!(Profile::Constant { amp: -1e3 }.potential(grid, &geom).is_err());
    }
}
