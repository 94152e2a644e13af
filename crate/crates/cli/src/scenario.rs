//! Versionable experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use floquet_cgo::cgo::{AxialFrequency, CgoParams};
use floquet_cgo::profiles::Profile;
use floquet_cgo::{CellGeometry, GridSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    CgoCheck,
    Forward,
    DnNorm,
    Pairing,
    Recover,
    Kelvin,
    StabilityCurve,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::CgoCheck => "cgo-check",
            Command::Forward => "forward",
            Command::DnNorm => "dn-norm",
            Command::Pairing => "pairing",
            Command::Recover => "recover",
            Command::Kelvin => "kelvin",
            Command::StabilityCurve => "stability-curve",
        }
    }

    fn allowed(self) -> &'static [SweepParameter] {
        use SweepParameter::*;
        match self {
            Command::CgoCheck => &[Samples, R],
            Command::Forward | Command::Pairing => &[Resolution],
            Command::DnNorm | Command::StabilityCurve => &[Noise],
            Command::Recover => &[K],
            Command::Kelvin => &[Samples, H],
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    /// Number of random draws (a single value).
    Samples,
    /// CGO parameter `r`, which sets `τ`.
    R,
    /// Axial frequencies.
    K,
    /// Scale `s` of the perturbation `q₂ − q₁`.
    Noise,
    /// Spatial points per axis `N`.
    Resolution,
    /// Finite-difference step.
    H,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(rename = "R")]
    pub radius: f64,
    /// Widths of `ω` along `x₁, …, xₙ₋₁`; the dimension is `n = widths.len() + 1`.
    pub widths: Vec<f64>,
    /// Depth of `ω` below the patch `{xₙ = 0}`.
    pub depth: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { radius: 1.0, widths: vec![1.0], depth: 0.5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "N0")]
    pub n0: usize,
    #[serde(rename = "N")]
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n0: 8, n: 16 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CgoConfig {
    pub theta: f64,
    /// Integer or half-integer.
    pub k: f64,
    pub r: f64,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
}

impl CgoConfig {
    fn standard(n: usize) -> Self {
        let mut xi = vec![0.0; n];
        xi[0] = 1.0;
        let mut eta = vec![0.0; n];
        eta[n - 1] = 4.0;
        Self { theta: 0.7, k: 1.0, r: 3.5, xi, eta }
    }

    pub fn params(&self) -> Result<CgoParams, String> {
        let twice = 2.0 * self.k;
        if (twice - twice.round()).abs() > 1e-12 {
            return Err(format!("`cgo.k` = {} is neither an integer nor a half-integer", self.k));
        }
        let p = CgoParams {
            theta: self.theta,
            k: AxialFrequency::from_twice(twice.round() as i64),
            r: self.r,
            xi: self.xi.clone(),
            eta: self.eta.clone(),
        };
        p.validate().map_err(|e| format!("`cgo`: {e}"))?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryConfig {
    pub alpha: f64,
    /// Axial frequencies `−K..=K` in the `H⁻¹` quadrature.
    pub k_max: i64,
    pub pad: usize,
    /// Smoothness index of the `L∞` interpolation.
    pub sobolev_s: f64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self { alpha: 1.0, k_max: 4, pad: 2, sobolev_s: 2.5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum KelvinCheck {
    SphereToPlane,
    Conjugation,
    Equivalence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KelvinConfig {
    pub check: KelvinCheck,
    #[serde(rename = "R")]
    pub radius: f64,
}

impl Default for KelvinConfig {
    fn default() -> Self {
        Self { check: KelvinCheck::SphereToPlane, radius: 0.5 }
    }
}

/// Every tolerance the checks compare against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub identity: f64,
    pub quasi_periodicity: f64,
    pub multiplier_slack: f64,
    pub remainder_tol: f64,
    pub remainder_max_iter: usize,
    pub solver_residual: f64,
    pub dense_threshold: usize,
    pub forward_order: f64,
    pub pairing_gap: f64,
    pub sphere_to_plane: f64,
    pub conjugation_order: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: 1e-9,
            quasi_periodicity: 1e-10,
            multiplier_slack: 1.01,
            remainder_tol: 1e-10,
            remainder_max_iter: 200,
            solver_residual: 1e-10,
            dense_threshold: 600,
            forward_order: 1.8,
            pairing_gap: 0.10,
            sphere_to_plane: 1e-12,
            conjugation_order: 1.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub grid: GridConfig,
    /// Number of equispaced `θ` samples.
    #[serde(default = "default_thetas")]
    pub thetas: usize,
    /// Named profiles; `q1` and `q2` may refer to these or be inline specs.
    #[serde(default)]
    pub profiles: BTreeMap<String, Profile>,
    #[serde(default = "default_q1")]
    pub q1: String,
    #[serde(default = "default_q2")]
    pub q2: String,
    pub sweep: Option<Sweep>,
    pub cgo: Option<CgoConfig>,
    #[serde(default)]
    pub recovery: RecoveryConfig,
    #[serde(default)]
    pub kelvin: KelvinConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_thetas() -> usize {
    8
}

fn default_q1() -> String {
    "zero".into()
}

fn default_q2() -> String {
    "bump:0.1".into()
}

impl Scenario {
    /// Built-in desk-scale scenario for a subcommand run without `--config`.
    pub fn builtin(command: Command) -> Self {
        let mut s = Self {
            name: format!("{command}-default"),
            command,
            seed: 0,
            geometry: GeometryConfig::default(),
            grid: GridConfig::default(),
            thetas: default_thetas(),
            profiles: BTreeMap::new(),
            q1: default_q1(),
            q2: default_q2(),
            sweep: None,
            cgo: None,
            recovery: RecoveryConfig::default(),
            kelvin: KelvinConfig::default(),
            tolerances: Tolerances::default(),
        };
        let sweep = |parameter, values: Vec<f64>| Some(Sweep { parameter, values });
        match command {
            Command::CgoCheck => s.sweep = sweep(SweepParameter::Samples, vec![100.0]),
            Command::Forward => s.sweep = sweep(SweepParameter::Resolution, vec![8.0, 16.0, 32.0]),
            Command::DnNorm => s.sweep = sweep(SweepParameter::Noise, vec![1.0]),
            Command::Pairing => {
                s.geometry = GeometryConfig { radius: 0.05, widths: vec![0.05], depth: 0.025 };
                s.q1 = "bump:5".into();
                s.q2 = "zero".into();
                s.cgo = Some(CgoConfig::standard(2));
                s.sweep = sweep(SweepParameter::Resolution, vec![16.0, 24.0, 32.0]);
            }
            Command::Recover => {
                s.q1 = "bump:1".into();
                s.q2 = "bump:1.1".into();
                s.sweep = sweep(SweepParameter::K, (-4..=4).map(f64::from).collect());
            }
            Command::Kelvin => s.sweep = sweep(SweepParameter::Samples, vec![200.0]),
            Command::StabilityCurve => {
                s.grid = GridConfig { n0: 16, n: 32 };
                s.q1 = "bump:1".into();
                s.q2 = "bump:2".into();
                s.sweep = sweep(SweepParameter::Noise, vec![0.2, 0.1, 0.05, 0.025, 0.0125]);
            }
        }
        s
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }

    pub fn n(&self) -> usize {
        self.geometry.widths.len() + 1
    }

    pub fn cell_geometry(&self) -> Result<CellGeometry, String> {
        let g = &self.geometry;
        CellGeometry::centered(g.radius, &g.widths, g.depth).map_err(|e| format!("`geometry`: {e}"))
    }

    pub fn grid_spec(&self) -> Result<GridSpec, String> {
        GridSpec::new(self.grid.n0, self.grid.n).map_err(|e| format!("`grid`: {e}"))
    }

    /// Looks `name` up under `profiles`, falling back to an inline spec.
    pub fn profile(&self, key: &str, name: &str) -> Result<Profile, String> {
        if let Some(p) = self.profiles.get(name) {
            return Ok(*p);
        }
        name.parse().map_err(|e| format!("`{key}` = \"{name}\" is neither a name under `profiles` nor a valid profile ({e})"))
    }

    pub fn sweep(&self) -> Result<&Sweep, String> {
        match &self.sweep {
            None => Err("sweep nonempty: `sweep` is missing".into()),
            Some(s) if s.values.is_empty() => Err("sweep nonempty: `sweep.values` is empty".into()),
            Some(s) => Ok(s),
        }
    }

    pub fn cgo_params(&self) -> Result<CgoParams, String> {
        self.cgo.clone().unwrap_or_else(|| CgoConfig::standard(self.n())).params()
    }

    /// Checks everything that does not need a solve.
    pub fn validate(&self) -> Result<(), String> {
        let sweep = self.sweep()?;
        if !self.command.allowed().contains(&sweep.parameter) {
            return Err(format!(
                "`sweep.parameter` = {:?} is not supported by {}; expected one of {:?}",
                sweep.parameter,
                self.command,
                self.command.allowed()
            ));
        }
        if sweep.values.iter().any(|v| !v.is_finite()) {
            return Err("`sweep.values` must be finite".into());
        }
        let integral = matches!(sweep.parameter, SweepParameter::Samples | SweepParameter::Resolution | SweepParameter::K);
        if integral && sweep.values.iter().any(|v| v.fract() != 0.0) {
            return Err(format!("`sweep.values` must be integers for {:?}", sweep.parameter));
        }
        if sweep.parameter == SweepParameter::Samples && (sweep.values.len() != 1 || sweep.values[0] < 1.0) {
            return Err("`sweep.values` for samples must be a single positive count".into());
        }
        if self.thetas == 0 {
            return Err("`thetas` must be at least 1".into());
        }
        self.cell_geometry()?;
        self.grid_spec()?;
        self.profile("q1", &self.q1)?;
        self.profile("q2", &self.q2)?;
        if let Some(c) = &self.cgo {
            if c.xi.len() != self.n() || c.eta.len() != self.n() {
                return Err(format!("`cgo.xi` and `cgo.eta` need {} entries", self.n()));
            }
            c.params()?;
        }
        Ok(())
    }

    /// Canonical JSON used for hashing and the manifest.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("scenario serializes")
    }

    pub fn config_hash(&self) -> String {
        format!("sha256:{}", hex(&Sha256::digest(self.canonical_json().as_bytes())))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate() {
        for c in [
            Command::CgoCheck,
            Command::Forward,
            Command::DnNorm,
            Command::Pairing,
            Command::Recover,
            Command::Kelvin,
            Command::StabilityCurve,
        ] {
            Scenario::builtin(c).validate().unwrap();
        }
    }

    #[test]
    fn unknown_key_is_named() {
        let err = Scenario::from_json(r#"{"name":"x","command":"forward","sweeep":{}}"#).unwrap_err();
        assert!(err.contains("sweeep"), "{err}");
    }

    #[test]
    fn empty_sweep_rejected() {
        let mut s = Scenario::builtin(Command::Forward);
        s.sweep.as_mut().unwrap().values.clear();
        assert!(s.validate().unwrap_err().starts_with("sweep nonempty"));
        s.sweep = None;
        assert!(s.validate().unwrap_err().starts_with("sweep nonempty"));
    }

    #[test]
    fn profiles_resolve_by_name_or_spec() {
        let mut s = Scenario::builtin(Command::DnNorm);
        s.profiles.insert("base".into(), Profile::Bump { amp: 2.0 });
        assert_eq!(s.profile("q1", "base").unwrap(), Profile::Bump { amp: 2.0 });
        assert_eq!(s.profile("q1", "trig:1:2").unwrap(), Profile::Trig { amp: 1.0, mode: 2 });
        assert!(s.profile("q2", "nope").unwrap_err().contains("`q2`"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = Scenario::builtin(Command::Kelvin);
        let mut b = a.clone();
        assert_eq!(a.config_hash(), b.config_hash());
        b.seed = 1;
        assert_ne!(a.config_hash(), b.config_hash());
    }
}
