mod commands;
mod scenario;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use commands::{Check, Outcome};
use scenario::{hex, Command, KelvinCheck, Scenario, Sweep, SweepParameter};

#[derive(Parser)]
#[command(name = "floquet-cgo", version, about = "Batch experiments for CGO-based stability of periodic potentials on a cylinder")]
struct Cli {
    /// Scenario file (JSON); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Results directory.
    #[arg(long, global = true, env = "FLOQUET_CGO_OUT", default_value = "floquet-cgo-out")]
    out: PathBuf,
    /// Seed for sampled parameters; overrides the scenario's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args, Default)]
struct Pair {
    /// Profile for q1: a name under `profiles` or a spec such as `bump:0.5`.
    #[arg(long)]
    q1: Option<String>,
    #[arg(long)]
    q2: Option<String>,
}

#[derive(Subcommand)]
enum Sub {
    /// Run a scenario file, or re-run a manifest and compare outputs.
    Run { path: Option<PathBuf> },
    /// Phase identities, multiplier norm and remainder sweep.
    CgoCheck,
    /// Fiber solves against manufactured solutions.
    Forward,
    /// DN-map difference norms and their sup over theta.
    DnNorm(Pair),
    /// Boundary pairing against the volume decomposition.
    Pairing(Pair),
    /// Fourier slices, H^-1 norm and schedule for q1 - q2.
    Recover(Pair),
    /// Kelvin map checks.
    Kelvin {
        #[arg(long, value_enum)]
        check: Option<KelvinCheck>,
    },
    /// End-to-end (delta, error) table over perturbation scales.
    StabilityCurve(Pair),
}

#[derive(Serialize, Deserialize)]
struct FileEntry {
    name: String,
    rows: usize,
    sha256: String,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config_hash: String,
    seed: u64,
    versions: BTreeMap<String, String>,
    scenario: Scenario,
    constants: BTreeMap<String, f64>,
    checks: Vec<Check>,
    files: Vec<FileEntry>,
}

enum Failure {
    Error(String),
    Checks(usize),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Checks(n)) => {
            eprintln!("error: {n} check(s) failed");
            ExitCode::from(3)
        }
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let (command, pair) = match &cli.command {
        Sub::Run { path } => {
            let path = path.as_ref().or(cli.config.as_ref()).ok_or_else(|| Failure::Error("run needs a scenario path".into()))?;
            return run_file(path, cli.seed, &cli.out);
        }
        Sub::CgoCheck => (Command::CgoCheck, None),
        Sub::Forward => (Command::Forward, None),
        Sub::DnNorm(p) => (Command::DnNorm, Some(p)),
        Sub::Pairing(p) => (Command::Pairing, Some(p)),
        Sub::Recover(p) => (Command::Recover, Some(p)),
        Sub::Kelvin { .. } => (Command::Kelvin, None),
        Sub::StabilityCurve(p) => (Command::StabilityCurve, Some(p)),
    };
    let mut s = match &cli.config {
        Some(path) => {
            let s = Scenario::load(path).map_err(Failure::Error)?;
            if s.command != command {
                return Err(Failure::Error(format!("`command` in {} is {} but the subcommand is {command}", path.display(), s.command)));
            }
            s
        }
        None => Scenario::builtin(command),
    };
    if let Some(p) = pair {
        if let Some(q) = &p.q1 {
            s.q1 = q.clone();
        }
        if let Some(q) = &p.q2 {
            s.q2 = q.clone();
        }
    }
    if let Sub::Kelvin { check: Some(check) } = cli.command {
        s.kelvin.check = check;
        if cli.config.is_none() && check == KelvinCheck::Conjugation {
            s.sweep = Some(Sweep { parameter: SweepParameter::H, values: vec![0.04, 0.02, 0.01] });
        } else if cli.config.is_none() && check == KelvinCheck::Equivalence {
            s.sweep = Some(Sweep { parameter: SweepParameter::Samples, values: vec![20.0] });
        }
    }
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    execute_scenario(&s, &cli.out).map(|_| ())
}

fn run_file(path: &Path, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Error(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Failure::Error(format!("config {}: {e}", path.display())))?;
    if value.get("config_hash").is_some() {
        let manifest: Manifest = serde_json::from_value(value).map_err(|e| Failure::Error(format!("manifest {}: {e}", path.display())))?;
        if manifest.scenario.config_hash() != manifest.config_hash {
            return Err(Failure::Error("manifest scenario does not match its config_hash".into()));
        }
        let fresh = execute_scenario(&manifest.scenario, out)?;
        for old in &manifest.files {
            match fresh.files.iter().find(|f| f.name == old.name) {
                Some(f) if f.sha256 == old.sha256 => {}
                _ => return Err(Failure::Error(format!("{} differs from the manifest", old.name))),
            }
        }
        println!("reproduced {} file(s) bit-exactly", manifest.files.len());
        return Ok(());
    }
    let mut s = Scenario::from_json(&text).map_err(|e| Failure::Error(format!("config {}: {e}", path.display())))?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    execute_scenario(&s, out).map(|_| ())
}

fn execute_scenario(s: &Scenario, out: &Path) -> Result<Manifest, Failure> {
    let outcome = commands::run(s).map_err(Failure::Error)?;
    let manifest = write_results(s, outcome, out).map_err(Failure::Error)?;
    for f in &manifest.files {
        println!("wrote {} ({} rows)", out.join(&f.name).display(), f.rows);
    }
    for (k, v) in &manifest.constants {
        println!("{k} = {v:e}");
    }
    let mut failed = 0;
    for c in &manifest.checks {
        println!("{} {}: {:e} (limit {:e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.limit);
        failed += usize::from(!c.pass);
    }
    if failed > 0 {
        return Err(Failure::Checks(failed));
    }
    Ok(manifest)
}

fn write_results(s: &Scenario, outcome: Outcome, out: &Path) -> Result<Manifest, String> {
    std::fs::create_dir_all(out).map_err(|e| format!("cannot create {}: {e}", out.display()))?;
    let mut files = Vec::new();
    for t in &outcome.tables {
        std::fs::write(out.join(&t.name), &t.bytes).map_err(|e| format!("cannot write {}: {e}", t.name))?;
        files.push(FileEntry { name: t.name.clone(), rows: t.rows, sha256: hex(&Sha256::digest(&t.bytes)) });
    }
    let versions = BTreeMap::from([
        ("floquet-cgo".to_string(), floquet_cgo::VERSION.to_string()),
        ("floquet-cgo-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
    ]);
    let manifest = Manifest {
        config_hash: s.config_hash(),
        seed: s.seed,
        versions,
        scenario: s.clone(),
        constants: outcome.constants,
        checks: outcome.checks,
        files,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| e.to_string())?;
    std::fs::write(out.join("manifest.json"), text + "\n").map_err(|e| format!("cannot write manifest.json: {e}"))?;
    Ok(manifest)
}
