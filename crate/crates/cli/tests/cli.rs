use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_floquet-cgo"));
    c.env_remove("FLOQUET_CGO_OUT");
    c
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path).unwrap().lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name} in {header:?}"));
    rows(path).iter().map(|r| r[i].parse().unwrap()).collect()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn identity_scenario_writes_hundred_clean_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["run", scenario("cgo-identities.json").to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = tmp.path().join("cgo_identities.csv");
    assert_eq!(rows(&csv).len(), 100);
    for col in ["max_null", "max_sum"] {
        assert!(column(&csv, col).iter().all(|v| *v < 1e-9));
    }
    let m = manifest(tmp.path());
    assert!(m["config_hash"].as_str().unwrap().starts_with("sha256:"));
    assert_eq!(m["versions"]["floquet-cgo"], env!("CARGO_PKG_VERSION"));
    assert!(m["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
}

#[test]
fn empty_sweep_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["run", scenario("empty.json").to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sweep nonempty"), "{}", stderr(&o));
}

#[test]
fn runs_are_byte_identical_and_manifests_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = run(&["run", scenario("cgo-identities.json").to_str().unwrap(), "--seed", "11"], dir);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |d: &Path| std::fs::read(d.join("cgo_identities.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(manifest(&a)["seed"], 11);

    let o = run(&["run", a.join("manifest.json").to_str().unwrap()], &tmp.path().join("c"));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("reproduced 1 file(s) bit-exactly"));

    let other = run(&["run", scenario("cgo-identities.json").to_str().unwrap(), "--seed", "12"], &tmp.path().join("d"));
    assert!(other.status.success());
    assert_ne!(read(&a), read(&tmp.path().join("d")));
}

#[test]
fn tampered_manifest_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    assert!(run(&["kelvin", "--check", "sphere-to-plane"], &a).status.success());
    let path = a.join("manifest.json");
    let mut m = manifest(&a);
    m["scenario"]["seed"] = 5.into();
    std::fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
    let o = run(&["run", path.to_str().unwrap()], &tmp.path().join("b"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("config_hash"));
}

#[test]
fn dn_norm_tracks_perturbation_size() {
    let tmp = tempfile::tempdir().unwrap();
    let delta = |amp: &str| {
        let dir = tmp.path().join(amp);
        let o = run(&["dn-norm", "--q1", "zero", "--q2", &format!("bump:{amp}")], &dir);
        assert!(o.status.success(), "{}", stderr(&o));
        column(&dir.join("dn_norm.csv"), "delta")[0]
    };
    let (big, small) = (delta("0.1"), delta("0.05"));
    assert!(small > 0.0 && small < big, "{small} {big}");
}

#[test]
fn kelvin_sphere_to_plane_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["kelvin", "--check", "sphere-to-plane"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let defects = column(&tmp.path().join("kelvin_sphere_to_plane.csv"), "defect");
    assert_eq!(defects.len(), 200);
    assert!(defects.iter().all(|d| *d < 1e-12));
}

#[test]
fn stability_curve_columns_are_monotone() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("curve.json");
    std::fs::write(
        &cfg,
        r#"{"name":"small-curve","command":"stability-curve","grid":{"N0":8,"N":16},"thetas":4,
            "q1":"bump:1","q2":"bump:1","sweep":{"parameter":"noise","values":[0.2,0.1,0.05,0.025,0.0125]}}"#,
    )
    .unwrap();
    let o = run(&["stability-curve", "--config", cfg.to_str().unwrap()], &tmp.path().join("out"));
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = tmp.path().join("out/stability.csv");
    for col in ["delta", "h_minus1_actual"] {
        let v = column(&csv, col);
        assert_eq!(v.len(), 5);
        assert!(v.windows(2).all(|w| w[1] < w[0]), "{col}: {v:?}");
    }
}

#[test]
fn output_directory_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("from-env");
    let o = bin().args(["kelvin", "--check", "conjugation"]).env("FLOQUET_CGO_OUT", &dir).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.join("kelvin_conjugation.csv").exists());
}

#[test]
fn usage_and_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin().arg("invert-everything").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));

    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"name":"bad","command":"forward","gird":{"N0":8,"N":8}}"#).unwrap();
    let o = run(&["run", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gird"), "{}", stderr(&o));

    std::fs::write(&cfg, r#"{"name":"bad","command":"dn-norm","q2":"bumpy:1","sweep":{"parameter":"noise","values":[1]}}"#).unwrap();
    let o = run(&["run", cfg.to_str().unwrap()], tmp.path());
    assert!(stderr(&o).contains("`q2`"), "{}", stderr(&o));

    let o = run(&["forward", "--config", scenario("dn-norm.json").to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("subcommand is forward"));
}
