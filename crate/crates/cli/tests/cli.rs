use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const EMISSION: &str = r#"
experiment = "emission"

[lattice]
kappa = 1.0
g = 1.0
gamma = 0.5
n_sites = 200
topology = "folded-semi-infinite"

[packet]
alpha = 0.08
k = 1.5707963267948966
center = 100
"#;

fn nhlattice(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nhlattice"))
        .args(args)
        .current_dir(cwd)
        .env_remove("NHLATTICE_OUT")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn scatter_preset_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    let o = nhlattice(&["scatter", "--preset", "fig7a", "--out", out.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("reflection.csv").exists());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiment"], "scatter");

    // the manifest is itself a valid config
    let again = tmp.path().join("again");
    let m = out.join("manifest.json");
    let o = nhlattice(&["run", "--config", m.to_str().unwrap(), "--out", again.to_str().unwrap()], tmp.path());
    assert!(o.status.success());
    assert_eq!(fs::read(out.join("reflection.csv")).unwrap(), fs::read(again.join("reflection.csv")).unwrap());
}

#[test]
fn mismatched_subcommand_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nhlattice(&["evolve", "--preset", "fig7a"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn invalid_configs_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = write_config(tmp.path(), "unknown.toml", &EMISSION.replace("[packet]", "[packet]\nwidth = 3"));
    let o = nhlattice(&["run", "--config", &unknown], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let missing = write_config(tmp.path(), "missing.toml", EMISSION.split("[packet]").next().unwrap());
    let o = nhlattice(&["run", "--config", &missing], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("packet"));
    let o = nhlattice(&["run", "--preset", "nope"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_and_contamination_failures_have_their_own_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let coarse = write_config(tmp.path(), "coarse.toml", &format!("{EMISSION}\n[run]\ndt = 0.05\n"));
    let o = nhlattice(&["evolve", "--config", &coarse], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    let late = write_config(tmp.path(), "late.toml", &format!("{EMISSION}\n[run]\nmeasure_time = 200.0\n"));
    let o = nhlattice(&["evolve", "--config", &late], tmp.path());
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn output_root_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("root");
    let o = Command::new(env!("CARGO_BIN_EXE_nhlattice"))
        .args(["scatter", "--preset", "fig7b"])
        .current_dir(tmp.path())
        .env("NHLATTICE_OUT", &root)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(root.join("fig7b").join("manifest.json").exists());

    let o = nhlattice(&["scatter", "--preset", "fig7b"], tmp.path());
    assert!(o.status.success());
    assert!(tmp.path().join("out").join("fig7b").join("manifest.json").exists());
}
