//! End-to-end runs of the binary: exit codes, output files, manifests and
//! replay.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fraclt"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fraclt-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn identity_suite_passes_and_reports_every_check() {
    let dir = scratch("lemmas");
    let o = run(&["verify", "--suite", "lemmas"], &dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&dir.join("verify_report.json"));
    let checks = report.as_array().unwrap();
    assert!(!checks.is_empty());
    assert!(checks.iter().all(|c| c["pass"] == true && c["check"].is_string()));
    assert!(dir.join("manifest.json").exists());
}

#[test]
fn simulate_replay_is_byte_identical() {
    let first = scratch("sim-a");
    let o = run(&["simulate", "--kind", "subfbm", "--H", "0.4", "--d", "2", "--paths", "3", "--steps", "64", "--seed", "11"], &first);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let second = scratch("sim-b");
    let o = bin().arg("replay").arg(first.join("manifest.json")).arg("--out").arg(&second).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["paths.csv", "paths.bin"] {
        assert_eq!(std::fs::read(first.join(f)).unwrap(), std::fs::read(second.join(f)).unwrap(), "{f}");
    }
    let (a, b) = (json(&first.join("manifest.json")), json(&second.join("manifest.json")));
    assert_eq!(a["outputs"], b["outputs"]);
    assert_eq!(a["config"], b["config"]);
}

#[test]
fn manifest_digests_match_written_files() {
    let dir = scratch("digest");
    let o = run(&["moment", "--kind", "fbm", "--H", "0.5", "--alpha", "1", "--eps-ladder", "0.1:0.5:2"], &dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&dir.join("manifest.json"));
    let outputs = m["outputs"].as_object().unwrap();
    assert!(outputs.contains_key("moment.csv"));
    for (name, digest) in outputs {
        let bytes = std::fs::read(dir.join(name)).unwrap();
        assert_eq!(&sha256_hex(&bytes), digest.as_str().unwrap(), "{name}");
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = scratch("badcfg");
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, "kind = \"fbm\"\nH = 0.4\nbogus_key = 3\n").unwrap();
    let o = run(&["moment", "--config", cfg.to_str().unwrap()], &dir);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus_key"));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = scratch("override");
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, "kind = \"fbm\"\nH = 0.4\nalpha = [1.0]\n[eps_ladder]\nstart = 0.2\nfactor = 0.5\ncount = 2\n").unwrap();
    let o = run(&["moment", "--config", cfg.to_str().unwrap(), "--H", "0.6"], &dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&dir.join("manifest.json"));
    assert_eq!(m["config"]["hurst"], 0.6);
    assert_eq!(m["config"]["eps_ladder"]["start"], 0.2);
}

#[test]
fn unresolved_grid_is_refused() {
    let dir = scratch("unresolved");
    let o = run(&["localtime", "--H", "0.3", "--alpha", "0.5", "--steps", "64", "--paths", "4", "--eps-ladder", "1e-3:0.5:2"], &dir);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--allow-unresolved"));
}

#[test]
fn off_origin_fit_needs_an_integer_component() {
    let dir = scratch("part3");
    let o = run(&["rate", "--regime", "part3", "--kind", "subfbm", "--H", "0.6", "--alpha", "0.5", "--x", "0.5"], &dir);
    assert_eq!(code(&o), 2);
}

#[test]
fn failed_fit_exits_one_and_still_writes_its_report() {
    // the wedge channel does not reach its printed exponent on this ladder
    let dir = scratch("part2");
    let o = run(&["rate", "--regime", "part2", "--kind", "fbm", "--H", "0.6", "--d", "2", "--alpha", "0"], &dir);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    let fit = json(&dir.join("rate_fit.json"));
    assert_eq!(fit["fit"]["pass"], false);
    assert!(dir.join("manifest.json").exists());
}

#[test]
fn low_dimension_fit_passes() {
    let dir = scratch("part1");
    let o = run(&["rate", "--regime", "part1", "--kind", "fbm", "--H", "0.5", "--alpha", "1"], &dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fit = json(&dir.join("rate_fit.json"));
    assert!((fit["fit"]["slope"].as_f64().unwrap() + 0.5).abs() <= 0.15);
}

#[test]
fn bad_subcommand_and_missing_parameter_exit_two() {
    let dir = scratch("bad");
    assert_eq!(code(&bin().arg("nonsense").output().unwrap()), 2);
    let o = run(&["moment", "--kind", "bifbm", "--H0", "0.5"], &dir);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("K0"));
}
