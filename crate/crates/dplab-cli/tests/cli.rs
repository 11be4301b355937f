//! End-to-end command tests: exit codes, determinism, file outputs.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_dplab")
}

fn tempdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dplab-cli-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn run(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(bin())
        .args(args)
        .env("DPLB_OUT", out)
        .output()
        .expect("binary runs")
}

#[test]
fn geometry_reruns_byte_identical() {
    let dir = tempdir("geom");
    let cfg = dir.join("chess.toml");
    write(
        &cfg,
        r#"
[geometry]
model = "chess_percolation"
mu = 0.3
lattice_size = 32
seed = 1

[raster]
resolution = 64
"#,
    );
    let out1 = dir.join("a");
    let out2 = dir.join("b");
    for out in [&out1, &out2] {
        let st = run(&["geometry", "--config", cfg.to_str().unwrap()], out);
        assert!(st.status.success(), "stderr: {}", String::from_utf8_lossy(&st.stderr));
    }
    for name in ["geometry.json", "indicator.dplb", "separation.csv"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
}

#[test]
fn missing_field_exits_config_error() {
    let dir = tempdir("badcfg");
    let cfg = dir.join("bad.toml");
    // rsa without intensity
    write(
        &cfg,
        r#"
[geometry]
model = "hard_discs_rsa"
radius = 0.05
margin = 1.0

[raster]
resolution = 64
"#,
    );
    let st = run(&["geometry", "--config", cfg.to_str().unwrap()], &dir.join("out"));
    assert_eq!(st.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&st.stderr);
    assert!(msg.contains("intensity"), "diagnostic should name the field: {msg}");

    // syntactically broken file carries line diagnostics
    write(&cfg, "[geometry\nmodel=");
    let st = run(&["geometry", "--config", cfg.to_str().unwrap()], &dir.join("out"));
    assert_eq!(st.status.code(), Some(2));

    // no config at all
    let st = run(&["cell"], &dir.join("out"));
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn disconnected_complement_exits_invariant_failure() {
    let dir = tempdir("disc");
    let cfg = dir.join("poisson.toml");
    // dense tangent packing: the raster complement splits into pockets
    write(
        &cfg,
        r#"
[geometry]
model = "poisson_halfgap"
intensity = 50.0
seed = 3

[raster]
resolution = 256

[cell]
resolution = 256
"#,
    );
    let st = run(&["cell", "--config", cfg.to_str().unwrap()], &dir.join("out"));
    assert_eq!(st.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&st.stderr));
    assert!(String::from_utf8_lossy(&st.stderr).contains("disconnected"));
}

#[test]
fn sweep_reproducible_outputs() {
    let dir = tempdir("sweep");
    let cfg = dir.join("sweep.toml");
    write(
        &cfg,
        r#"
[geometry]
model = "manual_disc"
center = [0.3, 0.65]
radius = 0.25

[sweep]
eps = [0.25, 0.125, 0.0625]
resolution = 128
domain = "box"
forcing = "sine"
"#,
    );
    let out1 = dir.join("a");
    let out2 = dir.join("b");
    for out in [&out1, &out2] {
        let st = run(
            &["sweep", "--config", cfg.to_str().unwrap(), "--reproducible"],
            out,
        );
        assert!(st.status.success(), "stderr: {}", String::from_utf8_lossy(&st.stderr));
    }
    for name in ["sweep.csv", "sweep.json", "sweep.svg"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
    // sanity: the fitted slope lands in the boundary-layer band
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out1.join("sweep.json")).unwrap()).unwrap();
    let slope = json["fit"]["slope"].as_f64().unwrap();
    assert!((0.3..0.9).contains(&slope), "unexpected slope {slope}");
}

#[test]
fn solve_writes_fields_and_summary() {
    let dir = tempdir("solve");
    let cfg = dir.join("solve.toml");
    write(
        &cfg,
        r#"
[geometry]
model = "periodic_lattice"
radius = 0.25

[solve]
eps = 0.125
resolution = 128
domain = "box"
forcing = "sine"
with_errors = true
"#,
    );
    let out = dir.join("out");
    let st = run(&["solve", "--config", cfg.to_str().unwrap()], &out);
    assert!(st.status.success(), "stderr: {}", String::from_utf8_lossy(&st.stderr));
    for name in ["u_eps.dpgf", "u_eps.csv", "solve_summary.json"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("solve_summary.json")).unwrap()).unwrap();
    assert_eq!(json["kept_inclusions"], 64);
    assert!(json["errors"]["combined"].as_f64().unwrap() > 0.0);
}

#[test]
fn ensemble_sweep_aggregates() {
    let dir = tempdir("enssweep");
    let cfg = dir.join("ens.toml");
    // coarse but resolvable random discs
    write(
        &cfg,
        r#"
[geometry]
model = "hard_discs_rsa"
intensity = 1.0
radius = 0.26
margin = 0.5
seed = 4

[sweep]
eps = [0.25, 0.125, 0.0625]
resolution = 128
domain = "box"
forcing = "sine"
ensemble = 3
"#,
    );
    let out = dir.join("out");
    let st = run(&["sweep", "--config", cfg.to_str().unwrap()], &out);
    assert!(st.status.success(), "stderr: {}", String::from_utf8_lossy(&st.stderr));
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("sweep_ensemble.json")).unwrap())
            .unwrap();
    assert_eq!(json["slopes"].as_array().unwrap().len(), 3);
    assert_eq!(json["mean_combined"].as_array().unwrap().len(), 3);
}

#[test]
fn verify_quick_reports_known_red() {
    let dir = tempdir("verify");
    let st = run(&["verify", "--quick"], &dir);
    // the suite carries one known-red trend criterion, so verify exits 1
    assert_eq!(st.status.code(), Some(1));
    let out = String::from_utf8_lossy(&st.stdout);
    assert_eq!(out.matches("[pass]").count(), 13, "table:\n{out}");
    assert!(out.contains("criterion 13 [FAIL]"), "table:\n{out}");
    assert!(dir.join("verify.json").exists());
}

#[test]
fn extlab_survey_writes_table() {
    let dir = tempdir("extlab");
    let cfg = dir.join("ext.toml");
    write(
        &cfg,
        r#"
[geometry]
model = "periodic_lattice"
radius = 0.25

[extlab]
p = [2.0, 1.3333333333333333]
resolutions = [32, 64]
trials = 4
"#,
    );
    let out = dir.join("out");
    let st = run(&["extlab", "--config", cfg.to_str().unwrap()], &out);
    assert!(st.status.success(), "stderr: {}", String::from_utf8_lossy(&st.stderr));
    let table = std::fs::read_to_string(out.join("extension_constants.csv")).unwrap();
    assert!(table.contains("family,p,resolution,constant"));
    assert_eq!(table.lines().filter(|l| l.starts_with("periodic_lattice")).count(), 4);
    assert!(table.contains("trend data"));
}
