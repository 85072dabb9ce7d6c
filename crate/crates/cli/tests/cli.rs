use std::path::Path;
use std::process::{Command, Output};

use fesim_cli::{RunManifest, MANIFEST_FILE};
use fesim_core::channel_sim::register_names;

const SMALL_SCAN: &str = r#"
seed = 11
rc_code = 3

[threshold_scan]
charges_fc = [1.0, 2.0]
window = { half_width_mv = 6.0, points = 9 }
n_inj = 300

[time_walk]
charges_fc = [1.5, 4.0]
threshold_fc = 1.0
n_inj = 50
"#;

const SMALL_SWEEP: &str = r#"
[sweep]
tp_ns = { start = 3.0, stop = 9.0, step = 0.5 }
c_pf = [3.0, 5.0]
i_ua = [1.0, 2.0]
"#;

fn fesim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fesim"))
        .args(args)
        .current_dir(dir)
        .env_remove("FESIM_OUT_DIR")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn presets_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fesim(&["presets"], tmp.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["fig1", "fig2", "fig3", "fig4", "fig9", "fig10", "fig11", "fig12"] {
        assert!(text.lines().any(|l| l == name), "{name} missing");
    }
}

#[test]
fn enc_sweep_grid_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "sweep.toml", SMALL_SWEEP);
    let o = fesim(&["enc-sweep", "--config", &cfg, "--out", "out"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = tmp.path().join("out");
    let mut rdr = csv::Reader::from_path(out.join("enc_grid.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["w_um", "l_um", "id_ma", "tp_ns", "c_pf", "i_ua", "enc_p", "enc_s", "enc_tot"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 13 * 2 * 2);
    for r in &rows {
        let p: f64 = r[6].parse().unwrap();
        let s: f64 = r[7].parse().unwrap();
        let t: f64 = r[8].parse().unwrap();
        assert!((t - p.hypot(s)).abs() < 1e-6 * t);
    }
    let summary: serde_json::Value = serde_json::from_slice(&read(&out, "enc_summary.json")).unwrap();
    assert_eq!(summary["optima"].as_array().unwrap().len(), 4);
    let m = RunManifest::read(&out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.command, "enc-sweep");
    assert_eq!(m.outputs.len(), 2);
}

#[test]
fn scan_is_deterministic_and_independent_of_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "scan.toml", SMALL_SCAN);
    let a = fesim(&["scan", "--config", &cfg, "--out", "a", "--jobs", "1"], tmp.path());
    let b = fesim(&["scan", "--config", &cfg, "--out", "b", "--jobs", "4"], tmp.path());
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(b.status.success(), "{}", stderr(&b));
    let m = RunManifest::read(&tmp.path().join("a").join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.seed, 11);
    assert!(m.outputs.iter().any(|f| f.path == "scurve_rc3_q1.00.csv"));
    assert!(m.outputs.iter().any(|f| f.path == "time_walk.json"));
    for f in &m.outputs {
        assert_eq!(
            read(&tmp.path().join("a"), &f.path),
            read(&tmp.path().join("b"), &f.path),
            "{}",
            f.path
        );
    }
    assert_eq!(
        read(&tmp.path().join("a"), MANIFEST_FILE),
        read(&tmp.path().join("b"), MANIFEST_FILE)
    );
}

#[test]
fn seed_flag_changes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "scan.toml", SMALL_SCAN);
    assert!(fesim(&["scan", "--config", &cfg, "--out", "a"], tmp.path())
        .status
        .success());
    assert!(
        fesim(&["scan", "--config", &cfg, "--out", "b", "--seed", "12"], tmp.path())
            .status
            .success()
    );
    let f = "scurve_rc3_q1.00.csv";
    assert_ne!(read(&tmp.path().join("a"), f), read(&tmp.path().join("b"), f));
    let m = RunManifest::read(&tmp.path().join("b").join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.seed, 12);
}

#[test]
fn json_format_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "scan.toml", SMALL_SCAN);
    let o = fesim(
        &["scan", "--config", &cfg, "--out", "j", "--format", "json"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&read(&tmp.path().join("j"), "scurve_rc3_q2.00.json")).unwrap();
    let text = v.to_string();
    for key in ["\"x\"", "\"y\"", "\"y_err\""] {
        assert!(text.contains(key), "{key} missing from {text:.200}");
    }
}

#[test]
fn rerun_reproduces_and_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "scan.toml", SMALL_SCAN);
    assert!(fesim(&["scan", "--config", &cfg, "--out", "first"], tmp.path())
        .status
        .success());
    let manifest = "first/manifest.json";
    let o = fesim(&["rerun", manifest, "--out", "again"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));

    let mut m = RunManifest::read(&tmp.path().join(manifest)).unwrap();
    m.outputs[0].sha256 = "0".repeat(64);
    m.write(&tmp.path().join("first")).unwrap();
    let o = fesim(&["rerun", manifest, "--out", "third"], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("differs"));
}

#[test]
fn registers_dump_load_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fesim(&["registers", "dump", "--preset", "fig9", "--out", "d"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(read(&tmp.path().join("d"), "registers.toml")).unwrap();
    let table: toml::Table = toml::from_str(&text).unwrap();
    let regs = table["registers"].as_table().unwrap();
    assert_eq!(regs.len(), 15);
    let mut expected = register_names();
    expected.sort();
    assert_eq!(regs.keys().cloned().collect::<Vec<_>>(), expected);

    let o = fesim(
        &[
            "registers",
            "load",
            "d/registers.toml",
            "--preset",
            "fig9",
            "--out",
            "l",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = fesim(
        &["registers", "dump", "--config", "l/config.toml", "--out", "d2"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        read(&tmp.path().join("d"), "registers.toml"),
        read(&tmp.path().join("d2"), "registers.toml")
    );
}

#[test]
fn register_errors_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let name = register_names().into_iter().next().unwrap();
    write(tmp.path(), "range.toml", &format!("[registers]\n{name} = 256\n"));
    let o = fesim(&["registers", "load", "range.toml", "--out", "o"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains(&name));

    write(tmp.path(), "unknown.toml", "[registers]\nNOT_A_REGISTER = 1\n");
    let o = fesim(&["registers", "load", "unknown.toml", "--out", "o"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("NOT_A_REGISTER"));
}

#[test]
fn malformed_config_reports_location() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "seed = 3\n\n[sweep]\ntp_ns = [4.0, 5.0\n");
    let o = fesim(&["enc-sweep", "--config", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("bad.toml") && e.contains("line 4"), "{e}");

    let cfg = write(
        tmp.path(),
        "typo.toml",
        "[sweep]\ntp_ns = [4.0]\nc_pf = [1.0]\ni_ua = [1.0]\nshape = 2\n",
    );
    let o = fesim(&["enc-sweep", "--config", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("shape"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: &[&[&str]] = &[
        &["frobnicate"],
        &["enc-sweep", "--preset", "fig99"],
        &["enc-sweep", "--preset", "fig3", "--config", "x.toml"],
        &["enc-sweep", "--jobs", "0", "--preset", "fig3"],
        &["enc-sweep", "--config", "missing.toml"],
        &["scan", "--preset", "fig3"],
        &["enc-sweep", "--format", "xml", "--preset", "fig3"],
    ];
    for args in cases {
        let o = fesim(args, tmp.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(!stderr(&o).is_empty());
    }
}

#[test]
fn physics_failure_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    // every charge below threshold: the walk measurement cannot run
    let cfg = write(
        tmp.path(),
        "walk.toml",
        "[time_walk]\ncharges_fc = [0.2, 0.3]\nthreshold_fc = 1.0\nn_inj = 10\n",
    );
    let o = fesim(&["scan", "--config", &cfg, "--out", "o"], tmp.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let cfg = write(
        tmp.path(),
        "quiet.toml",
        "[noise_scan]\nthresholds_mv = [50.0, 60.0, 70.0]\nduration_ns = 1000.0\n",
    );
    let o = fesim(&["scan", "--config", &cfg, "--out", "o"], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("Rice fit"));
}

#[test]
fn out_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fesim"))
        .args(["registers", "dump"])
        .current_dir(tmp.path())
        .env("FESIM_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("from-env/registers.toml").exists());
}
