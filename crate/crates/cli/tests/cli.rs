use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fbac(args: &[&str], out_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fbac"));
    cmd.args(args);
    if let Some(d) = out_dir {
        cmd.env("FBAC_OUTPUT_DIR", d);
    }
    cmd.output().expect("spawn fbac")
}

fn stdout_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stdout);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {text}"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn report_on_empty_directory_names_missing_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let cfg = write_config(
        tmp.path(),
        "report.toml",
        &format!("command = \"report\"\n[report]\ninputs = [{:?}]\n", empty.display().to_string()),
    );
    let o = fbac(&["run", cfg.to_str().unwrap()], Some(&tmp.path().join("out")));
    assert_eq!(o.status.code(), Some(1));
    let j = stdout_json(&o);
    assert_eq!(j["status"], "error");
    assert_eq!(j["kind"], "missing_inputs");
    let msgs = j["messages"].as_array().unwrap();
    assert!(msgs.iter().any(|m| m.as_str().unwrap().contains("empty")), "{j}");
}

#[test]
fn shipped_configs_validate() {
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().and_then(|e| e.to_str()) != Some("toml") || p.file_name().unwrap() == "manifest.toml" {
            continue;
        }
        let o = fbac(&["validate", p.to_str().unwrap()], None);
        assert_eq!(o.status.code(), Some(0), "{}: {}", p.display(), String::from_utf8_lossy(&o.stdout));
        assert_eq!(stdout_json(&o)["violations"], serde_json::json!([]));
    }
}

#[test]
fn unresolvable_band_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "rec.toml",
        r#"
command = "recovery"
epsilon_list = [0.04]
shape = { type = "disc", center = [0.5, 0.5], radius = 0.25 }
[grid]
extents = [[0.0, 1.0], [0.0, 1.0]]
cells_per_epsilon = 1.5
"#,
    );
    let o = fbac(&["validate", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    let j = stdout_json(&o);
    assert_eq!(j["kind"], "validation");
    assert!(j["messages"][0].as_str().unwrap().contains("band unresolvable"));

    // run refuses before touching the output directory
    let out = tmp.path().join("out");
    let o = fbac(&["run", cfg.to_str().unwrap()], Some(&out));
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.join("verdicts.json").exists());
}

#[test]
fn malformed_config_is_rejected_with_json() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "command = \"sweep\"\nepsilonn = 0.1\n");
    let o = fbac(&["run", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout_json(&o)["kind"], "validation");
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn flat_sweep_writes_energy_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let cfg = configs_dir().join("discrepancy_decay.toml");
    let o = fbac(&["run", cfg.to_str().unwrap()], Some(&out));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));

    let (header, rows) = read_csv(&out.join("sweep.csv"));
    for col in ["epsilon", "total", "dirichlet", "potential", "discrepancy_l1", "modica_violation"] {
        assert!(header.iter().any(|h| h == col), "missing column {col}");
    }
    assert_eq!(rows.len(), 3);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let eps: Vec<f64> = rows.iter().map(|r| r[col("epsilon")].parse().unwrap()).collect();
    assert_eq!(eps, vec![0.08, 0.04, 0.02]);
    let disc: Vec<f64> = rows.iter().map(|r| r[col("discrepancy_l1")].parse().unwrap()).collect();
    assert!(disc.windows(2).all(|w| w[1] < w[0]), "{disc:?}");
    for r in &rows {
        let total: f64 = r[col("total")].parse().unwrap();
        // one flat interface across the unit square
        assert!((total - 4.0).abs() < 0.2, "{total}");
        assert_eq!(r[col("status")], "ok");
    }
    for k in 0..3 {
        assert!(out.join(format!("rows/{k}/field.bin")).exists());
    }
}

#[test]
fn disc_recovery_final_gap_is_small() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("rec");
    let cfg = write_config(
        tmp.path(),
        "rec.toml",
        r#"
command = "recovery"
epsilon_list = [0.04, 0.02]
shape = { type = "disc", center = [0.5, 0.5], radius = 0.25 }
[grid]
extents = [[0.0, 1.0], [0.0, 1.0]]
cells_per_epsilon = 8
"#,
    );
    let o = fbac(&["run", cfg.to_str().unwrap()], Some(&out));
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = read_csv(&out.join("limsup.csv"));
    let gap = header.iter().position(|h| h == "relative_gap").unwrap();
    let last: f64 = rows.last().unwrap()[gap].parse().unwrap();
    assert!(last <= 0.05, "{last}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("gamma_audits.toml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(fbac(&["run", cfg.to_str().unwrap()], Some(&a)).status.code(), Some(0));
    assert_eq!(fbac(&["run", cfg.to_str().unwrap()], Some(&b)).status.code(), Some(0));
    let da = fbac_cli::report::digest_dir(&a).unwrap();
    let db = fbac_cli::report::digest_dir(&b).unwrap();
    assert!(!da.is_empty());
    assert_eq!(da, db);
    assert!(!da.contains_key("run.log"));
}

#[test]
fn report_aggregates_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("runs/sheet_density");
    let o = fbac(&["run", configs_dir().join("sheet_density.toml").to_str().unwrap()], Some(&run_dir));
    assert_eq!(o.status.code(), Some(0));
    let cfg = write_config(
        tmp.path(),
        "report.toml",
        &format!(
            "command = \"report\"\n[report]\ninputs = [{:?}]\nexpect = [\"sheet_density\"]\n",
            tmp.path().join("runs").display().to_string()
        ),
    );
    let out = tmp.path().join("report");
    let o = fbac(&["run", cfg.to_str().unwrap()], Some(&out));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let sd = report["criteria"].as_array().unwrap().iter().find(|c| c["criterion"] == "sheet_density").unwrap();
    assert_eq!(sd["evaluated"], true);
    assert_eq!(sd["passed"], true);
}
