use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_coop-fusion"));
    cmd.env_remove("COOP_FUSION_OUT");
    cmd
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SHORT: &str = "seed = 2\nduration = 40.0\nlaps = 1\n";

#[test]
fn run_writes_outputs() {
    let dir = TempDir::new().unwrap();
    let config = write(dir.path(), "c.toml", SHORT);
    let out = dir.path().join("out");
    let result = bin().args(["run", "--config", &config, "--out", out.to_str().unwrap()]).output().unwrap();
    assert_eq!(result.status.code(), Some(0), "{}", stderr(&result));
    for name in ["events.log", "report.txt", "effective_config.toml"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    assert_eq!(String::from_utf8(result.stdout).unwrap(), fs::read_to_string(out.join("report.txt")).unwrap());
}

#[test]
fn missing_field_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let config = write(dir.path(), "c.toml", "duration = 40.0\n");
    let result = bin().args(["run", "--config", &config, "--out", dir.path().to_str().unwrap()]).output().unwrap();
    assert_eq!(result.status.code(), Some(1));
    assert!(stderr(&result).contains("seed"), "{}", stderr(&result));

    let typo = write(dir.path(), "t.toml", "seed = 1\nduration = 4.0\n[vio_drift]\nxx = 1.0\n");
    let result = bin().args(["run", "--config", &typo, "--out", dir.path().to_str().unwrap()]).output().unwrap();
    assert_eq!(result.status.code(), Some(1));
    assert!(stderr(&result).contains("xx"), "{}", stderr(&result));
}

#[test]
fn scenario_failure_exits_two() {
    let dir = TempDir::new().unwrap();
    let config = write(dir.path(), "c.toml", &format!("{SHORT}abort_radius = 0.001\n"));
    let out = dir.path().join("out");
    let result = bin().args(["run", "--config", &config, "--out", out.to_str().unwrap()]).output().unwrap();
    assert_eq!(result.status.code(), Some(2), "{}", stderr(&result));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("failure=true\nfailure_reason=deviation"), "{report}");
}

#[test]
fn seed_override_and_env_out_dir() {
    let dir = TempDir::new().unwrap();
    let config = write(dir.path(), "c.toml", SHORT);
    let out = dir.path().join("from_env");
    let result =
        bin().env("COOP_FUSION_OUT", &out).args(["run", "--config", &config, "--seed", "11"]).output().unwrap();
    assert_eq!(result.status.code(), Some(0), "{}", stderr(&result));
    let effective = fs::read_to_string(out.join("effective_config.toml")).unwrap();
    assert!(effective.starts_with("seed = 11\n"), "{effective}");
    assert!(fs::read_to_string(out.join("events.log")).unwrap().starts_with("HDR 11 "));
}

#[test]
fn eval_matches_inline_report() {
    let dir = TempDir::new().unwrap();
    let config = write(dir.path(), "c.toml", SHORT);
    let out = dir.path().join("run");
    bin().args(["run", "--config", &config, "--out", out.to_str().unwrap()]).output().unwrap();
    let eval_out = dir.path().join("eval");
    let result = bin()
        .args(["eval", out.join("events.log").to_str().unwrap(), "--out", eval_out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(result.status.code(), Some(0), "{}", stderr(&result));
    assert_eq!(String::from_utf8(result.stdout).unwrap(), fs::read_to_string(out.join("report.txt")).unwrap());
    let csv = fs::read_to_string(eval_out.join("errors.csv")).unwrap();
    assert!(csv.starts_with("t,error_2d,error_3d,visible_flag\n"));
}

#[test]
fn truncated_log_reports_line() {
    let dir = TempDir::new().unwrap();
    let config = write(dir.path(), "c.toml", SHORT);
    let out = dir.path().join("run");
    bin().args(["run", "--config", &config, "--out", out.to_str().unwrap()]).output().unwrap();
    let text = fs::read_to_string(out.join("events.log")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let cut = write(dir.path(), "cut.log", &(lines[..100].join("\n") + "\n"));
    let result = bin().args(["eval", &cut, "--out", dir.path().to_str().unwrap()]).output().unwrap();
    assert_eq!(result.status.code(), Some(1));
    assert!(stderr(&result).contains("line 101"), "{}", stderr(&result));

    // a line cut mid-record
    let partial = write(dir.path(), "partial.log", &(lines[..50].join("\n") + "\nTRUTH 1.0 2"));
    let result = bin().args(["eval", &partial, "--out", dir.path().to_str().unwrap()]).output().unwrap();
    assert_eq!(result.status.code(), Some(1));
    assert!(stderr(&result).contains("line 51"), "{}", stderr(&result));
}

#[test]
fn sweep_grid_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let config = write(dir.path(), "c.toml", "seed = 3\nduration = 20.0\n");
    let sweep = |jobs: &str, out: &Path| {
        let result = bin()
            .args(["sweep", "--config", &config, "--param", "vio_drift.x", "--values", "0:0.2:0.1", "--runs", "2"])
            .args(["--jobs", jobs, "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(result.status.code(), Some(0), "{}", stderr(&result));
        fs::read_to_string(out.join("sweep.csv")).unwrap()
    };
    let a = sweep("1", &dir.path().join("a"));
    let b = sweep("3", &dir.path().join("b"));
    assert_eq!(a, b);
    let rows: Vec<&str> = a.lines().collect();
    assert_eq!(rows[0], "value,run,mean_path_deviation,rel_loc_rmse,failed");
    assert_eq!(rows.len(), 7);
    assert!(rows[1].starts_with("0,0,") && rows[6].starts_with("0.2,1,"), "{a}");
}

#[test]
fn sweep_rejects_unknown_parameter() {
    let dir = TempDir::new().unwrap();
    let config = write(dir.path(), "c.toml", SHORT);
    let result = bin()
        .args(["sweep", "--config", &config, "--param", "vio_drift.w", "--values", "0.1", "--runs", "1"])
        .args(["--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(result.status.code(), Some(1));
    assert!(stderr(&result).contains("`w`"), "{}", stderr(&result));
}

#[test]
fn example_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        let dir = TempDir::new().unwrap();
        // a one-second run is enough to validate the file
        let text = fs::read_to_string(&path).unwrap().replace("duration = ", "duration = 1.0\n# was ");
        let config = write(dir.path(), "c.toml", &text);
        let result = bin().args(["run", "--config", &config, "--out", dir.path().to_str().unwrap()]).output().unwrap();
        assert_eq!(result.status.code(), Some(0), "{}: {}", path.display(), stderr(&result));
    }
}
