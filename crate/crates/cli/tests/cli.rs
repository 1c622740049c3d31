use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_spt-decomp");

const GBM_CONFIG: &str = r#"
[market]
source = "gbm"
initial_caps = [50.0, 100.0, 200.0, 400.0, 800.0]
variance = 0.04
steps = 252

[portfolio]
rule = "entropy"

[experiment]
refinements = [252, 504, 1008]
seeds = [1, 2]
format = "both"
output = "out"

[leapfrog]
caps = [500.0, 400.0, 300.0, 200.0, 100.0]
m = 3
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], config: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(config)
        .env("SPT_DECOMP_THREADS", "2")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn simulate_writes_one_row_per_stock_and_date() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), GBM_CONFIG);
    let out = run(&["simulate", "--seed", "7"], &cfg);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("out/market_seed7.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("date,ticker,cap"));
    assert_eq!(lines.count(), 5 * 253);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), GBM_CONFIG);
    for (cmd, file) in [
        ("simulate", "market_seed1.csv"),
        ("decompose", "decomposition_seed2.json"),
        ("leapfrog", "leapfrog.csv"),
    ] {
        let a = tmp.path().join("a");
        let b = tmp.path().join("b");
        for dir in [&a, &b] {
            let out = run(&[cmd, "--out", dir.to_str().unwrap()], &cfg);
            assert!(out.status.success(), "{cmd}: {}", stdout(&out));
        }
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn decompose_reports_generator_paths_and_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), GBM_CONFIG);
    let out = run(&["decompose", "--seed", "3"], &cfg);
    assert!(out.status.success());
    assert!(stdout(&out).contains("[PASS] decomposition_seed3"));
    let csv = fs::read_to_string(tmp.path().join("out/decomposition_seed3.csv")).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("time,rel,structural,trading,drift,generator_log_change")
    );
    assert_eq!(csv.lines().count(), 254);
}

#[test]
fn csv_market_round_trips_through_decompose() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), GBM_CONFIG);
    assert!(run(&["simulate", "--seed", "5"], &cfg).status.success());

    let csv_cfg = r#"
[market]
source = "csv"
path = "out/market_seed5.csv"

[portfolio]
rule = "diversity:p=0.5"

[experiment]
format = "json"
output = "from_csv"
"#;
    let path = tmp.path().join("csv.toml");
    fs::write(&path, csv_cfg).unwrap();
    let out = run(&["decompose"], &path);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("from_csv/decomposition.json")).unwrap())
            .unwrap();
    assert_eq!(doc["grid"].as_array().unwrap().len(), 253);
    assert_eq!(doc["meta"]["stocks"], 5);
    assert!(doc["diagnostics"]["identity_residual"].as_f64().unwrap() < 1e-12);
}

#[test]
fn convergence_and_leapfrog_pass_their_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), GBM_CONFIG);
    for cmd in ["convergence", "leapfrog"] {
        let out = run(&[cmd], &cfg);
        assert!(out.status.success(), "{cmd}: {}", stdout(&out));
        assert!(!stdout(&out).contains("[FAIL]"));
    }
    assert!(tmp.path().join("out/convergence_table.csv").exists());
    assert!(tmp.path().join("out/convergence_summary.json").exists());
}

#[test]
fn invalid_config_exits_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &GBM_CONFIG.replace("m = 3", "m = 6"));
    let out = run(&["leapfrog"], &cfg);
    assert_eq!(out.status.code(), Some(2));

    let cfg = write_config(tmp.path(), &GBM_CONFIG.replace("entropy", "nonsense"));
    assert_eq!(run(&["decompose"], &cfg).status.code(), Some(2));

    let cfg = write_config(tmp.path(), &format!("{GBM_CONFIG}\nunknown_key = 1\n"));
    assert_eq!(run(&["simulate"], &cfg).status.code(), Some(2));
}

#[test]
fn bad_csv_row_exits_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("caps.csv"),
        "date,ticker,cap\n2020-01-01,A,1\n2020-01-01,B,2\n2020-01-02,A,0\n2020-01-02,B,2\n",
    )
    .unwrap();
    let cfg = write_config(
        tmp.path(),
        "[market]\nsource = \"csv\"\npath = \"caps.csv\"\n\n[portfolio]\nrule = \"entropy\"\n",
    );
    let out = run(&["decompose"], &cfg);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 4"));
}

#[test]
fn missing_input_exits_with_code_4() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["simulate"], &tmp.path().join("absent.toml"));
    assert_eq!(out.status.code(), Some(4));
}
