use std::path::Path;
use std::process::Command;

use perfhom::config::ExperimentConfig;
use perfhom::report::emit_plot_data;
use perfhom::runner::execute;

const EMPTY_CELL: &str = r#"
experiment = "cell_only"
n = 8

[geometry]
c0 = 0.2

[weight]
mode = "ground_state"
"#;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_perfhom"))
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn cell_only_empty_cell_reports_identity() {
    let cfg = ExperimentConfig::from_toml(EMPTY_CELL).unwrap();
    let (report, _) = execute(&cfg).unwrap();
    let a = report.cell.a_hat;
    assert!((a[0][0] - 1.0).abs() < 1e-12 && (a[1][1] - 1.0).abs() < 1e-12);
    assert!(a[0][1].abs() < 1e-12 && a[1][0].abs() < 1e-12);
    assert!(report.series().is_empty());
    let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(json["convergence"]["status"], "skipped");
    assert_eq!(json["spectrum"]["status"], "skipped");

    // The distance weight of an empty cell is c0/2, so Â scales by (c0/2)².
    let distance = ExperimentConfig::from_toml(&EMPTY_CELL.replace("ground_state", "distance_type")).unwrap();
    let (report, _) = execute(&distance).unwrap();
    assert!((report.cell.a_hat[0][0] - 0.01).abs() < 1e-14);
}

#[test]
fn run_writes_report_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let text = perfhom::check::BENCHMARK_CONFIG.replace("n = 16", "n = 8").replace("0.25, 0.125, 0.0625, 0.03125", "0.5, 0.25, 0.125, 0.0625");
    let config = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let status = binary().args(["run"]).arg(&config).arg("--out").arg(&out).args(["--workers", "2"]).status().unwrap();
    assert!(status.success());
    let grad = std::fs::read_to_string(out.join("converge_grad.csv")).unwrap();
    assert_eq!(grad.lines().count(), 5);
    assert_eq!(grad.lines().next(), Some("epsilon,value"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["convergence"]["result"]["slope_grad"]["slope"].is_f64());
    assert_eq!(report["probes"]["status"], "skipped");
    assert!(!out.join("spectrum_r1.csv").exists());
    assert!(out.join("timings.json").exists());

    // The echoed config reproduces the run.
    let echoed: ExperimentConfig = serde_json::from_value(report["config"].clone()).unwrap();
    let again = dir.path().join("again");
    let (rerun, _) = execute(&echoed).unwrap();
    emit_plot_data(&rerun, &again).unwrap();
    assert_eq!(std::fs::read_to_string(again.join("converge_grad.csv")).unwrap(), grad);
    assert_eq!(rerun.to_json(), std::fs::read_to_string(out.join("report.json")).unwrap());
}

#[test]
fn invalid_epsilon_gives_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let text = perfhom::check::BENCHMARK_CONFIG.replace("0.125", "0.3");
    let config = write_config(dir.path(), &text);
    let output = binary().arg("run").arg(&config).arg("--out").arg(dir.path().join("out")).output().unwrap();
    assert!(!output.status.success());
    let record: serde_json::Value = serde_json::from_slice(&output.stderr).unwrap();
    assert_eq!(record["error"], "ConfigValidationError");
    assert_eq!(record["field"], "epsilons");
}

#[test]
fn unparsable_config_gives_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "experiment = [");
    let output = binary().arg("cell").arg(&config).output().unwrap();
    assert!(!output.status.success());
    let record: serde_json::Value = serde_json::from_slice(&output.stderr).unwrap();
    assert_eq!(record["error"], "ConfigParseError");
}

#[test]
fn cell_command_skips_ladder_stages() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), perfhom::check::BENCHMARK_CONFIG);
    let out = dir.path().join("cell");
    let status = binary().arg("cell").arg(&config).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["convergence"]["status"], "skipped");
    assert!(report["cell"]["a_hat"][0][0].as_f64().unwrap() > 0.0);
    assert!(!out.join("converge_grad.csv").exists());
}

#[test]
fn check_runs_selected_items() {
    let output = binary().args(["check", "--only", "1,3"]).output().unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 2);
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 3);
}
