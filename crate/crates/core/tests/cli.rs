use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_clmm-backtest");

const CONFIG: &str = "\
lower = 1000
upper = 4000
buckets = 30
tau = 2
strategy = uniform
capital = 100000
fee_rate = 0.003
";

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_inputs(dir: &Path, config: &str, n: usize, hi_amp: f64) {
    std::fs::write(dir.join("run.cfg"), config).unwrap();
    let mut csv = String::from("ts,price\n");
    for i in 0..n {
        let p = 2500.0 + hi_amp * (i as f64 * 0.07).sin();
        csv.push_str(&format!("{},{}\n", 1_704_067_200 + i as i64 * 21_600, p));
    }
    std::fs::write(dir.join("prices.csv"), csv).unwrap();
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr_line(out: &Output) -> String {
    let text = String::from_utf8_lossy(&out.stderr).to_string();
    assert_eq!(text.trim_end().lines().count(), 1, "stderr: {text}");
    text.trim_end().to_string()
}

#[test]
fn backtest_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path(), CONFIG, 200, 800.0);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "backtest",
        "--config",
        path_str(&dir.path().join("run.cfg")),
        "--prices",
        path_str(&dir.path().join("prices.csv")),
        "--out-dir",
        path_str(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let report: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    for key in ["fees_total_b", "volume_total_b", "gas_cost_b", "epochs", "profit_rate", "bh_profit_rate"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    let epochs = report["epochs"].as_u64().unwrap() as usize;

    let traj = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    let mut lines = traj.lines();
    assert_eq!(lines.next(), Some("t,price,lp_value,bh_value"));
    assert_eq!(lines.count(), 200);

    let fees = std::fs::read_to_string(out_dir.join("fees_by_epoch.csv")).unwrap();
    assert_eq!(fees.lines().count(), epochs + 1);
    assert!(out_dir.join("states_summary.csv").exists());
    assert!(out_dir.join("monthly_fees.csv").exists());
}

#[test]
fn report_validates_against_schema() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path(), CONFIG, 150, 700.0);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "backtest",
        "--config",
        path_str(&dir.path().join("run.cfg")),
        "--prices",
        path_str(&dir.path().join("prices.csv")),
        "--out-dir",
        path_str(&out_dir),
    ]);
    assert!(out.status.success());

    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/report.schema.json");
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(schema_path).unwrap()).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).expect("schema compiles");
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    if let Err(errors) = compiled.validate(&report) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("schema violations: {msgs:?}");
    }

    // the schema has teeth
    let mut broken = report.clone();
    broken.as_object_mut().unwrap().remove("fees_total_b");
    assert!(!compiled.is_valid(&broken));
}

#[test]
fn report_subcommand_prints_fact_rows() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path(), CONFIG, 100, 500.0);
    let out_dir = dir.path().join("out");
    assert!(run(&[
        "backtest",
        "--config",
        path_str(&dir.path().join("run.cfg")),
        "--prices",
        path_str(&dir.path().join("prices.csv")),
        "--out-dir",
        path_str(&out_dir),
    ])
    .status
    .success());
    let out = run(&[
        "report",
        path_str(&out_dir.join("report.json")),
        "--fact-fee",
        "1000",
        "--fact-volume",
        "300000",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for row in ["W", "Cost", "Volume", "Fees", "fact", "error"] {
        assert!(text.contains(row), "{row} missing in\n{text}");
    }
    assert!(text.lines().any(|l| l.contains("error") && l.trim_end().ends_with('%')));
}

#[test]
fn calibrate_writes_curve_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path(), CONFIG, 200, 800.0);
    let out_dir = dir.path().join("cal");
    let (cfg, prices) = (dir.path().join("run.cfg"), dir.path().join("prices.csv"));
    let base = [
        "calibrate",
        "--config",
        path_str(&cfg),
        "--prices",
        path_str(&prices),
        "--out-dir",
        path_str(&out_dir),
        "--mu",
        "0.1",
        "--grid",
        "0.05:3:20",
    ];
    let mut args = base.to_vec();
    args.extend(["--target-fee", "1300"]);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let curve = std::fs::read_to_string(out_dir.join("fee_curve.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("variance,model_fee"));
    assert_eq!(curve.lines().count(), 21);
    let fit: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("calibration.json")).unwrap()).unwrap();
    assert!(fit["relative_error"].as_f64().unwrap() < 1e-3);

    let mut args = base.to_vec();
    args.extend(["--target-fee", "1e9"]);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr_line(&out).starts_with("error code=calibration.unreachable"));
}

#[test]
fn exit_codes_and_error_lines() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path(), CONFIG, 50, 500.0);
    let prices = dir.path().join("prices.csv");

    let bad_cfg = dir.path().join("bad.cfg");
    std::fs::write(&bad_cfg, CONFIG.replace("fee_rate = 0.003", "fee_rate = 1.5")).unwrap();
    let out = run(&["backtest", "--config", path_str(&bad_cfg), "--prices", path_str(&prices)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("error code=config.fee_rate "));

    let bad_prices = dir.path().join("bad.csv");
    std::fs::write(&bad_prices, "ts,price\n1,2000\n2,2500\n3,-1\n").unwrap();
    let out = run(&[
        "backtest",
        "--config",
        path_str(&dir.path().join("run.cfg")),
        "--prices",
        path_str(&bad_prices),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let line = stderr_line(&out);
    assert!(line.starts_with("error code=data.bad_price "), "{line}");
    assert!(line.contains("row 3"), "{line}");

    let outside = dir.path().join("outside.csv");
    std::fs::write(&outside, "price\n2000\n5000\n").unwrap();
    let cfg = path_str(&dir.path().join("run.cfg")).to_string();
    let out_dir = dir.path().join("o");
    let args = ["backtest", "--config", &cfg, "--prices", path_str(&outside), "--out-dir", path_str(&out_dir)];
    assert_eq!(run(&args).status.code(), Some(3));
    let mut clamp = args.to_vec();
    clamp.push("--clamp-prices");
    assert!(run(&clamp).status.success());

    let out = run(&["calibrate", "--config", &cfg, "--prices", path_str(&prices), "--target-fee", "1", "--mu", "0", "--grid", "1:2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("error code=config.invalid_value"));
}

#[test]
fn seed_flag_drives_random_strategy() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path(), &CONFIG.replace("strategy = uniform", "strategy = random\nseed = 3"), 200, 800.0);
    let fees = |seed: Option<&str>, name: &str| -> f64 {
        let out_dir = dir.path().join(name);
        let mut args = vec![
            "backtest".to_string(),
            "--config".into(),
            path_str(&dir.path().join("run.cfg")).into(),
            "--prices".into(),
            path_str(&dir.path().join("prices.csv")).into(),
            "--out-dir".into(),
            path_str(&out_dir).into(),
        ];
        if let Some(s) = seed {
            args.extend(["--seed".into(), s.into()]);
        }
        let out = Command::new(BIN).args(&args).output().unwrap();
        assert!(out.status.success());
        let r: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
        r["fees_total_b"].as_f64().unwrap()
    };
    let cfg_seed = fees(None, "a");
    assert_eq!(fees(Some("3"), "b"), cfg_seed);
    assert_ne!(fees(Some("4"), "c"), cfg_seed);
}
