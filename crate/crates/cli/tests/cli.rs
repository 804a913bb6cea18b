//! End-to-end CLI behaviour: artifact layout, determinism and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run_cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qnbm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qnbm_cli_{tag}_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn synth_config(out: &Path, n_days: usize, seed: u64) -> serde_json::Value {
    serde_json::json!({
        "out": out,
        "synth": { "n_days": n_days, "spec": { "seed": seed, "a": 0.05, "b": -0.03 } }
    })
}

#[test]
fn synth_writes_hourly_rows_and_sidecar() {
    let dir = temp_dir("synth");
    let out = dir.join("data");
    let config = write_json(&dir, "synth.json", &synth_config(&out, 30, 3));
    let result = run_cli(&["synth", "--config", config.to_str().unwrap()]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));

    let csv = std::fs::read_to_string(out.join("synthetic.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 30 * 24);
    assert!(csv.starts_with("timestamp,price,load_fcst,wind_fcst,solar_fcst"));
    assert!(out.join("synthetic_spec.json").exists());
    assert!(out.join("run_manifest.json").exists());
}

#[test]
fn synth_same_seed_is_byte_identical() {
    let dir = temp_dir("synth_det");
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    let config_a = write_json(&dir, "a.json", &synth_config(&out_a, 32, 9));
    let config_b = write_json(&dir, "b.json", &synth_config(&out_b, 32, 9));
    assert!(run_cli(&["synth", "--config", config_a.to_str().unwrap()]).status.success());
    assert!(run_cli(&["synth", "--config", config_b.to_str().unwrap()]).status.success());
    let a = std::fs::read(out_a.join("synthetic.csv")).unwrap();
    let b = std::fs::read(out_b.join("synthetic.csv")).unwrap();
    assert_eq!(a, b);
}

fn small_train_config(dir: &Path, data_csv: &Path, out: &Path) -> serde_json::Value {
    serde_json::json!({
        "out": out,
        "seed": 11,
        "data": { "csv": data_csv },
        "window": { "price_lag_days": [1] },
        "qnbm": {
            "n_units": 8, "n_basis": 4, "rank_shape": 2, "rank_head": 4,
            "quantile_levels": [0.1, 0.5, 0.9]
        },
        "train": { "max_epochs": 3, "patience": 3, "learning_rate": 1e-3 },
        "_dir": dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    })
}

#[test]
fn train_round_trips_synth_sidecar_and_writes_artifacts() {
    let dir = temp_dir("train");
    let data_out = dir.join("data");
    let config = write_json(&dir, "synth.json", &synth_config(&data_out, 40, 4));
    assert!(run_cli(&["synth", "--config", config.to_str().unwrap()]).status.success());

    let run_out = dir.join("run");
    let mut train = small_train_config(&dir, &data_out.join("synthetic.csv"), &run_out);
    train.as_object_mut().unwrap().remove("_dir");
    let config = write_json(&dir, "train.json", &train);
    let result = run_cli(&["train", "--config", config.to_str().unwrap()]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    assert!(run_out.join("model.ckpt").exists());
    let history = std::fs::read_to_string(run_out.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,val_loss"));
    let forecast = std::fs::read_to_string(run_out.join("forecast.csv")).unwrap();
    assert!(forecast.starts_with("day,hour,gamma,value"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_out.join("run_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 11);
}

#[test]
fn backtest_writes_one_checkpoint_per_week_and_evaluate_consumes_them() {
    let dir = temp_dir("backtest");
    let data_out = dir.join("data");
    let config = write_json(&dir, "synth.json", &synth_config(&data_out, 70, 6));
    assert!(run_cli(&["synth", "--config", config.to_str().unwrap()]).status.success());
    let csv = data_out.join("synthetic.csv");

    let bt_out = dir.join("bt");
    let bt = serde_json::json!({
        "out": bt_out,
        "seed": 2,
        "data": { "csv": csv },
        "window": { "price_lag_days": [1] },
        "qnbm": {
            "n_units": 8, "n_basis": 4, "rank_shape": 2, "rank_head": 4,
            "quantile_levels": [0.05, 0.25, 0.5, 0.75, 0.95]
        },
        "train": { "max_epochs": 3, "patience": 3, "learning_rate": 1e-3 },
        "backtest": { "test_start": "2024-02-25", "test_end": "2024-03-09", "cadence_days": 7, "folds": 4 },
        "wide_forecast": true
    });
    let config = write_json(&dir, "bt.json", &bt);
    let result = run_cli(&["backtest", "--config", config.to_str().unwrap()]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    assert!(bt_out.join("week_000.ckpt").exists());
    assert!(bt_out.join("week_001.ckpt").exists());
    assert!(!bt_out.join("week_002.ckpt").exists());
    assert!(bt_out.join("forecast_wide.csv").exists());

    // The long forecast covers 14 days x 24 hours x 5 levels.
    let forecast = std::fs::read_to_string(bt_out.join("forecast.csv")).unwrap();
    assert_eq!(forecast.lines().count(), 1 + 14 * 24 * 5);

    // Evaluate the stored forecast against the actuals.
    let eval_out = dir.join("eval");
    let eval = serde_json::json!({
        "out": eval_out,
        "evaluate": {
            "actuals_csv": csv,
            "forecasts": [ { "name": "qnbm", "csv": bt_out.join("forecast.csv") } ],
            "interval_levels": [50.0, 90.0]
        }
    });
    let config = write_json(&dir, "eval.json", &eval);
    let result = run_cli(&["evaluate", "--config", config.to_str().unwrap()]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    assert!(eval_out.join("report_qnbm.json").exists());
    assert!(eval_out.join("reports.csv").exists());
    assert!(eval_out.join("calibration.csv").exists());
}

#[test]
fn evaluate_perfect_forecast_scores_zero_crps() {
    let dir = temp_dir("perfect");
    let data_out = dir.join("data");
    let config = write_json(&dir, "synth.json", &synth_config(&data_out, 30, 12));
    assert!(run_cli(&["synth", "--config", config.to_str().unwrap()]).status.success());
    let csv_path = data_out.join("synthetic.csv");

    // Build a forecast CSV that replicates the realized prices at every level.
    let data = std::fs::read_to_string(&csv_path).unwrap();
    let mut forecast = String::from("day,hour,gamma,value\n");
    for line in data.lines().skip(1).take(5 * 24) {
        let fields: Vec<&str> = line.split(',').collect();
        let (date, hour) = fields[0].split_once('T').unwrap();
        let hour: usize = hour[..2].parse().unwrap();
        for gamma in ["0.25", "0.5", "0.75"] {
            forecast.push_str(&format!("{date},{hour},{gamma},{}\n", fields[1]));
        }
    }
    let forecast_path = dir.join("perfect_forecast.csv");
    std::fs::write(&forecast_path, forecast).unwrap();

    let eval_out = dir.join("eval");
    let eval = serde_json::json!({
        "out": eval_out,
        "evaluate": {
            "actuals_csv": csv_path,
            "forecasts": [ { "name": "perfect", "csv": forecast_path } ],
            "interval_levels": [50.0]
        }
    });
    let config = write_json(&dir, "eval.json", &eval);
    let result = run_cli(&["evaluate", "--config", config.to_str().unwrap()]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(eval_out.join("report_perfect.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["crps"], 0.0);
    assert_eq!(report["mae"], 0.0);
}

#[test]
fn explain_extracts_curves_from_checkpoint() {
    let dir = temp_dir("explain");
    let data_out = dir.join("data");
    let config = write_json(&dir, "synth.json", &synth_config(&data_out, 40, 8));
    assert!(run_cli(&["synth", "--config", config.to_str().unwrap()]).status.success());
    let csv = data_out.join("synthetic.csv");

    let run_out = dir.join("run");
    let mut train = small_train_config(&dir, &csv, &run_out);
    train.as_object_mut().unwrap().remove("_dir");
    let config = write_json(&dir, "train.json", &train);
    assert!(run_cli(&["train", "--config", config.to_str().unwrap()]).status.success());

    let explain_out = dir.join("curves");
    let explain = serde_json::json!({
        "out": explain_out,
        "window": { "price_lag_days": [1] },
        "explain": {
            "checkpoints": [ run_out.join("model.ckpt") ],
            "features": ["load_fcst_h12", "wind_fcst_h18"],
            "gammas": [0.1, 0.9],
            "hours": [12],
            "points": 21,
            "scale_data_csv": csv
        }
    });
    let config = write_json(&dir, "explain.json", &explain);
    let result = run_cli(&["explain", "--config", config.to_str().unwrap()]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let curves = std::fs::read_to_string(explain_out.join("shapes.csv")).unwrap();
    // 2 features x 2 gammas x 1 hour x 21 points.
    assert_eq!(curves.lines().count(), 1 + 2 * 2 * 21);
    assert!(explain_out.join("shapes_manifest.json").exists());
}

#[test]
fn train_with_ensemble_writes_member_checkpoints_and_manifest() {
    let dir = temp_dir("ensemble");
    let data_out = dir.join("data");
    let config = write_json(&dir, "synth.json", &synth_config(&data_out, 40, 14));
    assert!(run_cli(&["synth", "--config", config.to_str().unwrap()]).status.success());

    let run_out = dir.join("run");
    let train = serde_json::json!({
        "out": run_out,
        "data": { "csv": data_out.join("synthetic.csv") },
        "window": { "price_lag_days": [1] },
        "qnbm": {
            "n_units": 8, "n_basis": 4, "rank_shape": 2, "rank_head": 4,
            "quantile_levels": [0.1, 0.5, 0.9]
        },
        "train": { "max_epochs": 2, "patience": 2, "learning_rate": 1e-3 },
        "ensemble": { "member_count": 2, "base_seed": 40 }
    });
    let config = write_json(&dir, "train.json", &train);
    let result = run_cli(&["train", "--config", config.to_str().unwrap()]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    assert!(run_out.join("member_000.ckpt").exists());
    assert!(run_out.join("member_001.ckpt").exists());
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(run_out.join("ensemble_manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["members"][0]["seed"], 40);
    assert_eq!(manifest["members"][1]["seed"], 41);
    assert!(run_out.join("forecast.csv").exists());
}

#[test]
fn train_with_grid_section_writes_grid_results() {
    let dir = temp_dir("grid");
    let data_out = dir.join("data");
    let config = write_json(&dir, "synth.json", &synth_config(&data_out, 40, 15));
    assert!(run_cli(&["synth", "--config", config.to_str().unwrap()]).status.success());

    let run_out = dir.join("run");
    let train = serde_json::json!({
        "out": run_out,
        "data": { "csv": data_out.join("synthetic.csv") },
        "window": { "price_lag_days": [1] },
        "qnbm": { "rank_shape": 2, "rank_head": 4, "quantile_levels": [0.25, 0.5, 0.75] },
        "train": { "max_epochs": 2, "patience": 2 },
        "grid": { "n_units": [4, 8], "n_basis": [4], "dropout": [0.0], "learning_rate": [1e-3] }
    });
    let config = write_json(&dir, "train.json", &train);
    let result = run_cli(&["train", "--config", config.to_str().unwrap()]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let grid = std::fs::read_to_string(run_out.join("grid_results.csv")).unwrap();
    assert!(grid.starts_with("n_units,n_basis,dropout,learning_rate,val_loss"));
    assert_eq!(grid.lines().count(), 1 + 2);
    assert!(run_out.join("model.ckpt").exists());
}

#[test]
fn evaluate_two_models_emits_dm_matrix() {
    let dir = temp_dir("dm");
    let data_out = dir.join("data");
    let config = write_json(&dir, "synth.json", &synth_config(&data_out, 70, 16));
    assert!(run_cli(&["synth", "--config", config.to_str().unwrap()]).status.success());
    let csv = data_out.join("synthetic.csv");

    // Two constant-offset forecasts over the last 40 days.
    let data = std::fs::read_to_string(&csv).unwrap();
    for (name, offset) in [("flat", 0.0), ("biased", 5.0)] {
        let mut forecast = String::from("day,hour,gamma,value
");
        for line in data.lines().skip(1).skip(30 * 24) {
            let fields: Vec<&str> = line.split(',').collect();
            let (date, hour) = fields[0].split_once('T').unwrap();
            let hour: usize = hour[..2].parse().unwrap();
            let price: f64 = fields[1].parse().unwrap();
            for gamma in ["0.25", "0.5", "0.75"] {
                forecast.push_str(&format!("{date},{hour},{gamma},{}
", price + offset));
            }
        }
        std::fs::write(dir.join(format!("{name}.csv")), forecast).unwrap();
    }

    let eval_out = dir.join("eval");
    let eval = serde_json::json!({
        "out": eval_out,
        "evaluate": {
            "actuals_csv": csv,
            "forecasts": [
                { "name": "flat", "csv": dir.join("flat.csv") },
                { "name": "biased", "csv": dir.join("biased.csv") }
            ],
            "interval_levels": [50.0]
        }
    });
    let config = write_json(&dir, "eval.json", &eval);
    let result = run_cli(&["evaluate", "--config", config.to_str().unwrap()]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let dm = std::fs::read_to_string(eval_out.join("dm_matrix.csv")).unwrap();
    assert!(dm.starts_with("model_a,model_b,statistic,p_value"));
    assert_eq!(dm.lines().count(), 1 + 2);
    // The biased forecast loses decisively in both orderings.
    let reports = std::fs::read_to_string(eval_out.join("reports.csv")).unwrap();
    assert_eq!(reports.lines().count(), 3);
}

#[test]
fn exit_codes_distinguish_config_data_and_numeric_failures() {
    let dir = temp_dir("exit");

    // Unknown key -> config error (2).
    let bad = write_json(&dir, "bad.json", &serde_json::json!({ "out": dir, "bogus": 1 }));
    let result = run_cli(&["synth", "--config", bad.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2), "{}", String::from_utf8_lossy(&result.stderr));

    // Missing section -> config error (2).
    let missing = write_json(&dir, "missing.json", &serde_json::json!({ "out": dir }));
    let result = run_cli(&["synth", "--config", missing.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));

    // Missing data file -> data error (3).
    let nodata = write_json(
        &dir,
        "nodata.json",
        &serde_json::json!({
            "out": dir.join("x"),
            "data": { "csv": dir.join("does_not_exist.csv") },
            "train": { "max_epochs": 1, "patience": 1 }
        }),
    );
    let result = run_cli(&["train", "--config", nodata.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(3), "{}", String::from_utf8_lossy(&result.stderr));

    // Unparseable config file -> config error (2).
    let garbled = dir.join("garbled.json");
    std::fs::write(&garbled, "{ not json").unwrap();
    let result = run_cli(&["synth", "--config", garbled.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));

    // Unknown model kind on the flag -> clap usage error.
    let ok = write_json(&dir, "ok.json", &synth_config(&dir.join("y"), 30, 1));
    let result = run_cli(&["synth", "--config", ok.to_str().unwrap(), "--model", "mystery"]);
    assert_ne!(result.status.code(), Some(0));
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = temp_dir("seed_override");
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    let config_a = write_json(&dir, "a.json", &synth_config(&out_a, 30, 1));
    let config_b = write_json(&dir, "b.json", &synth_config(&out_b, 30, 2));
    assert!(run_cli(&["synth", "--config", config_a.to_str().unwrap(), "--seed", "77"])
        .status
        .success());
    assert!(run_cli(&["synth", "--config", config_b.to_str().unwrap(), "--seed", "77"])
        .status
        .success());
    let a = std::fs::read(out_a.join("synthetic.csv")).unwrap();
    let b = std::fs::read(out_b.join("synthetic.csv")).unwrap();
    assert_eq!(a, b, "seed override should make both runs identical");
}
