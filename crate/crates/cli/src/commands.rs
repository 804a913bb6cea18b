use std::path::PathBuf;

use qnbm_core::dataset::{build_windows, load_csv, synth_generate, TimeSeriesFrame};
use qnbm_core::ensemble::{run_ensemble, EnsembleError};
use qnbm_core::eval::{
    evaluate, per_day_pinball_l1, write_calibration_csv, write_dm_matrix_csv, write_reports_csv,
    EvalError, EvalReport,
};
use qnbm_core::interpret::{
    extract_all, manifest_for, reference_output_scale, write_curves_csv, InterpretError,
    ShapeGridOptions,
};
use qnbm_core::model::{
    load_checkpoint, save_checkpoint, AnyModel, ModelError, ModelKind, QuantileNet,
};
use qnbm_core::numkit::Matrix;
use qnbm_core::train::{
    backtest, fit, grid_search, write_history_csv, ModelSpec, TrainConfig, TrainError,
    ValidationScheme,
};
use qnbm_core::QuantileForecast;

use crate::config::{ConfigError, RunConfig};
use crate::outputs::{
    ensure_dir, read_forecast_long, write_forecast_long, write_forecast_wide, write_json,
    write_manifest, write_with, OutputError, RunManifest,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] qnbm_core::dataset::DataError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Interpret(#[from] InterpretError),
}

impl CliError {
    /// 2 for configuration problems, 3 for data problems, 4 for numeric
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Output(_) => 3,
            CliError::Model(e) => match e {
                ModelError::NanInput { .. } => 4,
                ModelError::StaleCache(_) => 4,
                ModelError::Checkpoint(_) => 3,
                _ => 2,
            },
            CliError::Train(e) => train_exit_code(e),
            CliError::Eval(e) => match e {
                EvalError::Io(_) => 3,
                _ => 2,
            },
            CliError::Ensemble(e) => match e {
                EnsembleError::AllMembersDiverged { .. } => 4,
                EnsembleError::Train(t) => train_exit_code(t),
                _ => 2,
            },
            CliError::Interpret(e) => match e {
                InterpretError::Io(_) => 3,
                _ => 2,
            },
        }
    }
}

fn train_exit_code(e: &TrainError) -> i32 {
    match e {
        TrainError::Diverged { .. } | TrainError::NonFiniteGradient { .. } => 4,
        TrainError::EmptyDataset | TrainError::Data(_) => 3,
        TrainError::Model(m) => match m {
            ModelError::NanInput { .. } | ModelError::StaleCache(_) => 4,
            ModelError::Checkpoint(_) => 3,
            _ => 2,
        },
        TrainError::Num(_) | TrainError::Forecast(_) => 4,
        TrainError::InvalidConfig(_) => 2,
    }
}

fn model_spec(config: &RunConfig) -> ModelSpec {
    match config.model_kind() {
        ModelKind::Qnbm => ModelSpec::Qnbm(config.qnbm.clone().unwrap_or_default()),
        ModelKind::Qrdnn => ModelSpec::Qrdnn(config.qrdnn.clone().unwrap_or_default()),
    }
}

fn effective_train_config(config: &RunConfig) -> TrainConfig {
    let mut tc = config.train();
    if let Some(seed) = config.seed {
        tc.seed = seed;
    }
    tc
}

fn load_frame(config: &RunConfig) -> Result<TimeSeriesFrame, CliError> {
    let data = config.require_data()?;
    Ok(load_csv(&data.csv, &data.schema())?)
}

fn finish(
    command: &str,
    config: &RunConfig,
    seed: u64,
    outputs: Vec<PathBuf>,
) -> Result<(), CliError> {
    let manifest = RunManifest {
        command,
        config_hash: config.fingerprint(),
        seed,
        model: config.model_kind().to_string(),
        code_version: env!("CARGO_PKG_VERSION"),
        outputs,
    };
    write_manifest(&manifest, &config.out)?;
    Ok(())
}

/// Generate a synthetic frame and its spec sidecar.
pub fn cmd_synth(config: &RunConfig) -> Result<(), CliError> {
    let section = config
        .synth
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("synth command needs a 'synth' section".into()))?;
    let mut spec = section.spec.clone();
    if let Some(seed) = config.seed {
        spec.seed = seed;
    }
    let frame = synth_generate(&spec, section.n_days)?;

    ensure_dir(&config.out)?;
    let csv_path = config.out.join("synthetic.csv");
    write_with(&csv_path, |w| frame.write_csv(w))?;
    let spec_path = config.out.join("synthetic_spec.json");
    write_json(&spec, &spec_path)?;
    println!(
        "synth: wrote {} day(s) to {}",
        frame.n_days(),
        csv_path.display()
    );
    finish("synth", config, spec.seed, vec![csv_path, spec_path])
}

/// Train one model (or a seeded ensemble) on the windowed dataset, with an
/// optional grid search first.
pub fn cmd_train(config: &RunConfig) -> Result<(), CliError> {
    let frame = load_frame(config)?;
    let dataset = build_windows(&frame, &config.window())?;
    let train_cfg = effective_train_config(config);
    let base_spec = model_spec(config);
    ensure_dir(&config.out)?;
    let mut outputs = Vec::new();

    let (spec, train_cfg) = match &config.grid {
        None => (base_spec, train_cfg),
        Some(grid) => {
            let outcome = grid_search(
                &base_spec,
                &dataset,
                &train_cfg,
                grid,
                ValidationScheme::RandomSubsample,
            )?;
            let grid_path = config.out.join("grid_results.csv");
            write_with(&grid_path, |w| {
                writeln!(w, "n_units,n_basis,dropout,learning_rate,val_loss")?;
                for c in &outcome.cells {
                    writeln!(
                        w,
                        "{},{},{},{},{}",
                        c.n_units,
                        c.n_basis.map(|v| v.to_string()).unwrap_or_default(),
                        c.dropout,
                        c.learning_rate,
                        c.val_loss
                    )?;
                }
                Ok(())
            })?;
            outputs.push(grid_path);
            println!(
                "grid: {} cell(s), best val loss {:.6}",
                outcome.cells.len(),
                outcome.best_val_loss
            );
            (outcome.best_spec, outcome.best_config)
        }
    };

    match &config.ensemble {
        Some(ensemble) => {
            let out = run_ensemble(
                &spec,
                &dataset,
                &dataset.inputs,
                &train_cfg,
                ValidationScheme::RandomSubsample,
                ensemble,
                dataset.start_date,
            )?;
            for (skipped_seed, reason) in &out.skipped {
                eprintln!("warning: member seed {skipped_seed} skipped: {reason}");
            }
            let mut member_records = Vec::new();
            for (i, member) in out.members.iter().enumerate() {
                let path = config.out.join(format!("member_{i:03}.ckpt"));
                save_checkpoint(&member.model, &path)?;
                member_records.push(serde_json::json!({
                    "path": path,
                    "seed": member.seed,
                    "best_val_loss": member.best_val_loss,
                }));
                outputs.push(path);
            }
            let manifest_path = config.out.join("ensemble_manifest.json");
            write_json(
                &serde_json::json!({
                    "members": member_records,
                    "skipped": out.skipped,
                }),
                &manifest_path,
            )?;
            outputs.push(manifest_path);
            let forecast_path = config.out.join("forecast.csv");
            write_forecast_long(&out.forecast, &forecast_path)?;
            outputs.push(forecast_path);
            if config.wide_forecast {
                let wide = config.out.join("forecast_wide.csv");
                write_forecast_wide(&out.forecast, &wide)?;
                outputs.push(wide);
            }
            println!("train: {} ensemble member(s) fitted", out.members.len());
        }
        None => {
            let result = fit(&spec, &dataset, &train_cfg, ValidationScheme::RandomSubsample)?;
            let ckpt_path = config.out.join("model.ckpt");
            save_checkpoint(&result.model, &ckpt_path)?;
            outputs.push(ckpt_path);
            let history_path = config.out.join("history.csv");
            write_with(&history_path, |w| write_history_csv(&result.history, w))?;
            outputs.push(history_path);
            let forecast = result.model.predict(&dataset.inputs, dataset.start_date)?;
            let forecast_path = config.out.join("forecast.csv");
            write_forecast_long(&forecast, &forecast_path)?;
            outputs.push(forecast_path);
            if config.wide_forecast {
                let wide = config.out.join("forecast_wide.csv");
                write_forecast_wide(&forecast, &wide)?;
                outputs.push(wide);
            }
            println!(
                "train: best epoch {} with validation loss {:.6}",
                result.best_epoch, result.best_val_loss
            );
        }
    }
    finish("train", config, train_cfg.seed, outputs)
}

fn targets_for_span(
    frame: &TimeSeriesFrame,
    forecast: &QuantileForecast,
) -> Result<Matrix, CliError> {
    let start = forecast
        .start_date()
        .ok_or_else(|| ConfigError::Invalid("forecast lacks calendar dates".into()))?;
    let first = frame.day_index(start).ok_or_else(|| {
        ConfigError::Invalid(format!("actuals do not cover forecast start {start}"))
    })?;
    if first + forecast.days() > frame.n_days() {
        return Err(ConfigError::Invalid(format!(
            "actuals end before the forecast span ({} day(s) from {start})",
            forecast.days()
        ))
        .into());
    }
    Ok(Matrix::from_fn(forecast.days(), forecast.horizon(), |d, h| {
        frame.price_day(first + d)[h]
    }))
}

/// Weekly-recalibration backtest: per-block checkpoints and histories, the
/// stitched forecast CSV, and an evaluation report over the test span.
pub fn cmd_backtest(config: &RunConfig) -> Result<(), CliError> {
    let frame = load_frame(config)?;
    let plan = config
        .backtest
        .clone()
        .ok_or_else(|| ConfigError::Invalid("backtest command needs a 'backtest' section".into()))?;
    let train_cfg = effective_train_config(config);
    let spec = model_spec(config);
    ensure_dir(&config.out)?;

    let out = backtest(&spec, &frame, &config.window(), &train_cfg, &plan)?;
    let mut outputs = Vec::new();
    for (i, block) in out.blocks.iter().enumerate() {
        let ckpt = config.out.join(format!("week_{i:03}.ckpt"));
        save_checkpoint(&block.model, &ckpt)?;
        outputs.push(ckpt);
        let history = config.out.join(format!("week_{i:03}_history.csv"));
        write_with(&history, |w| write_history_csv(&block.history, w))?;
        outputs.push(history);
    }
    let forecast_path = config.out.join("forecast.csv");
    write_forecast_long(&out.forecast, &forecast_path)?;
    outputs.push(forecast_path);
    if config.wide_forecast {
        let wide = config.out.join("forecast_wide.csv");
        write_forecast_wide(&out.forecast, &wide)?;
        outputs.push(wide);
    }

    let targets = targets_for_span(&frame, &out.forecast)?;
    // Report the standard central intervals whose endpoints exist on this
    // model's quantile grid.
    let levels: Vec<f64> = [50.0, 90.0, 98.0]
        .into_iter()
        .filter(|&level| {
            qnbm_core::eval::interval_violations(&targets, &out.forecast, level).is_ok()
        })
        .collect();
    let report = evaluate(
        &config.model_kind().to_string(),
        &targets,
        &out.forecast,
        &levels,
        0.05,
    )?;
    let report_path = config.out.join("eval_report.json");
    write_json(&report, &report_path)?;
    outputs.push(report_path);
    let csv_path = config.out.join("eval_report.csv");
    write_with(&csv_path, |w| write_reports_csv(std::slice::from_ref(&report), w))?;
    outputs.push(csv_path);
    println!(
        "backtest: {} block(s), CRPS {:.6}, MAE {:.6}",
        out.blocks.len(),
        report.crps,
        report.mae
    );
    finish("backtest", config, train_cfg.seed, outputs)
}

/// Score stored forecasts against actuals: per-model reports, calibration
/// curves and the pairwise Diebold-Mariano matrix.
pub fn cmd_evaluate(config: &RunConfig) -> Result<(), CliError> {
    let section = config
        .evaluate
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("evaluate command needs an 'evaluate' section".into()))?;
    if section.forecasts.is_empty() {
        return Err(ConfigError::Invalid("evaluate.forecasts must be non-empty".into()).into());
    }
    let schema = config
        .data
        .as_ref()
        .map(|d| d.schema())
        .unwrap_or_default();
    let frame = load_csv(&section.actuals_csv, &schema)?;
    ensure_dir(&config.out)?;

    let mut outputs = Vec::new();
    let mut reports: Vec<EvalReport> = Vec::new();
    let mut names = Vec::new();
    let mut day_losses = Vec::new();
    for named in &section.forecasts {
        let forecast = read_forecast_long(&named.csv)?;
        if forecast.levels().len() != 99 {
            eprintln!(
                "note: '{}' has {} quantile level(s); CRPS is exact for the 99-percentile grid",
                named.name,
                forecast.levels().len()
            );
        }
        let targets = targets_for_span(&frame, &forecast)?;
        let report = evaluate(&named.name, &targets, &forecast, &section.interval_levels, section.alpha)?;
        println!(
            "evaluate[{}]: CRPS {:.6}, MAE {:.6}",
            named.name, report.crps, report.mae
        );
        let report_path = config.out.join(format!("report_{}.json", named.name));
        write_json(&report, &report_path)?;
        outputs.push(report_path);
        day_losses.push(per_day_pinball_l1(&targets, &forecast)?);
        names.push(named.name.clone());
        reports.push(report);
    }

    let reports_path = config.out.join("reports.csv");
    write_with(&reports_path, |w| write_reports_csv(&reports, w))?;
    outputs.push(reports_path);
    let calibration_path = config.out.join("calibration.csv");
    write_with(&calibration_path, |w| write_calibration_csv(&reports, w))?;
    outputs.push(calibration_path);
    if names.len() >= 2 {
        if day_losses.iter().all(|l| l.len() >= 30) {
            let dm_path = config.out.join("dm_matrix.csv");
            let file = std::fs::File::create(&dm_path).map_err(|source| OutputError::Write {
                path: dm_path.display().to_string(),
                source,
            })?;
            write_dm_matrix_csv(&names, &day_losses, std::io::BufWriter::new(file))?;
            outputs.push(dm_path);
        } else {
            eprintln!("note: skipping the DM matrix, it needs at least 30 forecast days");
        }
    }
    finish("evaluate", config, config.seed(), outputs)
}

fn load_qnbm_members(paths: &[PathBuf]) -> Result<Vec<qnbm_core::QnbmParams>, CliError> {
    let mut members = Vec::new();
    for path in paths {
        match load_checkpoint(path)? {
            AnyModel::Qnbm(p) => members.push(p),
            AnyModel::Qrdnn(_) => {
                return Err(ConfigError::Invalid(format!(
                    "{}: shape functions exist only for the additive model, not the dense baseline",
                    path.display()
                ))
                .into())
            }
        }
    }
    Ok(members)
}

/// Extract learned shape functions from one or more checkpoints.
pub fn cmd_explain(config: &RunConfig) -> Result<(), CliError> {
    let section = config
        .explain
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("explain command needs an 'explain' section".into()))?;
    if section.checkpoints.is_empty() {
        return Err(ConfigError::Invalid("explain.checkpoints must be non-empty".into()).into());
    }
    let members = load_qnbm_members(&section.checkpoints)?;
    let first = &members[0];

    let feature_indices: Vec<usize> = match &section.features {
        Some(names) => {
            let mut indices = Vec::new();
            for name in names {
                let idx = first.layout.index_of(name).ok_or_else(|| {
                    ConfigError::Invalid(format!("unknown feature '{name}'"))
                })?;
                indices.push(idx);
            }
            indices
        }
        None => first
            .layout
            .kinds()
            .iter()
            .enumerate()
            .filter(|(_, k)| matches!(k, qnbm_core::dataset::FeatureKind::Exogenous { .. }))
            .map(|(i, _)| i)
            .collect(),
    };

    // RevIN models need a reference instance scale to express curves in
    // price units; without data they stay in normalized head units.
    let scales: Vec<f64> = match &section.scale_data_csv {
        Some(csv) => {
            let schema = config.data.as_ref().map(|d| d.schema()).unwrap_or_default();
            let frame = load_csv(csv, &schema)?;
            let dataset = build_windows(&frame, &config.window())?;
            members
                .iter()
                .map(|p| {
                    p.check_compatible(&dataset.layout)?;
                    Ok(reference_output_scale(p, &dataset.inputs))
                })
                .collect::<Result<Vec<f64>, ModelError>>()?
        }
        None => vec![1.0; members.len()],
    };

    let refs: Vec<&qnbm_core::QnbmParams> = members.iter().collect();
    let curves = extract_all(
        &refs,
        &feature_indices,
        &section.gammas,
        &section.hours,
        ShapeGridOptions { points: section.points, expansion: 0.0 },
        &scales,
    )?;

    ensure_dir(&config.out)?;
    let curves_path = config.out.join("shapes.csv");
    write_with(&curves_path, |w| write_curves_csv(&curves, w))?;
    let manifest_path = config.out.join("shapes_manifest.json");
    write_json(&manifest_for(&curves), &manifest_path)?;
    println!(
        "explain: {} curve(s) over {} feature(s) from {} member(s)",
        curves.len(),
        feature_indices.len(),
        members.len()
    );
    finish("explain", config, config.seed(), vec![curves_path, manifest_path])
}
