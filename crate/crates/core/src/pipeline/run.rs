//! Step-wise pipeline: ingest, preprocess, build scenarios, tune, train,
//! evaluate, and write artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{InputConfig, PipelineConfig};
use super::plot::{export_plots, PlotWindow};
use super::report::{DataSummary, ModelDetails, ModelReport, RunReport, ScenarioReport, TOOL_NAME, TOOL_VERSION};
use crate::baselines::{fit_svr, predict_svr, ArimaModel, Kernel, SvrModel, SvrParams};
use crate::error::{Error, Result};
use crate::features::{build_supervised, chrono_split, fit_scaler, FeatureMatrix, ScalerStats};
use crate::gbt::{GbtHyperParams, GbtModel};
use crate::metrics::evaluate;
use crate::preprocess::{detect_outliers, impute, replace_outliers, split_seasons};
use crate::seed::derive_seed;
use crate::synth::{generate, InjectionLog, SynthConfig};
use crate::timeseries::{read_records_file, resample_to_hourly, HourlySeries, LoadUnit, RawRecord};
use crate::tuning::{apply, final_fit, full_gbt_grid, grid_search, tune_gbt, TuningResult};

/// Raw readings as loaded from the configured source.
pub struct Ingested {
    pub records: Vec<RawRecord<f64>>,
    pub unit: LoadUnit,
    /// Ground truth for generated data.
    pub injection: Option<InjectionLog>,
}

/// Seed for the synthetic generator of a run.
pub fn synthetic_seed(cfg: &PipelineConfig) -> u64 {
    derive_seed(cfg.seed, "synthetic")
}

/// Generator input for a synthetic config, `None` for file input.
pub fn synth_config(cfg: &PipelineConfig) -> Result<Option<SynthConfig>> {
    match &cfg.input {
        InputConfig::Csv { .. } => Ok(None),
        InputConfig::Synthetic {
            profile,
            start,
            end,
            resolution,
            injection,
        } => {
            let mut profile = profile.resolve()?;
            if let Some(r) = resolution {
                profile.resolution = *r;
            }
            Ok(Some(SynthConfig {
                profile,
                start: *start,
                end: *end,
                seed: synthetic_seed(cfg),
                injection: injection.clone(),
            }))
        }
    }
}

/// Step 1: load or generate the raw readings.
pub fn ingest(cfg: &PipelineConfig) -> Result<Ingested> {
    if let Some(sc) = synth_config(cfg)? {
        let (records, log) = generate::<f64>(&sc)?;
        return Ok(Ingested {
            records,
            unit: sc.profile.resolution.unit(),
            injection: Some(log),
        });
    }
    match &cfg.input {
        InputConfig::Csv { path, unit, .. } => Ok(Ingested {
            records: read_records_file(path, *unit)?,
            unit: *unit,
            injection: None,
        }),
        InputConfig::Synthetic { .. } => unreachable!("handled above"),
    }
}

/// Output of steps 2–3 on the full series.
pub struct Preprocessed {
    /// Hourly series straight after resampling.
    pub hourly: HourlySeries<f64>,
    /// Cleaned, gap-free series.
    pub series: HourlySeries<f64>,
    pub outlier_mask: Vec<bool>,
    pub summary: DataSummary,
}

/// Resamples to hourly, screens outliers and imputes gaps.
pub fn preprocess(cfg: &PipelineConfig, data: &Ingested) -> Result<Preprocessed> {
    let hourly = resample_to_hourly(&data.records, data.unit.aggregation())?;
    let policy = &cfg.preprocess.outliers;
    let mask = detect_outliers(&hourly, policy)?;
    let replaced = replace_outliers(&hourly, &mask, policy)?;
    let series = impute(&replaced, cfg.preprocess.short_gap_max)?;
    let flagged = mask.iter().filter(|&&m| m).count();
    let summary = DataSummary {
        native_records: data.records.len(),
        hours: series.len(),
        start: fmt_ts(series.start()),
        end: fmt_ts(series.timestamp(series.len().saturating_sub(1))),
        missing_load_filled: replaced.missing_load(),
        missing_temperature_filled: replaced.missing_temperature(),
        outliers_flagged: flagged,
        outliers_replaced: flagged,
        short_gap_max: cfg.preprocess.short_gap_max,
    };
    log::info!(
        "preprocessed {} hours: {} outliers, {} load gaps filled",
        summary.hours,
        flagged,
        summary.missing_load_filled
    );
    Ok(Preprocessed {
        hourly,
        series,
        outlier_mask: mask,
        summary,
    })
}

fn fmt_ts(ts: chrono::DateTime<chrono::Utc>) -> String {
    ts.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Current time as stamped into reports.
pub fn report_timestamp() -> String {
    fmt_ts(chrono::Utc::now())
}

/// `full` plus each configured season, optionally filtered by name.
pub fn scenarios(
    cfg: &PipelineConfig,
    series: &HourlySeries<f64>,
    only: Option<&str>,
) -> Result<Vec<(String, HourlySeries<f64>)>> {
    let mut out = vec![("full".to_string(), series.clone())];
    let seasons = split_seasons(series, &cfg.preprocess.seasons)?;
    for s in &cfg.preprocess.seasons {
        out.push((s.name.clone(), seasons[&s.name].clone()));
    }
    if let Some(name) = only {
        out.retain(|(n, _)| n == name);
        if out.is_empty() {
            return Err(Error::Config(format!("no scenario named `{name}`")));
        }
    }
    Ok(out)
}

/// Supervised matrices and the hourly series of one scenario.
pub struct ScenarioData {
    pub name: String,
    pub series: HourlySeries<f64>,
    pub train: FeatureMatrix<f64>,
    pub test: FeatureMatrix<f64>,
    /// Series index of the first test target.
    pub test_start: usize,
}

/// Step 4 input: lagged features split chronologically.
pub fn prepare(cfg: &PipelineConfig, name: &str, series: &HourlySeries<f64>) -> Result<ScenarioData> {
    let matrix = build_supervised(series, &cfg.features)?;
    let (train, test) = chrono_split(&matrix, cfg.evaluation.train_fraction)?;
    let test_start = series
        .index_of(test.timestamps()[0])
        .ok_or_else(|| Error::Config("test rows fall outside the series".into()))?;
    Ok(ScenarioData {
        name: name.to_string(),
        series: series.clone(),
        train,
        test,
        test_start,
    })
}

/// Boosting parameters for a scenario with the derived seed applied.
pub fn gbt_base_params(cfg: &PipelineConfig, scenario: &str) -> Option<GbtHyperParams> {
    cfg.models.gbt.as_ref().map(|g| {
        let mut p = g.params.clone();
        p.seed = derive_seed(cfg.seed, &format!("{scenario}/gbt"));
        p
    })
}

fn svr_trainer(p: &SvrParams, tr: &FeatureMatrix<f64>, va: &FeatureMatrix<f64>) -> Result<Vec<f64>> {
    let scaler = fit_scaler(tr);
    let model = fit_svr(&scaler.transform(tr)?, p)?;
    predict_svr(&model, &scaler.transform(va)?)
}

/// Grid searches for every model with a non-empty grid.
pub fn tune(cfg: &PipelineConfig, data: &ScenarioData, full_grid: bool) -> Result<BTreeMap<String, TuningResult>> {
    let mut out = BTreeMap::new();
    let k = cfg.evaluation.cv_folds;
    if let (Some(g), Some(base)) = (&cfg.models.gbt, gbt_base_params(cfg, &data.name)) {
        let grid = if full_grid { full_gbt_grid() } else { g.grid.clone() };
        if grid.size() > 0 && !grid.axes.is_empty() {
            log::info!("{}: searching {} boosting candidates", data.name, grid.size());
            out.insert("gbt".to_string(), tune_gbt(&data.train, &base, &grid, k)?);
        }
    }
    if let Some(s) = &cfg.models.svr {
        if !s.grid.axes.is_empty() {
            log::info!("{}: searching {} SVR candidates", data.name, s.grid.size());
            out.insert("svr".to_string(), grid_search(&data.train, &s.params, &s.grid, k, svr_trainer)?);
        }
    }
    Ok(out)
}

/// A fitted model of any kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Fitted {
    Gbt(GbtModel<f64>),
    Arima(ArimaModel<f64>),
    Svr { model: SvrModel<f64>, scaler: ScalerStats<f64> },
}

impl Fitted {
    fn file_stem(model: &str) -> String {
        format!("{model}.json")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            Fitted::Gbt(m) => m.save(path),
            Fitted::Arima(m) => m.save(path),
            Fitted::Svr { model, scaler } => {
                model.save(path)?;
                std::fs::write(scaler_path(path), serde_json::to_string_pretty(scaler)?)?;
                Ok(())
            }
        }
    }

    pub fn load(kind: &str, path: &Path) -> Result<Self> {
        match kind {
            "gbt" => Ok(Fitted::Gbt(GbtModel::load(path)?)),
            "arima" | "arimax" => Ok(Fitted::Arima(ArimaModel::load(path)?)),
            "svr" => Ok(Fitted::Svr {
                model: SvrModel::load(path)?,
                scaler: serde_json::from_str(&std::fs::read_to_string(scaler_path(path))?)?,
            }),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }

    fn details(&self) -> ModelDetails {
        match self {
            Fitted::Gbt(m) => ModelDetails::Gbt {
                trees: m.trees.len(),
                best_iteration: m.best_iteration,
                params: m.params.clone(),
            },
            Fitted::Arima(m) => ModelDetails::Arima {
                order: [m.order.p, m.order.d, m.order.q],
                intercept: m.intercept,
                phi: m.phi.clone(),
                theta: m.theta.clone(),
                beta: m.beta,
                residual_variance: m.residual_variance,
            },
            Fitted::Svr { model, .. } => ModelDetails::Svr {
                support_vectors: model.n_support(),
                c: model.c,
                epsilon: model.epsilon,
                kernel: match model.kernel {
                    Kernel::Linear => "linear".into(),
                    Kernel::Rbf { gamma } => format!("rbf(gamma={gamma})"),
                },
            },
        }
    }
}

fn scaler_path(model_path: &Path) -> PathBuf {
    model_path.with_extension("scaler.json")
}

/// Trained models of one scenario with their fit times.
pub struct Trained {
    pub models: BTreeMap<String, (Fitted, f64)>,
}

/// Step 5: fits every enabled model on the scenario's training window.
pub fn train(cfg: &PipelineConfig, data: &ScenarioData, tuning: &BTreeMap<String, TuningResult>) -> Result<Trained> {
    let mut models = BTreeMap::new();
    let levels = data.series.complete_load()?;
    let temps = data.series.complete_temperature()?;
    let history = &levels[..data.test_start];
    let history_temps = &temps[..data.test_start];

    if let (Some(g), Some(base)) = (&cfg.models.gbt, gbt_base_params(cfg, &data.name)) {
        let started = Instant::now();
        let params = match tuning.get("gbt") {
            Some(t) => apply(&base, &t.best_params)?,
            None => base,
        };
        let patience = (g.early_stopping_patience > 0).then_some(g.early_stopping_patience);
        let fit = final_fit(&data.train, &data.test, &params, patience, cfg.evaluation.mape_floor)
            .map_err(|e| step_error("train", "gbt", e))?;
        models.insert("gbt".into(), (Fitted::Gbt(fit.model), started.elapsed().as_secs_f64()));
    }
    if let Some(a) = &cfg.models.arima {
        let started = Instant::now();
        let m = crate::baselines::fit_arima(history, a.order).map_err(|e| step_error("train", "arima", e))?;
        models.insert("arima".into(), (Fitted::Arima(m), started.elapsed().as_secs_f64()));
    }
    if let Some(a) = &cfg.models.arimax {
        let started = Instant::now();
        let m = crate::baselines::fit_arimax(history, history_temps, a.order)
            .map_err(|e| step_error("train", "arimax", e))?;
        models.insert("arimax".into(), (Fitted::Arima(m), started.elapsed().as_secs_f64()));
    }
    if let Some(s) = &cfg.models.svr {
        let started = Instant::now();
        let params = match tuning.get("svr") {
            Some(t) => apply(&s.params, &t.best_params)?,
            None => s.params.clone(),
        };
        let scaler = fit_scaler(&data.train);
        let model = fit_svr(&scaler.transform(&data.train)?, &params).map_err(|e| step_error("train", "svr", e))?;
        models.insert("svr".into(), (Fitted::Svr { model, scaler }, started.elapsed().as_secs_f64()));
    }
    Ok(Trained { models })
}

fn step_error(step: &str, model: &str, e: Error) -> Error {
    Error::Config(format!("{step} {model}: {e}"))
}

/// Test-window predictions of a fitted model.
pub fn predict(data: &ScenarioData, fitted: &Fitted, horizon: usize) -> Result<Vec<f64>> {
    match fitted {
        Fitted::Gbt(m) => m.predict(&data.test),
        Fitted::Svr { model, scaler } => predict_svr(model, &scaler.transform(&data.test)?),
        Fitted::Arima(m) => {
            let levels = data.series.complete_load()?;
            let temps = data.series.complete_temperature()?;
            let exog = m.beta.is_some().then_some(temps.as_slice());
            m.day_ahead(&levels, exog, data.test_start, horizon)
        }
    }
}

/// Step 6: scores every trained model on the test rows.
pub fn evaluate_scenario(
    cfg: &PipelineConfig,
    data: &ScenarioData,
    trained: &Trained,
    tuning: BTreeMap<String, TuningResult>,
) -> Result<(ScenarioReport, BTreeMap<String, Vec<f64>>)> {
    let mut report = ScenarioReport {
        name: data.name.clone(),
        hours: data.series.len(),
        train_rows: data.train.n_rows(),
        test_rows: data.test.n_rows(),
        test_start: fmt_ts(data.test.timestamps()[0]),
        tuning,
        ..Default::default()
    };
    let mut predictions = BTreeMap::new();
    for (name, (fitted, secs)) in &trained.models {
        let pred = predict(data, fitted, cfg.features.horizon).map_err(|e| step_error("evaluate", name, e))?;
        let metrics = evaluate(data.test.y(), &pred, cfg.evaluation.mape_floor)?;
        report.models.insert(
            name.clone(),
            ModelReport {
                metrics,
                details: fitted.details(),
                model_file: Some(model_file(&data.name, name)),
                fit_secs: *secs,
            },
        );
        predictions.insert(name.clone(), pred);
    }
    report.rank(cfg.evaluation.rank_by);
    Ok((report, predictions))
}

/// Model file path relative to the output directory.
pub fn model_file(scenario: &str, model: &str) -> String {
    format!("models/{scenario}/{}", Fitted::file_stem(model))
}

pub fn save_models(out: &Path, scenario: &str, trained: &Trained) -> Result<()> {
    std::fs::create_dir_all(out.join("models").join(scenario))?;
    for (name, (fitted, _)) in &trained.models {
        fitted.save(&out.join(model_file(scenario, name)))?;
    }
    Ok(())
}

pub fn load_models(cfg: &PipelineConfig, out: &Path, scenario: &str) -> Result<Trained> {
    let mut models = BTreeMap::new();
    for name in cfg.models.enabled() {
        let fitted = Fitted::load(name, &out.join(model_file(scenario, name)))?;
        models.insert(name.to_string(), (fitted, 0.0));
    }
    Ok(Trained { models })
}

pub fn tuning_dir(out: &Path, scenario: &str) -> PathBuf {
    out.join("tuning").join(scenario)
}

/// Writes each tuning result and the winning parameters as a TOML fragment.
pub fn save_tuning(out: &Path, scenario: &str, tuning: &BTreeMap<String, TuningResult>) -> Result<()> {
    let dir = tuning_dir(out, scenario);
    std::fs::create_dir_all(&dir)?;
    for (name, t) in tuning {
        std::fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(t)?)?;
        std::fs::write(dir.join(format!("{name}_best.toml")), t.best_fragment())?;
    }
    Ok(())
}

/// Tuning results saved by an earlier `tune` step, if any.
pub fn load_tuning(out: &Path, scenario: &str) -> Result<BTreeMap<String, TuningResult>> {
    let mut map = BTreeMap::new();
    for name in ["gbt", "svr"] {
        let path = tuning_dir(out, scenario).join(format!("{name}.json"));
        if path.exists() {
            map.insert(name.to_string(), serde_json::from_str(&std::fs::read_to_string(path)?)?);
        }
    }
    Ok(map)
}

/// Options of an end-to-end run.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub scenario: Option<String>,
    pub full_grid: bool,
    /// Write models, reports and plots under the configured output directory.
    pub write_artifacts: bool,
}

/// Everything a finished scenario produced.
pub struct ScenarioOutcome {
    pub report: ScenarioReport,
    pub trained: Option<Trained>,
    pub predictions: BTreeMap<String, Vec<f64>>,
    pub actual: Vec<f64>,
}

fn run_scenario(cfg: &PipelineConfig, name: &str, series: &HourlySeries<f64>, full_grid: bool) -> ScenarioOutcome {
    let attempt = || -> Result<ScenarioOutcome> {
        let data = prepare(cfg, name, series).map_err(|e| step_error("features", "all", e))?;
        let tuning = tune(cfg, &data, full_grid).map_err(|e| step_error("tune", "all", e))?;
        let trained = train(cfg, &data, &tuning)?;
        let (report, predictions) = evaluate_scenario(cfg, &data, &trained, tuning)?;
        Ok(ScenarioOutcome {
            report,
            trained: Some(trained),
            predictions,
            actual: data.test.y().to_vec(),
        })
    };
    match attempt() {
        Ok(o) => o,
        Err(e) => {
            let msg = format!("scenario `{name}` ({} hours): {e}", series.len());
            log::error!("{msg}");
            ScenarioOutcome {
                report: ScenarioReport {
                    name: name.to_string(),
                    hours: series.len(),
                    error: Some(msg),
                    ..Default::default()
                },
                trained: None,
                predictions: BTreeMap::new(),
                actual: Vec::new(),
            }
        }
    }
}

/// Writes plots for every model of a scenario.
pub fn write_plots(cfg: &PipelineConfig, out: &Path, outcome: &ScenarioOutcome) -> Result<()> {
    if !cfg.plots.enabled {
        return Ok(());
    }
    let windows = [
        PlotWindow {
            label: "two_week",
            hours: cfg.plots.long_window,
        },
        PlotWindow {
            label: "one_day",
            hours: cfg.plots.short_window,
        },
    ];
    let dir = out.join("plots").join(&outcome.report.name);
    for (model, pred) in &outcome.predictions {
        export_plots(&dir, &outcome.report.name, model, &outcome.actual, pred, &windows)?;
    }
    Ok(())
}

/// Runs every step for each scenario and assembles the report.
pub fn run(cfg: &PipelineConfig, opts: &RunOptions) -> Result<(RunReport, Vec<ScenarioOutcome>)> {
    cfg.validate()?;
    let data = ingest(cfg)?;
    let pre = preprocess(cfg, &data)?;
    let list = scenarios(cfg, &pre.series, opts.scenario.as_deref())?;
    let outcomes: Vec<ScenarioOutcome> = list
        .par_iter()
        .map(|(name, series)| run_scenario(cfg, name, series, opts.full_grid))
        .collect();
    let report = RunReport {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        seed: cfg.seed,
        generated_at: report_timestamp(),
        config: cfg.clone(),
        data: pre.summary,
        scenarios: outcomes.iter().map(|o| o.report.clone()).collect(),
    };
    if opts.write_artifacts {
        write_artifacts(cfg, &report, &outcomes)?;
    }
    Ok((report, outcomes))
}

pub fn write_report(out: &Path, report: &RunReport) -> Result<()> {
    std::fs::create_dir_all(out)?;
    report.save(&out.join("report.json"))?;
    std::fs::write(out.join("report.txt"), report.render_table())?;
    Ok(())
}

fn write_artifacts(cfg: &PipelineConfig, report: &RunReport, outcomes: &[ScenarioOutcome]) -> Result<()> {
    let out = &cfg.output_dir;
    write_report(out, report)?;
    for o in outcomes {
        if let Some(t) = &o.trained {
            save_models(out, &o.report.name, t)?;
        }
        save_tuning(out, &o.report.name, &o.report.tuning)?;
        write_plots(cfg, out, o)?;
    }
    Ok(())
}
