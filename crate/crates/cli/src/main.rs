use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use loadcast_core::pipeline::report::{TOOL_NAME, TOOL_VERSION};
use loadcast_core::pipeline::run::{
    evaluate_scenario, ingest, load_models, load_tuning, prepare, preprocess, report_timestamp, save_models, save_tuning, scenarios,
    synth_config, train, tune, write_plots, write_report, ScenarioOutcome,
};
use loadcast_core::pipeline::{run, PipelineConfig, RunOptions, RunReport, ScenarioReport};
use loadcast_core::synth::generate;
use loadcast_core::timeseries::{write_hourly, write_records, SourceMeta};

#[derive(Parser)]
#[command(name = "loadcast", version, about = "Day-ahead residential load forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset described by a config as CSV.
    Generate(Common),
    /// Resample, screen outliers and impute; writes the hourly series.
    Preprocess(Common),
    /// Grid-search hyperparameters and save the results.
    Tune(Tuning),
    /// Fit every enabled model, using saved tuning results when present.
    Train(Common),
    /// Score saved models on the test window and write the report and plots.
    Evaluate(Common),
    /// All steps end to end.
    Run(Tuning),
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Only process this scenario (`full` or a season name).
    #[arg(long)]
    scenario: Option<String>,
}

#[derive(Args, Clone)]
struct Tuning {
    #[command(flatten)]
    common: Common,
    /// Search the full 65,536-candidate boosting grid instead of the configured one.
    #[arg(long)]
    full_grid: bool,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Returns `false` when a scenario failed but the command itself completed.
fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Generate(c) => generate_cmd(&c.load()?).map(|_| true),
        Command::Preprocess(c) => preprocess_cmd(&c.load()?).map(|_| true),
        Command::Tune(t) => tune_cmd(&t.common.load()?, t.common.scenario.as_deref(), t.full_grid),
        Command::Train(c) => train_cmd(&c.load()?, c.scenario.as_deref()),
        Command::Evaluate(c) => evaluate_cmd(&c.load()?, c.scenario.as_deref()),
        Command::Run(t) => run_cmd(&t.common.load()?, t.common.scenario.clone(), t.full_grid),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn generate_cmd(cfg: &PipelineConfig) -> Result<()> {
    let Some(sc) = synth_config(cfg)? else {
        bail!("`generate` needs a synthetic input in {}", cfg.name);
    };
    let (records, injections) = generate::<f64>(&sc)?;
    let dir = cfg.output_dir.join("data");
    let csv = dir.join(format!("{}.csv", cfg.name));
    write_records(create(&csv)?, &records)?;
    SourceMeta {
        unit: sc.profile.resolution.unit(),
        resolution_minutes: sc.profile.resolution.minutes(),
    }
    .write(&dir.join(format!("{}.meta.toml", cfg.name)))?;
    injections.write(&dir.join(format!("{}.injections.json", cfg.name)))?;
    println!(
        "wrote {} records ({} hours, {} spikes, {} gaps) to {}",
        records.len(),
        injections.hours,
        injections.outliers.len(),
        injections.gaps.len(),
        csv.display()
    );
    Ok(())
}

fn preprocess_cmd(cfg: &PipelineConfig) -> Result<()> {
    let pre = preprocess(cfg, &ingest(cfg)?)?;
    let dir = cfg.output_dir.join("data");
    let csv = dir.join(format!("{}.hourly.csv", cfg.name));
    write_hourly(create(&csv)?, &pre.series)?;
    let flagged: Vec<usize> = pre
        .outlier_mask
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect();
    let summary = serde_json::json!({ "summary": pre.summary, "outlier_indices": flagged });
    std::fs::write(
        dir.join(format!("{}.preprocess.json", cfg.name)),
        serde_json::to_string_pretty(&summary)?,
    )?;
    println!(
        "{} hours from {} to {}; {} load gaps filled, {} outliers replaced -> {}",
        pre.summary.hours,
        pre.summary.start,
        pre.summary.end,
        pre.summary.missing_load_filled,
        pre.summary.outliers_replaced,
        csv.display()
    );
    Ok(())
}

/// Runs `step` on every selected scenario; a failing scenario is reported
/// and the others still run.
fn for_each_scenario(
    cfg: &PipelineConfig,
    only: Option<&str>,
    mut step: impl FnMut(&str, &loadcast_core::HourlySeries64) -> Result<()>,
) -> Result<bool> {
    let pre = preprocess(cfg, &ingest(cfg)?)?;
    let mut ok = true;
    for (name, series) in scenarios(cfg, &pre.series, only)? {
        if let Err(e) = step(&name, &series) {
            eprintln!("scenario `{name}`: {e:#}");
            ok = false;
        }
    }
    Ok(ok)
}

fn tune_cmd(cfg: &PipelineConfig, only: Option<&str>, full_grid: bool) -> Result<bool> {
    let out = &cfg.output_dir;
    for_each_scenario(cfg, only, |name, series| {
        let data = prepare(cfg, name, series)?;
        let results = tune(cfg, &data, full_grid)?;
        save_tuning(out, name, &results)?;
        for (model, r) in &results {
            println!(
                "{name}/{model}: best mean MAE {:.5} over {} candidates ({} infeasible)",
                r.best_mean_mae,
                r.candidates.len(),
                r.infeasible()
            );
            print!("{}", r.best_fragment());
        }
        Ok(())
    })
}

fn train_cmd(cfg: &PipelineConfig, only: Option<&str>) -> Result<bool> {
    let out = &cfg.output_dir;
    for_each_scenario(cfg, only, |name, series| {
        let data = prepare(cfg, name, series)?;
        let tuning = load_tuning(out, name)?;
        let trained = train(cfg, &data, &tuning)?;
        save_models(out, name, &trained)?;
        for (model, (_, secs)) in &trained.models {
            println!("{name}/{model}: fitted in {secs:.2} s");
        }
        Ok(())
    })
}

fn evaluate_cmd(cfg: &PipelineConfig, only: Option<&str>) -> Result<bool> {
    let out = &cfg.output_dir;
    let pre = preprocess(cfg, &ingest(cfg)?)?;
    let mut reports = Vec::new();
    let mut ok = true;
    for (name, series) in scenarios(cfg, &pre.series, only)? {
        let attempt = || -> Result<ScenarioOutcome> {
            let data = prepare(cfg, &name, &series)?;
            let trained = load_models(cfg, out, &name).context("loading models (run `train` first)")?;
            let tuning = load_tuning(out, &name)?;
            let (report, predictions) = evaluate_scenario(cfg, &data, &trained, tuning)?;
            Ok(ScenarioOutcome {
                report,
                trained: Some(trained),
                predictions,
                actual: data.test.y().to_vec(),
            })
        };
        match attempt() {
            Ok(outcome) => {
                write_plots(cfg, out, &outcome)?;
                reports.push(outcome.report);
            }
            Err(e) => {
                eprintln!("scenario `{name}`: {e:#}");
                ok = false;
                reports.push(ScenarioReport {
                    name: name.clone(),
                    hours: series.len(),
                    error: Some(format!("{e:#}")),
                    ..Default::default()
                });
            }
        }
    }
    let report = RunReport {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        seed: cfg.seed,
        generated_at: report_timestamp(),
        config: cfg.clone(),
        data: pre.summary,
        scenarios: reports,
    };
    write_report(out, &report)?;
    print!("{}", report.render_table());
    Ok(ok)
}

fn run_cmd(cfg: &PipelineConfig, scenario: Option<String>, full_grid: bool) -> Result<bool> {
    let opts = RunOptions {
        scenario,
        full_grid,
        write_artifacts: true,
    };
    let (report, _) = run(cfg, &opts)?;
    print!("{}", report.render_table());
    let failed: BTreeMap<&str, &str> = report
        .scenarios
        .iter()
        .filter_map(|s| s.error.as_deref().map(|e| (s.name.as_str(), e)))
        .collect();
    for (name, e) in &failed {
        eprintln!("scenario `{name}` failed: {e}");
    }
    println!("artifacts in {}", cfg.output_dir.display());
    Ok(failed.is_empty())
}
