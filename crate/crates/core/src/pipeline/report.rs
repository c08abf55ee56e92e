//! Run report: JSON document plus a plain-text summary table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use crate::error::Result;
use crate::gbt::GbtHyperParams;
use crate::metrics::{rank_models, MetricBundle, MetricId};
use crate::tuning::TuningResult;

pub const TOOL_NAME: &str = "loadcast";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Counts from ingestion and preprocessing of the full series.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub native_records: usize,
    pub hours: usize,
    pub start: String,
    pub end: String,
    pub missing_load_filled: usize,
    pub missing_temperature_filled: usize,
    pub outliers_flagged: usize,
    pub outliers_replaced: usize,
    pub short_gap_max: usize,
}

/// Model-specific facts worth recording next to the metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelDetails {
    Gbt {
        trees: usize,
        best_iteration: usize,
        params: GbtHyperParams,
    },
    Arima {
        order: [usize; 3],
        intercept: f64,
        phi: Vec<f64>,
        theta: Vec<f64>,
        beta: Option<f64>,
        residual_variance: f64,
    },
    Svr {
        support_vectors: usize,
        c: f64,
        epsilon: f64,
        kernel: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub metrics: MetricBundle<f64>,
    pub details: ModelDetails,
    /// Model file relative to the output directory.
    pub model_file: Option<String>,
    pub fit_secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub hours: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub test_start: String,
    pub models: BTreeMap<String, ModelReport>,
    pub tuning: BTreeMap<String, TuningResult>,
    pub rank_by: Option<MetricId>,
    /// Best first.
    pub ranking: Vec<String>,
    /// Set when the scenario was aborted; names the failing step.
    pub error: Option<String>,
}

impl ScenarioReport {
    /// Recomputes the ranking from the model bundles.
    pub fn rank(&mut self, key: MetricId) {
        let bundles: BTreeMap<String, MetricBundle<f64>> =
            self.models.iter().map(|(k, v)| (k.clone(), v.metrics.clone())).collect();
        self.rank_by = Some(key);
        match rank_models(&bundles, key) {
            Ok(order) => self.ranking = order,
            Err(e) => {
                log::warn!("scenario {}: cannot rank models: {e}", self.name);
                self.ranking.clear();
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub generated_at: String,
    pub config: PipelineConfig,
    pub data: DataSummary,
    pub scenarios: Vec<ScenarioReport>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn scenario(&self, name: &str) -> Option<&ScenarioReport> {
        self.scenarios.iter().find(|s| s.name == name)
    }

    /// Copy with run-dependent timing fields cleared.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.generated_at.clear();
        for s in &mut r.scenarios {
            for m in s.models.values_mut() {
                m.fit_secs = 0.0;
            }
            for t in s.tuning.values_mut() {
                *t = t.without_timings();
            }
        }
        r
    }

    /// Plain-text tables, one per scenario, with models as rows.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} | run `{}` | seed {}", self.tool, self.version, self.config.name, self.seed);
        let _ = writeln!(
            out,
            "data: {} hours from {} to {}; {} load gaps filled, {} outliers flagged",
            self.data.hours, self.data.start, self.data.end, self.data.missing_load_filled, self.data.outliers_flagged
        );
        for s in &self.scenarios {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "Day-ahead load forecasting: {} ({} train / {} test rows)",
                s.name, s.train_rows, s.test_rows
            );
            if let Some(e) = &s.error {
                let _ = writeln!(out, "  aborted: {e}");
                continue;
            }
            let _ = writeln!(
                out,
                "  {:<8} {:>10} {:>10} {:>10} {:>9} {:>8}",
                "model", "MAE", "MSE", "RMSE", "MAPE%", "R2"
            );
            let order: Vec<&String> = if s.ranking.len() == s.models.len() {
                s.ranking.iter().collect()
            } else {
                s.models.keys().collect()
            };
            for name in order {
                let m = &s.models[name].metrics;
                let opt = |v: Option<f64>, prec: usize| v.map_or("n/a".to_string(), |x| format!("{x:.prec$}"));
                let _ = writeln!(
                    out,
                    "  {:<8} {:>10.4} {:>10.4} {:>10.4} {:>9} {:>8}",
                    name,
                    m.mae,
                    m.mse,
                    m.rmse,
                    opt(m.mape, 2),
                    opt(m.r2, 4)
                );
            }
            if let Some(key) = s.rank_by {
                if !s.ranking.is_empty() {
                    let _ = writeln!(out, "  ranking by {key}: {}", s.ranking.join(" > "));
                }
            }
        }
        out
    }
}
