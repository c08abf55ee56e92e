//! TOML pipeline configuration.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::baselines::{ArimaOrder, SvrParams};
use crate::error::{Error, Result};
use crate::features::FeatureSpec;
use crate::gbt::GbtHyperParams;
use crate::metrics::{MetricId, DEFAULT_MAPE_FLOOR};
use crate::preprocess::{OutlierPolicy, SeasonRange};
use crate::synth::{default_end, default_start, ClimateProfile, InjectionSpec, Resolution};
use crate::timeseries::LoadUnit;
use crate::tuning::{ParamGrid, DEFAULT_PATIENCE};

/// Horizon the shipped pipeline forecasts.
pub const PIPELINE_HORIZON: usize = 24;

/// Climate profile given either by preset name or in full.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileRef {
    Preset(String),
    Custom(ClimateProfile),
}

impl ProfileRef {
    pub fn resolve(&self) -> Result<ClimateProfile> {
        match self {
            ProfileRef::Preset(name) => ClimateProfile::by_name(name),
            ProfileRef::Custom(p) => Ok(p.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InputConfig {
    /// A `timestamp,load,temperature` file.
    Csv {
        path: PathBuf,
        unit: LoadUnit,
        /// Informational native interval in minutes.
        #[serde(default)]
        resolution_minutes: Option<u32>,
    },
    /// Generated data; the generator seed is derived from the run seed.
    Synthetic {
        profile: ProfileRef,
        #[serde(default = "default_start", with = "crate::timeseries::calendar_date")]
        start: NaiveDate,
        #[serde(default = "default_end", with = "crate::timeseries::calendar_date")]
        end: NaiveDate,
        /// Overrides the profile's native resolution.
        #[serde(default)]
        resolution: Option<Resolution>,
        #[serde(default)]
        injection: InjectionSpec,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub outliers: OutlierPolicy,
    /// Gaps up to this many hours carry the previous hour forward.
    pub short_gap_max: usize,
    pub seasons: Vec<SeasonRange>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            outliers: OutlierPolicy::default(),
            short_gap_max: 2,
            seasons: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Leading share of each scenario's rows used for training.
    pub train_fraction: f64,
    pub cv_folds: usize,
    pub mape_floor: f64,
    pub rank_by: MetricId,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            cv_folds: 5,
            mape_floor: DEFAULT_MAPE_FLOOR,
            rank_by: MetricId::Mape,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtConfig {
    /// Starting values; grid axes override them per candidate.
    pub params: GbtHyperParams,
    /// Grid searched before the final fit; no search when empty.
    pub grid: ParamGrid,
    /// Early-stopping patience for the final fit; `0` disables it.
    pub early_stopping_patience: usize,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            params: GbtHyperParams::default(),
            grid: ParamGrid::default(),
            early_stopping_patience: DEFAULT_PATIENCE,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArimaConfig {
    pub order: ArimaOrder,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrConfig {
    pub params: SvrParams,
    pub grid: ParamGrid,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsConfig {
    #[serde(default)]
    pub gbt: Option<GbtConfig>,
    #[serde(default)]
    pub arima: Option<ArimaConfig>,
    #[serde(default)]
    pub arimax: Option<ArimaConfig>,
    #[serde(default)]
    pub svr: Option<SvrConfig>,
}

impl ModelsConfig {
    /// Names of the enabled models in report order.
    pub fn enabled(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.gbt.is_some() {
            out.push("gbt");
        }
        if self.arima.is_some() {
            out.push("arima");
        }
        if self.arimax.is_some() {
            out.push("arimax");
        }
        if self.svr.is_some() {
            out.push("svr");
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotConfig {
    pub enabled: bool,
    /// Hours in the long overlay window.
    pub long_window: usize,
    /// Hours in the short overlay window.
    pub short_window: usize,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            long_window: 336,
            short_window: 24,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub input: InputConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub features: FeatureSpec,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    pub models: ModelsConfig,
    #[serde(default)]
    pub plots: PlotConfig,
}

fn default_name() -> String {
    "run".into()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative CSV input path is resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let InputConfig::Csv { path: input, .. } = &mut cfg.input {
            if input.is_relative() {
                if let Some(dir) = path.parent() {
                    *input = dir.join(&*input);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.features.horizon != PIPELINE_HORIZON {
            return bad(format!(
                "horizon must be {PIPELINE_HORIZON} hours, got {}",
                self.features.horizon
            ));
        }
        self.features.checked_lags()?;
        if self.models.enabled().is_empty() {
            return bad("at least one model must be enabled".into());
        }
        let e = &self.evaluation;
        if !(e.train_fraction > 0.0 && e.train_fraction < 1.0) {
            return bad(format!("train_fraction must lie in (0, 1), got {}", e.train_fraction));
        }
        if e.cv_folds < 2 {
            return bad(format!("cv_folds must be at least 2, got {}", e.cv_folds));
        }
        if !(e.mape_floor >= 0.0) {
            return bad("mape_floor must be non-negative".into());
        }
        self.preprocess.outliers.validate()?;
        for (i, s) in self.preprocess.seasons.iter().enumerate() {
            s.validate()?;
            if s.name == "full" || self.preprocess.seasons[..i].iter().any(|o| o.name == s.name) {
                return bad(format!("season name `{}` is reserved or repeated", s.name));
            }
        }
        if let Some(g) = &self.models.gbt {
            g.params.validate()?;
            g.grid.validate()?;
        }
        for a in [&self.models.arima, &self.models.arimax].into_iter().flatten() {
            a.order.validate()?;
        }
        if let Some(s) = &self.models.svr {
            s.params.validate()?;
            s.grid.validate()?;
        }
        if let InputConfig::Synthetic { profile, start, end, .. } = &self.input {
            profile.resolve()?.validate()?;
            if start > end {
                return bad(format!("synthetic start {start} is after end {end}"));
            }
        }
        if self.plots.enabled && (self.plots.long_window == 0 || self.plots.short_window == 0) {
            return bad("plot windows must be positive".into());
        }
        Ok(())
    }

    /// Scenario names: `full` followed by the configured seasons.
    pub fn scenario_names(&self) -> Vec<String> {
        std::iter::once("full".to_string())
            .chain(self.preprocess.seasons.iter().map(|s| s.name.clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        seed = 3
        [input]
        kind = "synthetic"
        profile = "tropical"
        [models.gbt]
        [models.arima]
    "#;

    #[test]
    fn minimal_config_parses() {
        let cfg = PipelineConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.models.enabled(), vec!["gbt", "arima"]);
        assert_eq!(cfg.features.horizon, 24);
        assert_eq!(cfg.preprocess.short_gap_max, 2);
        assert_eq!(cfg.scenario_names(), vec!["full"]);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = PipelineConfig::from_toml(MINIMAL).unwrap();
        let again = PipelineConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn dates_may_be_bare_or_quoted() {
        let text = "[input]\nkind = \"synthetic\"\nprofile = \"tropical\"\nstart = 2024-01-01\nend = \"2024-02-01\"\n\
                    [[preprocess.seasons]]\nname = \"jan\"\nstart_date = 2024-01-01\nend_date = \"2024-01-31\"\n\
                    [models.arima]\n";
        let cfg = PipelineConfig::from_toml(text).unwrap();
        let season = &cfg.preprocess.seasons[0];
        assert_eq!(season.end_date, NaiveDate::from_ymd_opt(2024, 1, 31).unwrap());
        match &cfg.input {
            InputConfig::Synthetic { start, .. } => assert_eq!(*start, NaiveDate::from_ymd_opt(2024, 1, 1).unwrap()),
            other => panic!("{other:?}"),
        }
        let again = PipelineConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
        assert!(PipelineConfig::from_toml(&text.replace("2024-01-31", "2024-13-01")).is_err());
    }

    #[test]
    fn rejects_bad_settings() {
        let no_models = "[input]\nkind = \"synthetic\"\nprofile = \"tropical\"\n[models]\n";
        assert!(PipelineConfig::from_toml(no_models).is_err());
        let leaky = format!("{MINIMAL}\n[features]\nlags = [1, 24]\nhorizon = 24\n");
        assert!(PipelineConfig::from_toml(&leaky).is_err());
        let horizon = format!("{MINIMAL}\n[features]\nlags = [48]\nhorizon = 48\n");
        assert!(PipelineConfig::from_toml(&horizon).is_err());
        let unknown = format!("{MINIMAL}\n[plots]\ncolour = true\n");
        assert!(PipelineConfig::from_toml(&unknown).is_err());
        let profile = MINIMAL.replace("tropical", "arctic");
        assert!(PipelineConfig::from_toml(&profile).is_err());
    }

    #[test]
    fn grid_axes_keep_their_order() {
        let text = format!(
            "{MINIMAL}\n[[models.gbt.grid]]\nname = \"max_depth\"\nvalues = [3, 5]\n\
             [[models.gbt.grid]]\nname = \"learning_rate\"\nvalues = [0.1]\n"
        );
        let cfg = PipelineConfig::from_toml(&text).unwrap();
        let grid = &cfg.models.gbt.unwrap().grid;
        assert_eq!(grid.axes[0].name, "max_depth");
        assert_eq!(grid.size(), 2);
    }
}
