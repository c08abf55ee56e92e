//! Exhaustive grid search with expanding-window cross-validation.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::SvrParams;
use crate::error::{Error, Result};
use crate::features::{ts_cv_folds, FeatureMatrix};
use crate::gbt::{GbtHyperParams, GbtModel};
use crate::metrics::{evaluate, MetricBundle};
use crate::scalar::{compensated_sum, Scalar};

/// Share of the training window held out for early stopping in the final fit.
pub const EARLY_STOPPING_FRACTION: f64 = 0.1;
pub const DEFAULT_PATIENCE: usize = 20;

/// One hyperparameter and its candidate values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub name: String,
    pub values: Vec<f64>,
}

/// Ordered candidate lists; the first axis varies slowest.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamGrid {
    pub axes: Vec<GridAxis>,
}

impl ParamGrid {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, values: &[f64]) -> Self {
        self.axes.push(GridAxis {
            name: name.to_string(),
            values: values.to_vec(),
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (i, axis) in self.axes.iter().enumerate() {
            if axis.values.is_empty() {
                return Err(Error::InvalidParam(format!("grid axis `{}` has no values", axis.name)));
            }
            if self.axes[..i].iter().any(|a| a.name == axis.name) {
                return Err(Error::InvalidParam(format!("grid axis `{}` repeated", axis.name)));
            }
        }
        Ok(())
    }

    /// Number of candidates in the Cartesian product.
    pub fn size(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    /// The `index`-th candidate in enumeration order.
    pub fn candidate(&self, mut index: usize) -> Vec<(String, f64)> {
        let mut out = vec![(String::new(), 0.0); self.axes.len()];
        for (k, axis) in self.axes.iter().enumerate().rev() {
            let n = axis.values.len();
            out[k] = (axis.name.clone(), axis.values[index % n]);
            index /= n;
        }
        out
    }
}

/// The eight-knob boosting grid with four values per knob.
pub fn full_gbt_grid() -> ParamGrid {
    ParamGrid::new()
        .with("n_estimators", &[50.0, 100.0, 150.0, 200.0])
        .with("learning_rate", &[0.01, 0.05, 0.1, 0.2])
        .with("max_depth", &[3.0, 5.0, 7.0, 10.0])
        .with("min_child_weight", &[1.0, 3.0, 5.0, 7.0])
        .with("subsample", &[0.7, 0.8, 0.9, 1.0])
        .with("colsample_bytree", &[0.7, 0.8, 0.9, 1.0])
        .with("lambda", &[0.0, 0.1, 1.0, 10.0])
        .with("alpha", &[0.0, 0.1, 1.0, 10.0])
}

/// Cartesian product in lexicographic order of the declared axis order.
pub fn enumerate_grid(grid: &ParamGrid) -> Vec<Vec<(String, f64)>> {
    (0..grid.size()).map(|i| grid.candidate(i)).collect()
}

/// Parameter sets that grid search can adjust by name.
pub trait Tunable: Clone + Send + Sync {
    fn set(&mut self, name: &str, value: f64) -> Result<()>;
}

impl Tunable for GbtHyperParams {
    fn set(&mut self, name: &str, value: f64) -> Result<()> {
        GbtHyperParams::set(self, name, value)
    }
}

impl Tunable for SvrParams {
    fn set(&mut self, name: &str, value: f64) -> Result<()> {
        SvrParams::set(self, name, value)
    }
}

/// `base` with every value of `candidate` applied.
pub fn apply<P: Tunable>(base: &P, candidate: &[(String, f64)]) -> Result<P> {
    let mut p = base.clone();
    for (name, value) in candidate {
        p.set(name, *value)?;
    }
    Ok(p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub index: usize,
    pub params: Vec<(String, f64)>,
    /// Validation MAE per fold; empty when the candidate failed.
    pub fold_mae: Vec<f64>,
    pub mean_mae: Option<f64>,
    /// Why the candidate was excluded, if it was.
    pub error: Option<String>,
    pub wall_clock_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub folds: usize,
    pub candidates: Vec<CandidateResult>,
    pub best_index: usize,
    pub best_params: Vec<(String, f64)>,
    pub best_mean_mae: f64,
}

impl TuningResult {
    pub fn infeasible(&self) -> usize {
        self.candidates.iter().filter(|c| c.mean_mae.is_none()).count()
    }

    /// The winning values as a standalone TOML table.
    pub fn best_fragment(&self) -> String {
        let mut s = String::new();
        for (name, value) in &self.best_params {
            s.push_str(&format!("{name} = {value:?}\n"));
        }
        s
    }

    /// Copy without wall-clock timings, for reproducibility comparisons.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        for c in &mut r.candidates {
            c.wall_clock_secs = 0.0;
        }
        r
    }
}

fn mae<T: Scalar>(y: &[T], pred: &[T]) -> f64 {
    (compensated_sum(y.iter().zip(pred).map(|(&a, &b)| (a - b).abs())) / T::of_usize(y.len().max(1))).as_f64()
}

/// Scores every candidate of `grid` by mean validation MAE over `k`
/// expanding-window folds of `train` and returns the minimizer.
///
/// `trainer(params, fold_train, fold_validation)` fits a model and returns
/// its predictions for the validation rows. Candidates run in parallel;
/// results are ordered by candidate index and ties go to the earliest one.
pub fn grid_search<T, P, F>(train: &FeatureMatrix<T>, base: &P, grid: &ParamGrid, k: usize, trainer: F) -> Result<TuningResult>
where
    T: Scalar,
    P: Tunable,
    F: Fn(&P, &FeatureMatrix<T>, &FeatureMatrix<T>) -> Result<Vec<T>> + Sync,
{
    grid.validate()?;
    let folds = ts_cv_folds(train.n_rows(), k)?;
    let windows: Vec<(FeatureMatrix<T>, FeatureMatrix<T>)> = folds
        .iter()
        .map(|f| (train.slice_rows(f.train.clone()), train.slice_rows(f.validation.clone())))
        .collect();

    let candidates: Vec<CandidateResult> = (0..grid.size())
        .into_par_iter()
        .map(|index| {
            let params = grid.candidate(index);
            let started = Instant::now();
            let outcome = apply(base, &params).and_then(|p| {
                windows
                    .iter()
                    .map(|(tr, va)| {
                        let pred = trainer(&p, tr, va)?;
                        if pred.len() != va.n_rows() {
                            return Err(Error::LengthMismatch {
                                expected: va.n_rows(),
                                actual: pred.len(),
                            });
                        }
                        Ok(mae(va.y(), &pred))
                    })
                    .collect::<Result<Vec<f64>>>()
            });
            let wall_clock_secs = started.elapsed().as_secs_f64();
            match outcome {
                Ok(fold_mae) => {
                    let mean = fold_mae.iter().sum::<f64>() / fold_mae.len() as f64;
                    CandidateResult {
                        index,
                        params,
                        mean_mae: mean.is_finite().then_some(mean),
                        error: (!mean.is_finite()).then(|| "non-finite validation error".to_string()),
                        fold_mae,
                        wall_clock_secs,
                    }
                }
                Err(e) => {
                    log::warn!("candidate {index} excluded: {e}");
                    CandidateResult {
                        index,
                        params,
                        fold_mae: Vec::new(),
                        mean_mae: None,
                        error: Some(e.to_string()),
                        wall_clock_secs,
                    }
                }
            }
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for c in &candidates {
        if let Some(m) = c.mean_mae {
            if best.is_none_or(|(_, b)| m < b) {
                best = Some((c.index, m));
            }
        }
    }
    let (best_index, best_mean_mae) = best.ok_or(Error::NoFeasibleCandidate)?;
    Ok(TuningResult {
        folds: k,
        best_params: candidates[best_index].params.clone(),
        candidates,
        best_index,
        best_mean_mae,
    })
}

/// Grid search for the boosted model.
pub fn tune_gbt<T: Scalar>(
    train: &FeatureMatrix<T>,
    base: &GbtHyperParams,
    grid: &ParamGrid,
    k: usize,
) -> Result<TuningResult> {
    grid_search(train, base, grid, k, |p: &GbtHyperParams, tr, va| {
        GbtModel::fit(tr, p, None)?.predict(va)
    })
}

#[derive(Clone, Debug)]
pub struct FinalFit<T> {
    pub model: GbtModel<T>,
    pub predictions: Vec<T>,
    pub metrics: MetricBundle<T>,
}

/// Refits on the leading part of `train`, early-stopping on its trailing
/// tenth, then scores the untouched `test` rows.
pub fn final_fit<T: Scalar>(
    train: &FeatureMatrix<T>,
    test: &FeatureMatrix<T>,
    params: &GbtHyperParams,
    early_stopping_patience: Option<usize>,
    mape_floor: T,
) -> Result<FinalFit<T>> {
    let n = train.n_rows();
    let held_out = ((n as f64 * EARLY_STOPPING_FRACTION).floor() as usize).max(1);
    if n <= held_out {
        return Err(Error::TooShort {
            len: n,
            needed: held_out + 1,
        });
    }
    let fit_rows = train.slice_rows(0..n - held_out);
    let stop_rows = train.slice_rows(n - held_out..n);
    let mut p = params.clone();
    p.early_stopping_patience = early_stopping_patience;
    let model = GbtModel::fit(&fit_rows, &p, Some(&stop_rows))?;
    let predictions = model.predict(test)?;
    let metrics = evaluate(test.y(), &predictions, mape_floor)?;
    Ok(FinalFit {
        model,
        predictions,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        let g = ParamGrid::new().with("a", &[1.0, 2.0]).with("b", &[1.0, 2.0, 3.0]);
        assert_eq!(enumerate_grid(&g).len(), 6);
        assert_eq!(full_gbt_grid().size(), 65_536);
        let single = ParamGrid::new().with("a", &[1.0]).with("b", &[2.0]);
        assert_eq!(enumerate_grid(&single).len(), 1);
    }

    #[test]
    fn first_axis_varies_slowest() {
        let g = ParamGrid::new().with("a", &[1.0, 2.0]).with("b", &[10.0, 20.0, 30.0]);
        let all = enumerate_grid(&g);
        let pairs: Vec<(f64, f64)> = all.iter().map(|c| (c[0].1, c[1].1)).collect();
        assert_eq!(
            pairs,
            vec![(1.0, 10.0), (1.0, 20.0), (1.0, 30.0), (2.0, 10.0), (2.0, 20.0), (2.0, 30.0)]
        );
    }

    #[test]
    fn empty_axis_rejected() {
        assert!(ParamGrid::new().with("a", &[]).validate().is_err());
        assert!(ParamGrid::new().with("a", &[1.0]).with("a", &[2.0]).validate().is_err());
    }

    #[test]
    fn fragment_is_valid_toml() {
        let r = TuningResult {
            folds: 5,
            candidates: Vec::new(),
            best_index: 0,
            best_params: vec![("max_depth".into(), 7.0), ("learning_rate".into(), 0.1)],
            best_mean_mae: 0.1,
        };
        let table: toml::Table = r.best_fragment().parse().unwrap();
        assert_eq!(table["max_depth"].as_float(), Some(7.0));
        let p = apply(&GbtHyperParams::default(), &r.best_params).unwrap();
        assert_eq!(p.max_depth, 7);
    }
}
