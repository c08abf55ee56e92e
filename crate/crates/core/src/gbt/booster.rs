use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{gradients, GbtHyperParams};
use super::split::SplitParams;
use super::tree::{presort, RegressionTree, TreeGrower};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::persist;
use crate::scalar::{compensated_sum, Scalar};

pub const MODEL_FORMAT: &str = "loadcast.gbt";

/// Column-major training data. Feature values may be NaN (missing).
#[derive(Clone, Debug)]
pub struct DenseData<T> {
    pub names: Vec<String>,
    pub columns: Vec<Vec<T>>,
    pub y: Vec<T>,
}

impl<T: Scalar> DenseData<T> {
    pub fn new(names: Vec<String>, columns: Vec<Vec<T>>, y: Vec<T>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::LengthMismatch {
                expected: names.len(),
                actual: columns.len(),
            });
        }
        if let Some(c) = columns.iter().find(|c| c.len() != y.len()) {
            return Err(Error::LengthMismatch {
                expected: y.len(),
                actual: c.len(),
            });
        }
        Ok(Self { names, columns, y })
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }
}

impl<T: Scalar> From<&FeatureMatrix<T>> for DenseData<T> {
    fn from(m: &FeatureMatrix<T>) -> Self {
        Self {
            names: m.names().to_vec(),
            columns: m.columns(),
            y: m.y().to_vec(),
        }
    }
}

/// A fitted boosted ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtModel<T> {
    pub base_score: T,
    pub learning_rate: T,
    pub feature_names: Vec<String>,
    pub trees: Vec<RegressionTree<T>>,
    /// Number of leading trees used for prediction.
    pub best_iteration: usize,
    /// Validation MAE after each boosting round, when a validation set was given.
    pub validation_mae: Vec<T>,
    pub params: GbtHyperParams,
}

fn mae<T: Scalar>(y: &[T], pred: &[T]) -> T {
    compensated_sum(y.iter().zip(pred).map(|(&a, &b)| (a - b).abs())) / T::of_usize(y.len().max(1))
}

impl<T: Scalar> GbtModel<T> {
    /// Fits on a feature matrix, optionally tracking a validation matrix.
    pub fn fit(
        train: &FeatureMatrix<T>,
        params: &GbtHyperParams,
        validation: Option<&FeatureMatrix<T>>,
    ) -> Result<Self> {
        if let Some(v) = validation {
            if v.names() != train.names() {
                return Err(Error::FeatureMismatch {
                    expected: train.names().to_vec(),
                    actual: v.names().to_vec(),
                });
            }
        }
        let val = validation.map(DenseData::from);
        Self::fit_dense(&DenseData::from(train), params, val.as_ref())
    }

    /// Boosting loop over column-major data.
    pub fn fit_dense(
        train: &DenseData<T>,
        params: &GbtHyperParams,
        validation: Option<&DenseData<T>>,
    ) -> Result<Self> {
        params.validate()?;
        let n = train.n_rows();
        if n == 0 {
            return Err(Error::Empty);
        }
        if let Some(index) = train.y.iter().position(|v| !v.is_finite()) {
            return Err(Error::MissingValues { channel: "target", index });
        }
        if params.early_stopping_patience.is_some() && validation.is_none_or(|v| v.n_rows() == 0) {
            return Err(Error::InvalidParam(
                "early stopping needs a non-empty validation set".into(),
            ));
        }
        let n_features = train.columns.len();
        let base_score = match params.base_score {
            Some(b) => T::of(b),
            None => compensated_sum(train.y.iter().copied()) / T::of_usize(n),
        };
        let learning_rate = T::of(params.learning_rate);
        let split_params = SplitParams::new(params.lambda, params.alpha, params.gamma, params.min_child_weight);

        let orders: Vec<Vec<u32>> = train.columns.iter().map(|c| presort(c)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let n_rows_per_tree = ((params.subsample * n as f64).round() as usize).clamp(1, n);
        let n_cols_per_tree = ((params.colsample_bytree * n_features as f64).round() as usize).clamp(1, n_features.max(1));

        let mut pred = vec![base_score; n];
        let mut val_pred = validation.map(|v| vec![base_score; v.n_rows()]);
        let mut trees = Vec::with_capacity(params.n_estimators);
        let mut validation_mae = Vec::new();
        let mut best: Option<(usize, T)> = None;

        for round in 1..=params.n_estimators {
            let (grad, hess) = gradients(&train.y, &pred, params.loss)?;
            let rows: Vec<u32> = if n_rows_per_tree < n {
                let mut idx: Vec<u32> = sample(&mut rng, n, n_rows_per_tree)
                    .into_iter()
                    .map(|i| i as u32)
                    .collect();
                idx.sort_unstable();
                idx
            } else {
                (0..n as u32).collect()
            };
            let features: Vec<usize> = if n_cols_per_tree < n_features {
                let mut idx = sample(&mut rng, n_features, n_cols_per_tree).into_vec();
                idx.sort_unstable();
                idx
            } else {
                (0..n_features).collect()
            };
            let presorted: Vec<&[u32]> = features.iter().map(|&f| orders[f].as_slice()).collect();
            let tree = TreeGrower::new(&train.columns, &grad, &hess, &features, split_params, params.max_depth)
                .grow(&rows, &presorted)?;

            for (i, p) in pred.iter_mut().enumerate() {
                *p += learning_rate * tree.predict_with(|j| train.columns[j][i]);
            }
            if let (Some(v), Some(vp)) = (validation, val_pred.as_mut()) {
                for (i, p) in vp.iter_mut().enumerate() {
                    *p += learning_rate * tree.predict_with(|j| v.columns[j][i]);
                }
                let score = mae(&v.y, vp);
                validation_mae.push(score);
                if best.is_none_or(|(_, b)| score < b) {
                    best = Some((round, score));
                }
            }
            trees.push(tree);

            if let (Some(patience), Some((best_round, _))) = (params.early_stopping_patience, best) {
                if round - best_round >= patience {
                    break;
                }
            }
        }

        let best_iteration = match (params.early_stopping_patience, best) {
            (Some(_), Some((r, _))) => r,
            _ => trees.len(),
        };
        Ok(Self {
            base_score,
            learning_rate,
            feature_names: train.names.clone(),
            trees,
            best_iteration,
            validation_mae,
            params: params.clone(),
        })
    }

    /// Trees that take part in prediction.
    pub fn active_trees(&self) -> &[RegressionTree<T>] {
        &self.trees[..self.best_iteration.min(self.trees.len())]
    }

    pub fn predict_row(&self, row: &[T]) -> T {
        let sum = self
            .active_trees()
            .iter()
            .fold(T::zero(), |acc, t| acc + t.predict_row(row));
        self.base_score + self.learning_rate * sum
    }

    /// Predicts row-major rows of width `feature_names.len()`; NaN marks a
    /// missing value.
    pub fn predict_rows(&self, rows: &[T]) -> Result<Vec<T>> {
        let width = self.feature_names.len();
        if width == 0 || !rows.len().is_multiple_of(width) {
            return Err(Error::LengthMismatch {
                expected: width,
                actual: rows.len(),
            });
        }
        Ok(rows.chunks(width).map(|r| self.predict_row(r)).collect())
    }

    pub fn predict(&self, matrix: &FeatureMatrix<T>) -> Result<Vec<T>> {
        if matrix.names() != self.feature_names.as_slice() {
            return Err(Error::FeatureMismatch {
                expected: self.feature_names.clone(),
                actual: matrix.names().to_vec(),
            });
        }
        Ok(matrix.rows().map(|r| self.predict_row(r)).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        persist::encode::<T, _>(MODEL_FORMAT, self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        persist::decode::<T, _>(MODEL_FORMAT, text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        persist::write(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&persist::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(x: Vec<f64>, y: Vec<f64>) -> DenseData<f64> {
        DenseData::new(vec!["x".into()], vec![x], y).unwrap()
    }

    #[test]
    fn single_forced_leaf() {
        let params = GbtHyperParams {
            n_estimators: 1,
            learning_rate: 1.0,
            lambda: 0.0,
            max_depth: 0,
            base_score: Some(0.5),
            ..Default::default()
        };
        let m = GbtModel::fit_dense(&data(vec![0.0, 1.0, 2.0], vec![1.0; 3]), &params, None).unwrap();
        assert_eq!(m.trees[0].leaf_weights(), vec![0.5]);
        assert_eq!(m.predict_row(&[42.0]), 1.0);
        assert_eq!(m.predict_rows(&[0.0, 1.0, 2.0]).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn zero_active_trees_predicts_base() {
        let params = GbtHyperParams {
            n_estimators: 3,
            ..Default::default()
        };
        let mut m = GbtModel::fit_dense(&data(vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 6.0]), &params, None).unwrap();
        m.best_iteration = 0;
        assert_eq!(m.predict_row(&[1.0]), 3.0);
    }

    #[test]
    fn empty_training_rejected() {
        let r = GbtModel::fit_dense(&data(vec![], vec![]), &GbtHyperParams::default(), None);
        assert!(matches!(r, Err(Error::Empty)));
    }

    #[test]
    fn missing_target_rejected() {
        let r = GbtModel::fit_dense(&data(vec![1.0, 2.0], vec![0.5, f64::NAN]), &GbtHyperParams::default(), None);
        assert!(matches!(r, Err(Error::MissingValues { channel: "target", index: 1 })));
    }

    #[test]
    fn patience_needs_validation() {
        let params = GbtHyperParams {
            early_stopping_patience: Some(3),
            ..Default::default()
        };
        let r = GbtModel::fit_dense(&data(vec![0.0, 1.0], vec![0.0, 1.0]), &params, None);
        assert!(matches!(r, Err(Error::InvalidParam(_))));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.77).sin()).collect();
        let y: Vec<f64> = x.iter().map(|v| v * 3.1 + 0.123456789).collect();
        let params = GbtHyperParams {
            n_estimators: 5,
            subsample: 0.8,
            ..Default::default()
        };
        let m = GbtModel::fit_dense(&data(x, y), &params, None).unwrap();
        let back = GbtModel::<f64>::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(GbtModel::<f32>::from_json(&m.to_json().unwrap()).is_err());
    }
}
