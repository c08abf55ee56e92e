//! Supervised-matrix construction, standardization, chronological splitting
//! and expanding-window cross-validation folds.

use std::ops::Range;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, Scalar};
use crate::timeseries::{calendar_of, HourlySeries};

/// Lag set and horizon for [`build_supervised`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub lags: Vec<usize>,
    pub horizon: usize,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            lags: vec![24, 25, 26, 48, 72, 168],
            horizon: 24,
        }
    }
}

impl FeatureSpec {
    /// Sorted, de-duplicated lags after the causality check.
    pub fn checked_lags(&self) -> Result<Vec<usize>> {
        let mut lags = self.lags.clone();
        lags.sort_unstable();
        lags.dedup();
        match lags.first() {
            None => Err(Error::InvalidParam("lag set is empty".into())),
            Some(&lag) if lag < self.horizon => Err(Error::LeakyLag {
                lag,
                horizon: self.horizon,
            }),
            Some(_) => Ok(lags),
        }
    }
}

/// Dense row-major design matrix with targets and target timestamps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix<T> {
    names: Vec<String>,
    x: Vec<T>,
    y: Vec<T>,
    timestamps: Vec<DateTime<Utc>>,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(names: Vec<String>, x: Vec<T>, y: Vec<T>, timestamps: Vec<DateTime<Utc>>) -> Result<Self> {
        let f = names.len();
        if x.len() != y.len() * f {
            return Err(Error::LengthMismatch {
                expected: y.len() * f,
                actual: x.len(),
            });
        }
        if timestamps.len() != y.len() {
            return Err(Error::LengthMismatch {
                expected: y.len(),
                actual: timestamps.len(),
            });
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Unsorted { index: i + 1 });
        }
        if let Some(i) = x.iter().chain(&y).position(|v| !v.is_finite()) {
            return Err(Error::MissingValues {
                channel: "feature matrix",
                index: i,
            });
        }
        Ok(Self { names, x, y, timestamps })
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn x(&self) -> &[T] {
        &self.x
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn timestamps(&self) -> &[DateTime<Utc>] {
        &self.timestamps
    }

    pub fn row(&self, i: usize) -> &[T] {
        let f = self.n_features();
        &self.x[i * f..(i + 1) * f]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.x.chunks(self.n_features().max(1)).take(self.n_rows())
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = T> + '_ {
        self.x.iter().skip(j).step_by(self.n_features()).copied()
    }

    /// Column-major copy of the features.
    pub fn columns(&self) -> Vec<Vec<T>> {
        (0..self.n_features()).map(|j| self.column(j).collect()).collect()
    }

    pub fn slice_rows(&self, range: Range<usize>) -> Self {
        let f = self.n_features();
        Self {
            names: self.names.clone(),
            x: self.x[range.start * f..range.end * f].to_vec(),
            y: self.y[range.clone()].to_vec(),
            timestamps: self.timestamps[range].to_vec(),
        }
    }
}

/// Builds one row per target hour `t` whose lags are all available.
///
/// Features, in order: `load_lag_<l>` for each lag ascending, then
/// `hour_of_day`, `day_of_week`, `day_of_year`, `is_weekend`, and the
/// temperature at `t` (treated as a known day-ahead weather forecast).
pub fn build_supervised<T: Scalar>(series: &HourlySeries<T>, spec: &FeatureSpec) -> Result<FeatureMatrix<T>> {
    let lags = spec.checked_lags()?;
    let max_lag = *lags.last().expect("non-empty");
    if series.len() < max_lag + 1 {
        return Err(Error::TooShort {
            len: series.len(),
            needed: max_lag + 1,
        });
    }
    let load = series.complete_load()?;
    let temperature = series.complete_temperature()?;

    let mut names: Vec<String> = lags.iter().map(|l| format!("load_lag_{l}")).collect();
    names.extend(
        ["hour_of_day", "day_of_week", "day_of_year", "is_weekend", "temperature"]
            .iter()
            .map(|s| s.to_string()),
    );

    let n = series.len() - max_lag;
    let mut x = Vec::with_capacity(n * names.len());
    let mut y = Vec::with_capacity(n);
    let mut timestamps = Vec::with_capacity(n);
    for t in max_lag..series.len() {
        x.extend(lags.iter().map(|&l| load[t - l]));
        let ts = series.timestamp(t);
        let cal = calendar_of(ts);
        x.push(T::of(cal.hour_of_day as f64));
        x.push(T::of(cal.day_of_week as f64));
        x.push(T::of(cal.day_of_year as f64));
        x.push(if cal.is_weekend { T::one() } else { T::zero() });
        x.push(temperature[t]);
        y.push(load[t]);
        timestamps.push(ts);
    }
    FeatureMatrix::new(names, x, y, timestamps)
}

/// Per-column standardization statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats<T> {
    pub mean: Vec<T>,
    /// Population standard deviation.
    pub std: Vec<T>,
    /// Columns with zero variance are divided by 1 instead of their std.
    pub unit_divisor: Vec<bool>,
}

impl<T: Scalar> ScalerStats<T> {
    fn divisor(&self, j: usize) -> T {
        if self.unit_divisor[j] {
            T::one()
        } else {
            self.std[j]
        }
    }

    pub fn transform(&self, matrix: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
        self.map(matrix, |v, mean, div| (v - mean) / div)
    }

    pub fn inverse_transform(&self, matrix: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
        self.map(matrix, |v, mean, div| v * div + mean)
    }

    /// Standardizes one raw feature row in place.
    pub fn transform_row(&self, row: &mut [T]) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - self.mean[j]) / self.divisor(j);
        }
    }

    fn map(&self, matrix: &FeatureMatrix<T>, f: impl Fn(T, T, T) -> T) -> Result<FeatureMatrix<T>> {
        let width = self.mean.len();
        if matrix.n_features() != width {
            return Err(Error::LengthMismatch {
                expected: width,
                actual: matrix.n_features(),
            });
        }
        let x = matrix
            .x()
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let j = k % width;
                f(v, self.mean[j], self.divisor(j))
            })
            .collect();
        Ok(FeatureMatrix {
            names: matrix.names.clone(),
            x,
            y: matrix.y.clone(),
            timestamps: matrix.timestamps.clone(),
        })
    }
}

pub fn fit_scaler<T: Scalar>(train: &FeatureMatrix<T>) -> ScalerStats<T> {
    let n = T::of_usize(train.n_rows().max(1));
    let mut mean = Vec::with_capacity(train.n_features());
    let mut std = Vec::with_capacity(train.n_features());
    for j in 0..train.n_features() {
        let m = compensated_sum(train.column(j)) / n;
        let var = compensated_sum(train.column(j).map(|v| (v - m) * (v - m))) / n;
        mean.push(m);
        std.push(var.sqrt());
    }
    let unit_divisor = std.iter().map(|&s| s <= T::zero()).collect();
    ScalerStats { mean, std, unit_divisor }
}

pub fn apply_scaler<T: Scalar>(stats: &ScalerStats<T>, matrix: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
    stats.transform(matrix)
}

/// Time-ordered split: the first `floor(fraction · N)` rows train.
pub fn chrono_split<T: Scalar>(
    matrix: &FeatureMatrix<T>,
    train_fraction: f64,
) -> Result<(FeatureMatrix<T>, FeatureMatrix<T>)> {
    let n = matrix.n_rows();
    if n < 5 {
        return Err(Error::TooShort { len: n, needed: 5 });
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParam(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let cut = (train_fraction * n as f64).floor() as usize;
    if cut == 0 || cut == n {
        return Err(Error::InvalidParam(format!(
            "train fraction {train_fraction} leaves an empty side for {n} rows"
        )));
    }
    Ok((matrix.slice_rows(0..cut), matrix.slice_rows(cut..n)))
}

/// One expanding-window fold.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvFold {
    pub train: Range<usize>,
    pub validation: Range<usize>,
}

/// Expanding-window folds over `n` time-ordered samples.
///
/// With `t = floor(n / (k + 1))`, fold `i ≥ 2` validates on
/// `[n − (k−i+1)·t, n − (k−i)·t)` and trains on everything before it. The
/// first fold trains on `[0, t)` and validates on `[t, n − (k−1)·t)`, so it
/// absorbs the `n mod (k+1)` remainder and the validation windows partition
/// `[t, n)`.
pub fn ts_cv_folds(n: usize, k: usize) -> Result<Vec<CvFold>> {
    if k == 0 {
        return Err(Error::InvalidParam("fold count must be at least 1".into()));
    }
    if n < k + 1 {
        return Err(Error::TooShort { len: n, needed: k + 1 });
    }
    let t = n / (k + 1);
    Ok((1..=k)
        .map(|i| {
            let start = if i == 1 { t } else { n - (k - i + 1) * t };
            let end = n - (k - i) * t;
            CvFold {
                train: 0..start,
                validation: start..end,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;

    fn t0() -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2024-01-01T00:00:00Z").unwrap().with_timezone(&Utc)
    }

    fn constant_series(n: usize, c: f64) -> HourlySeries<f64> {
        HourlySeries::from_values(t0(), &vec![c; n], &vec![15.0; n]).unwrap()
    }

    fn matrix(col: &[f64]) -> FeatureMatrix<f64> {
        let ts = (0..col.len()).map(|i| t0() + Duration::hours(i as i64)).collect();
        FeatureMatrix::new(vec!["a".into()], col.to_vec(), col.to_vec(), ts).unwrap()
    }

    #[test]
    fn row_and_feature_counts() {
        let spec = FeatureSpec {
            lags: vec![24, 48, 168],
            horizon: 24,
        };
        let m = build_supervised(&constant_series(200, 1.0), &spec).unwrap();
        assert_eq!(m.n_rows(), 32);
        assert_eq!(m.n_features(), 8);
        assert_eq!(m.timestamps()[0], t0() + Duration::hours(168));
    }

    #[test]
    fn constant_propagates() {
        let spec = FeatureSpec {
            lags: vec![24, 48, 168],
            horizon: 24,
        };
        let m = build_supervised(&constant_series(200, 0.7), &spec).unwrap();
        for i in 0..m.n_rows() {
            assert_eq!(&m.row(i)[..3], &[0.7, 0.7, 0.7]);
            assert_eq!(m.y()[i], 0.7);
        }
    }

    #[test]
    fn lag_features_point_backwards() {
        let n = 300;
        let load: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let s = HourlySeries::from_values(t0(), &load, &load).unwrap();
        let m = build_supervised(&s, &FeatureSpec::default()).unwrap();
        for i in 0..m.n_rows() {
            let target = m.y()[i];
            assert_eq!(m.row(i)[0], target - 24.0);
            assert_eq!(m.row(i)[5], target - 168.0);
            assert_eq!(m.row(i)[10], target);
        }
        assert_eq!(m.names()[6], "hour_of_day");
    }

    #[test]
    fn leaky_or_short_inputs_rejected() {
        let spec = FeatureSpec {
            lags: vec![1, 24],
            horizon: 24,
        };
        assert!(matches!(
            build_supervised(&constant_series(200, 1.0), &spec),
            Err(Error::LeakyLag { lag: 1, horizon: 24 })
        ));
        assert!(matches!(
            build_supervised(&constant_series(168, 1.0), &FeatureSpec::default()),
            Err(Error::TooShort { len: 168, needed: 169 })
        ));
    }

    #[test]
    fn scaler_hand_values() {
        let m = matrix(&[1.0, 2.0, 3.0]);
        let stats = fit_scaler(&m);
        let s = apply_scaler(&stats, &m).unwrap();
        let expected = [-1.224744871391589, 0.0, 1.224744871391589];
        for (a, b) in s.x().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let again = apply_scaler(&stats, &m).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn scaler_constant_column_only_centers() {
        let m = matrix(&[4.0, 4.0, 4.0]);
        let stats = fit_scaler(&m);
        assert!(stats.unit_divisor[0]);
        let s = apply_scaler(&stats, &m).unwrap();
        assert_eq!(s.x(), &[0.0, 0.0, 0.0]);
        assert_eq!(stats.inverse_transform(&s).unwrap(), m);
    }

    #[test]
    fn split_counts() {
        let (a, b) = chrono_split(&matrix(&[0.0; 10]), 0.8).unwrap();
        assert_eq!((a.n_rows(), b.n_rows()), (8, 2));
        let (a, b) = chrono_split(&matrix(&[0.0; 7]), 0.8).unwrap();
        assert_eq!((a.n_rows(), b.n_rows()), (5, 2));
        assert!(a.timestamps().last() < b.timestamps().first());
        assert!(chrono_split(&matrix(&[0.0; 4]), 0.8).is_err());
    }

    #[test]
    fn fold_formula_example() {
        let folds = ts_cv_folds(12, 5).unwrap();
        assert_eq!(folds.len(), 5);
        assert_eq!(folds[0], CvFold { train: 0..2, validation: 2..4 });
        assert_eq!(folds[4], CvFold { train: 0..10, validation: 10..12 });
        assert!(ts_cv_folds(5, 5).is_err());
    }

    #[test]
    fn first_fold_absorbs_remainder() {
        let folds = ts_cv_folds(13, 5).unwrap();
        assert_eq!(folds[0], CvFold { train: 0..2, validation: 2..5 });
        assert_eq!(folds[1], CvFold { train: 0..5, validation: 5..7 });
    }
}
