//! Forecast accuracy metrics and model ranking.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, CompensatedSum, Scalar};

/// Default MAPE floor in kW: targets at or below it are left out of MAPE.
pub const DEFAULT_MAPE_FLOOR: f64 = 0.01;

/// MAE, MSE, RMSE, MAPE (percent) and R² for one forecast.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle<T> {
    pub mae: T,
    pub mse: T,
    pub rmse: T,
    /// `None` when every target is at or below the floor.
    pub mape: Option<T>,
    /// `None` when the targets have zero variance.
    pub r2: Option<T>,
    /// Number of terms left out of MAPE by the floor.
    pub mape_excluded: usize,
    pub n: usize,
}

pub fn evaluate<T: Scalar>(y: &[T], yhat: &[T], mape_floor: T) -> Result<MetricBundle<T>> {
    if y.len() != yhat.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            actual: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::Empty);
    }
    let n = T::of_usize(y.len());
    let mut abs = CompensatedSum::new();
    let mut sq = CompensatedSum::new();
    let mut pct = CompensatedSum::new();
    let mut included = 0usize;
    for (&a, &p) in y.iter().zip(yhat) {
        let e = a - p;
        abs.add(e.abs());
        sq.add(e * e);
        if a.abs() > mape_floor {
            pct.add((e / a).abs());
            included += 1;
        }
    }
    let mse = sq.total() / n;
    let mean = compensated_sum(y.iter().copied()) / n;
    let ss_tot = compensated_sum(y.iter().map(|&a| (a - mean) * (a - mean)));
    Ok(MetricBundle {
        mae: abs.total() / n,
        mse,
        rmse: mse.sqrt(),
        mape: (included > 0).then(|| T::of(100.0) * pct.total() / T::of_usize(included)),
        r2: (ss_tot > T::zero()).then(|| T::one() - sq.total() / ss_tot),
        mape_excluded: y.len() - included,
        n: y.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricId {
    Mae,
    Mse,
    Rmse,
    Mape,
    R2,
}

impl MetricId {
    pub const ALL: [MetricId; 5] = [MetricId::Mae, MetricId::Mse, MetricId::Rmse, MetricId::Mape, MetricId::R2];

    pub fn higher_is_better(self) -> bool {
        matches!(self, MetricId::R2)
    }

    pub fn get<T: Scalar>(self, bundle: &MetricBundle<T>) -> Option<T> {
        match self {
            MetricId::Mae => Some(bundle.mae),
            MetricId::Mse => Some(bundle.mse),
            MetricId::Rmse => Some(bundle.rmse),
            MetricId::Mape => bundle.mape,
            MetricId::R2 => bundle.r2,
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricId::Mae => "MAE",
            MetricId::Mse => "MSE",
            MetricId::Rmse => "RMSE",
            MetricId::Mape => "MAPE",
            MetricId::R2 => "R2",
        })
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mae" => Ok(MetricId::Mae),
            "mse" => Ok(MetricId::Mse),
            "rmse" => Ok(MetricId::Rmse),
            "mape" => Ok(MetricId::Mape),
            "r2" => Ok(MetricId::R2),
            other => Err(Error::InvalidParam(format!("unknown metric `{other}`"))),
        }
    }
}

/// Orders models best-first by `key`; ties fall back to model name.
pub fn rank_models<T: Scalar>(reports: &BTreeMap<String, MetricBundle<T>>, key: MetricId) -> Result<Vec<String>> {
    let mut scored = Vec::with_capacity(reports.len());
    for (model, bundle) in reports {
        let v = key.get(bundle).ok_or_else(|| Error::UndefinedMetric {
            metric: key.to_string(),
            model: model.clone(),
        })?;
        scored.push((model.clone(), v));
    }
    // BTreeMap iteration is alphabetical and the sort is stable
    scored.sort_by(|a, b| {
        let ord = a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal);
        if key.higher_is_better() {
            ord.reverse()
        } else {
            ord
        }
    });
    Ok(scored.into_iter().map(|(m, _)| m).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_fit() {
        let y = [1.0_f64, 2.0, 3.0];
        let m = evaluate(&y, &y, 0.01).unwrap();
        assert_eq!((m.mae, m.mse, m.rmse), (0.0, 0.0, 0.0));
        assert_eq!(m.mape, Some(0.0));
        assert_eq!(m.r2, Some(1.0));
    }

    #[test]
    fn hand_computed_example() {
        let m = evaluate(&[1.0_f64, 2.0, 3.0], &[2.0, 2.0, 2.0], 0.01).unwrap();
        assert!((m.mae - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.mse - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.rmse - (2.0_f64 / 3.0).sqrt()).abs() < 1e-12);
        // (1/1 + 0 + 1/3) / 3 * 100
        assert!((m.mape.unwrap() - 400.0 / 9.0).abs() < 1e-12);
        assert_eq!(m.r2, Some(0.0));
    }

    #[test]
    fn undefined_markers() {
        let m = evaluate(&[0.0_f64, 0.005], &[0.1, 0.1], 0.01).unwrap();
        assert_eq!(m.mape, None);
        assert_eq!(m.mape_excluded, 2);
        let m = evaluate(&[2.0_f64, 2.0], &[1.0, 3.0], 0.01).unwrap();
        assert_eq!(m.r2, None);
        assert!(evaluate::<f64>(&[], &[], 0.01).is_err());
        assert!(evaluate(&[1.0_f64], &[1.0, 2.0], 0.01).is_err());
    }

    #[test]
    fn ranks_by_ascending_mae() {
        let mut reports = BTreeMap::new();
        for (name, mae) in [
            ("gbt", 0.0276),
            ("arima", 0.2164),
            ("arimax", 0.2158),
            ("svr", 0.0850),
            ("rlstm", 0.0483),
        ] {
            let bundle = MetricBundle {
                mae,
                mse: 0.0,
                rmse: 0.0,
                mape: None,
                r2: None,
                mape_excluded: 0,
                n: 1,
            };
            reports.insert(name.to_string(), bundle);
        }
        let order = rank_models(&reports, MetricId::Mae).unwrap();
        assert_eq!(order, ["gbt", "rlstm", "svr", "arimax", "arima"]);
        assert!(rank_models(&reports, MetricId::Mape).is_err());
    }

    #[test]
    fn ties_are_alphabetical_and_r2_descends() {
        let b = |mae: f64, r2: f64| MetricBundle {
            mae,
            mse: mae,
            rmse: mae.sqrt(),
            mape: Some(1.0),
            r2: Some(r2),
            mape_excluded: 0,
            n: 3,
        };
        let mut reports = BTreeMap::new();
        reports.insert("zeta".to_string(), b(0.1, 0.5));
        reports.insert("alpha".to_string(), b(0.1, 0.9));
        assert_eq!(rank_models(&reports, MetricId::Mae).unwrap(), ["alpha", "zeta"]);
        assert_eq!(rank_models(&reports, MetricId::R2).unwrap(), ["alpha", "zeta"]);
        let single: BTreeMap<_, _> = [("only".to_string(), b(1.0, 0.0))].into();
        assert_eq!(rank_models(&single, MetricId::Rmse).unwrap(), ["only"]);
    }
}
