use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Training loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// ½(pred − y)², exact hessian 1.
    #[default]
    Squared,
    /// |pred − y| with a constant unit hessian as the curvature surrogate.
    Absolute,
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" | "squared_error" | "mse" => Ok(Loss::Squared),
            "absolute" | "absolute_error" | "mae" => Ok(Loss::Absolute),
            other => Err(Error::UnknownLoss(other.to_string())),
        }
    }
}

/// Per-sample first and second derivatives of the loss at `pred`.
pub fn gradients<T: Scalar>(y: &[T], pred: &[T], loss: Loss) -> Result<(Vec<T>, Vec<T>)> {
    if y.len() != pred.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            actual: pred.len(),
        });
    }
    let g = y
        .iter()
        .zip(pred)
        .map(|(&y, &p)| match loss {
            Loss::Squared => p - y,
            Loss::Absolute => {
                let d = p - y;
                if d > T::zero() {
                    T::one()
                } else if d < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            }
        })
        .collect();
    Ok((g, vec![T::one(); y.len()]))
}

/// Boosting knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtHyperParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Minimum hessian sum in each child of a split.
    pub min_child_weight: f64,
    /// Row fraction drawn without replacement for each tree.
    pub subsample: f64,
    /// Feature fraction drawn for each tree.
    pub colsample_bytree: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// L1 penalty on leaf weights.
    pub alpha: f64,
    /// Penalty per leaf; a split must reduce the objective by more than this.
    pub gamma: f64,
    pub early_stopping_patience: Option<usize>,
    pub seed: u64,
    pub loss: Loss,
    /// Initial prediction; the training-target mean when unset.
    pub base_score: Option<f64>,
}

impl Default for GbtHyperParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            learning_rate: 0.1,
            max_depth: 6,
            min_child_weight: 1.0,
            subsample: 1.0,
            colsample_bytree: 1.0,
            lambda: 1.0,
            alpha: 0.0,
            gamma: 0.0,
            early_stopping_patience: None,
            seed: 0,
            loss: Loss::Squared,
            base_score: None,
        }
    }
}

impl GbtHyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if self.n_estimators == 0 {
            return bad("n_estimators must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate must lie in (0, 1], got {}", self.learning_rate));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad(format!("subsample must lie in (0, 1], got {}", self.subsample));
        }
        if !(self.colsample_bytree > 0.0 && self.colsample_bytree <= 1.0) {
            return bad(format!(
                "colsample_bytree must lie in (0, 1], got {}",
                self.colsample_bytree
            ));
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("min_child_weight", self.min_child_weight),
        ] {
            if !(v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.early_stopping_patience == Some(0) {
            return bad("early_stopping_patience must be at least 1".into());
        }
        Ok(())
    }

    /// Sets a knob by its name; used by grid search.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidParam(format!("{name} needs a whole number, got {v}")))
            }
        };
        match name {
            "n_estimators" => self.n_estimators = as_count(value)?,
            "learning_rate" => self.learning_rate = value,
            "max_depth" => self.max_depth = as_count(value)?,
            "min_child_weight" => self.min_child_weight = value,
            "subsample" => self.subsample = value,
            "colsample_bytree" => self.colsample_bytree = value,
            "lambda" | "reg_lambda" => self.lambda = value,
            "alpha" | "reg_alpha" => self.alpha = value,
            "gamma" => self.gamma = value,
            other => return Err(Error::InvalidParam(format!("unknown hyperparameter `{other}`"))),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squared_gradients() {
        let (g, h) = gradients(&[1.0_f64], &[0.5], Loss::Squared).unwrap();
        assert_eq!((g, h), (vec![-0.5], vec![1.0]));
        let (g, _) = gradients(&[1.0_f64, 2.0], &[1.0, 2.0], Loss::Squared).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn absolute_gradients() {
        let (g, h) = gradients(&[2.0_f64, 2.0, 2.0], &[5.0, 1.0, 2.0], Loss::Absolute).unwrap();
        assert_eq!(g, vec![1.0, -1.0, 0.0]);
        assert_eq!(h, vec![1.0; 3]);
    }

    #[test]
    fn loss_names() {
        assert_eq!("squared".parse::<Loss>().unwrap(), Loss::Squared);
        assert!(matches!("huber".parse::<Loss>(), Err(Error::UnknownLoss(_))));
        assert!(gradients(&[1.0_f64], &[], Loss::Squared).is_err());
    }

    #[test]
    fn set_by_name_and_validate() {
        let mut p = GbtHyperParams::default();
        p.set("max_depth", 7.0).unwrap();
        p.set("lambda", 0.1).unwrap();
        assert_eq!(p.max_depth, 7);
        assert!(p.set("max_depth", 2.5).is_err());
        assert!(p.set("eta_decay", 1.0).is_err());
        p.subsample = 0.0;
        assert!(p.validate().is_err());
    }
}
