//! Epsilon-insensitive support vector regression solved by SMO.
//!
//! The dual is written over `2n` variables `(α, α*)` with labels +1/−1 and
//! solved with second-order working-set selection. The full kernel matrix is
//! kept in memory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::persist;
use crate::scalar::{mean_std, Scalar};

pub const SVR_FORMAT: &str = "loadcast.svr";

const TAU: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    /// `exp(−gamma·‖a − b‖²)`; the kernel width is `1 / gamma`.
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval<T: Scalar>(&self, a: &[T], b: &[T]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x.as_f64() * y.as_f64()).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| {
                        let d = x.as_f64() - y.as_f64();
                        d * d
                    })
                    .sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    #[default]
    Rbf,
    Linear,
}

/// SVR settings as they appear in configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvrParams {
    pub kernel: KernelKind,
    /// RBF coefficient; `1 / n_features` when unset.
    pub gamma: Option<f64>,
    pub c: f64,
    /// Tube half-width in target units; `0.1 · std(y)` when unset.
    pub epsilon: Option<f64>,
    /// Stop once the maximal KKT violation falls below this.
    pub tolerance: f64,
    /// SMO iteration cap; `max(10⁷, 100 · 2n)` when unset.
    pub max_iterations: Option<usize>,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Rbf,
            gamma: None,
            c: 1.0,
            epsilon: None,
            tolerance: 1e-3,
            max_iterations: None,
        }
    }
}

impl SvrParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParam(format!("C must be positive, got {}", self.c)));
        }
        if let Some(e) = self.epsilon {
            if !(e >= 0.0) {
                return Err(Error::InvalidParam(format!("epsilon must be non-negative, got {e}")));
            }
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) {
                return Err(Error::InvalidParam(format!("gamma must be positive, got {g}")));
            }
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParam("tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "c" | "C" => self.c = value,
            "epsilon" => self.epsilon = Some(value),
            "gamma" => self.gamma = Some(value),
            other => return Err(Error::InvalidParam(format!("unknown SVR parameter `{other}`"))),
        }
        Ok(())
    }

    pub fn resolve_kernel(&self, n_features: usize) -> Kernel {
        match self.kernel {
            KernelKind::Linear => Kernel::Linear,
            KernelKind::Rbf => Kernel::Rbf {
                gamma: self.gamma.unwrap_or(1.0 / n_features.max(1) as f64),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvrModel<T> {
    pub kernel: Kernel,
    pub c: T,
    pub epsilon: T,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    /// `α_i − α_i*` for each stored support vector.
    pub dual: Vec<T>,
    pub bias: T,
    /// Support vectors, row-major.
    pub support_vectors: Vec<T>,
    pub iterations: usize,
}

/// Fits on a (standardized) feature matrix.
pub fn fit_svr<T: Scalar>(train: &FeatureMatrix<T>, params: &SvrParams) -> Result<SvrModel<T>> {
    params.validate()?;
    let n = train.n_rows();
    if n == 0 {
        return Err(Error::Empty);
    }
    let epsilon = match params.epsilon {
        Some(e) => e,
        None => 0.1 * mean_std(train.y()).map(|(_, s)| s.as_f64()).unwrap_or(0.0),
    };
    let kernel = params.resolve_kernel(train.n_features());
    let max_iter = params.max_iterations.unwrap_or((100 * 2 * n).max(10_000_000));
    let mut model = solve(
        train.x(),
        train.n_features(),
        train.y(),
        kernel,
        params.c,
        epsilon,
        params.tolerance,
        max_iter,
    )?;
    model.feature_names = train.names().to_vec();
    Ok(model)
}

/// SMO on row-major `x` (width `n_features`) and targets `y`.
#[allow(clippy::too_many_arguments)]
pub fn solve<T: Scalar>(
    x: &[T],
    n_features: usize,
    y: &[T],
    kernel: Kernel,
    c: f64,
    epsilon: f64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<SvrModel<T>> {
    let l = y.len();
    if x.len() != l * n_features {
        return Err(Error::LengthMismatch {
            expected: l * n_features,
            actual: x.len(),
        });
    }
    let row = |i: usize| &x[i * n_features..(i + 1) * n_features];
    let mut k = vec![0.0_f64; l * l];
    for i in 0..l {
        for j in i..l {
            let v = kernel.eval(row(i), row(j));
            k[i * l + j] = v;
            k[j * l + i] = v;
        }
    }

    let m = 2 * l;
    let sign = |t: usize| if t < l { 1.0 } else { -1.0 };
    let base = |t: usize| if t < l { t } else { t - l };
    let qd: Vec<f64> = (0..m).map(|t| k[base(t) * l + base(t)]).collect();
    let mut alpha = vec![0.0_f64; m];
    let mut grad: Vec<f64> = (0..m)
        .map(|t| {
            let yt = y[base(t)].as_f64();
            if t < l {
                epsilon - yt
            } else {
                epsilon + yt
            }
        })
        .collect();
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let mut iterations = 0;
    loop {
        // first index: maximal violating pair member
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..m {
            if sign(t) > 0.0 {
                if !upper(alpha[t]) && -grad[t] >= gmax {
                    gmax = -grad[t];
                    i_sel = Some(t);
                }
            } else if !lower(alpha[t]) && grad[t] >= gmax {
                gmax = grad[t];
                i_sel = Some(t);
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut obj_min = f64::INFINITY;
        if let Some(i) = i_sel {
            let yi = sign(i);
            let ki = &k[base(i) * l..(base(i) + 1) * l];
            for t in 0..m {
                let qit = yi * sign(t) * ki[base(t)];
                if sign(t) > 0.0 {
                    if !lower(alpha[t]) {
                        let diff = gmax + grad[t];
                        if grad[t] >= gmax2 {
                            gmax2 = grad[t];
                        }
                        if diff > 0.0 {
                            let quad = qd[i] + qd[t] - 2.0 * yi * qit;
                            let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                            if obj <= obj_min {
                                obj_min = obj;
                                j_sel = Some(t);
                            }
                        }
                    }
                } else if !upper(alpha[t]) {
                    let diff = gmax - grad[t];
                    if -grad[t] >= gmax2 {
                        gmax2 = -grad[t];
                    }
                    if diff > 0.0 {
                        let quad = qd[i] + qd[t] + 2.0 * yi * qit;
                        let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                        if obj <= obj_min {
                            obj_min = obj;
                            j_sel = Some(t);
                        }
                    }
                }
            }
        } else {
            // nothing can move up; still compute the violation for reporting
            for t in 0..m {
                if sign(t) > 0.0 {
                    if !lower(alpha[t]) {
                        gmax2 = gmax2.max(grad[t]);
                    }
                } else if !upper(alpha[t]) {
                    gmax2 = gmax2.max(-grad[t]);
                }
            }
        }

        let violation = gmax + gmax2;
        let (i, j) = match (i_sel, j_sel) {
            (Some(i), Some(j)) if violation >= tolerance => (i, j),
            _ => break,
        };
        if iterations >= max_iterations {
            return Err(Error::SvrNotConverged {
                iterations,
                max_violation: violation,
            });
        }
        iterations += 1;

        let (yi, yj) = (sign(i), sign(j));
        let kij = k[base(i) * l + base(j)];
        let qij = yi * yj * kij;
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if yi != yj {
            let mut quad = qd[i] + qd[j] + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = qd[i] + qd[j] - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        let ki = &k[base(i) * l..(base(i) + 1) * l];
        let kj = &k[base(j) * l..(base(j) + 1) * l];
        for (t, g) in grad.iter_mut().enumerate() {
            let bt = base(t);
            *g += sign(t) * (yi * ki[bt] * di + yj * kj[bt] * dj);
        }
    }

    // bias from free variables, else the midpoint of the feasible interval
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum_free = 0.0;
    let mut n_free = 0usize;
    for t in 0..m {
        let yg = sign(t) * grad[t];
        if upper(alpha[t]) {
            if sign(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if sign(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };

    let mut dual = Vec::new();
    let mut support_vectors = Vec::new();
    for i in 0..l {
        let coef = alpha[i] - alpha[i + l];
        if coef != 0.0 {
            dual.push(T::of(coef));
            support_vectors.extend_from_slice(row(i));
        }
    }
    Ok(SvrModel {
        kernel,
        c: T::of(c),
        epsilon: T::of(epsilon),
        n_features,
        feature_names: Vec::new(),
        dual,
        bias: T::of(-rho),
        support_vectors,
        iterations,
    })
}

impl<T: Scalar> SvrModel<T> {
    pub fn n_support(&self) -> usize {
        self.dual.len()
    }

    /// `Σ dual_i · K(sv_i, x) + bias`.
    pub fn predict_row(&self, row: &[T]) -> T {
        let width = row.len();
        let sum: f64 = self
            .dual
            .iter()
            .enumerate()
            .map(|(i, d)| d.as_f64() * self.kernel.eval(&self.support_vectors[i * width..(i + 1) * width], row))
            .sum();
        T::of(sum) + self.bias
    }

    pub fn to_json(&self) -> Result<String> {
        persist::encode::<T, _>(SVR_FORMAT, self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        persist::decode::<T, _>(SVR_FORMAT, text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        persist::write(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&persist::read(path)?)
    }
}

pub fn predict_svr<T: Scalar>(model: &SvrModel<T>, matrix: &FeatureMatrix<T>) -> Result<Vec<T>> {
    if matrix.n_features() != model.n_features {
        return Err(Error::LengthMismatch {
            expected: model.n_features,
            actual: matrix.n_features(),
        });
    }
    Ok(matrix.rows().map(|r| model.predict_row(r)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{DateTime, Duration, Utc};

    fn matrix(x: Vec<f64>, width: usize, y: Vec<f64>) -> FeatureMatrix<f64> {
        let t0 = DateTime::parse_from_rfc3339("2024-01-01T00:00:00Z").unwrap().with_timezone(&Utc);
        let ts = (0..y.len()).map(|i| t0 + Duration::hours(i as i64)).collect();
        let names = (0..width).map(|j| format!("f{j}")).collect();
        FeatureMatrix::new(names, x, y, ts).unwrap()
    }

    #[test]
    fn targets_inside_tube_give_constant_model() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = (0..20).map(|i| 5.0 + if i % 2 == 0 { 0.01 } else { -0.01 }).collect();
        let params = SvrParams {
            epsilon: Some(0.5),
            ..Default::default()
        };
        let m = fit_svr(&matrix(x.clone(), 1, y), &params).unwrap();
        assert_eq!(m.n_support(), 0);
        assert!((m.bias - 5.0).abs() < 1e-9);
        let p = predict_svr(&m, &matrix(x, 1, vec![0.0; 20])).unwrap();
        assert!(p.iter().all(|&v| v == m.bias));
    }

    #[test]
    fn linear_target_recovered() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 - 25.0) / 10.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        let params = SvrParams {
            kernel: KernelKind::Linear,
            c: 100.0,
            epsilon: Some(0.01),
            ..Default::default()
        };
        let train = matrix(x, 1, y.clone());
        let m = fit_svr(&train, &params).unwrap();
        let p = predict_svr(&m, &train).unwrap();
        for (a, b) in p.iter().zip(&y) {
            assert!((a - b).abs() < 0.05);
        }
        let total: f64 = m.dual.iter().sum();
        assert!(total.abs() < 1e-6);
        assert!(m.dual.iter().all(|d| d.abs() <= 100.0 + 1e-9));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let m = fit_svr(&matrix(x, 1, y), &SvrParams::default()).unwrap();
        let wide = matrix(vec![0.0; 20], 2, vec![0.0; 10]);
        assert!(predict_svr(&m, &wide).is_err());
    }

    #[test]
    fn json_round_trip() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let m = fit_svr(&matrix(x, 1, y), &SvrParams::default()).unwrap();
        assert_eq!(SvrModel::<f64>::from_json(&m.to_json().unwrap()).unwrap(), m);
    }
}
