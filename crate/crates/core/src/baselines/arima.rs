//! ARIMA and ARIMAX fitted by conditional sum of squares.
//!
//! The exogenous variant is a regression with ARMA errors: with `w` the
//! d-times differenced series and `x̃` the equally differenced regressor,
//! `u_t = w_t − β·x̃_t` follows an ARMA(p, q) process with constant `c`.
//! The constant is only estimated for `d = 0`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::{nelder_mead, NelderMeadOptions};
use crate::error::{Error, Result};
use crate::persist;
use crate::scalar::{solve_linear, Scalar};

pub const ARIMA_FORMAT: &str = "loadcast.arima";

/// Penalty on β² that keeps degenerate regressors identifiable.
pub const EXOG_RIDGE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl Default for ArimaOrder {
    fn default() -> Self {
        Self { p: 2, d: 1, q: 2 }
    }
}

impl ArimaOrder {
    pub fn new(p: usize, d: usize, q: usize) -> Result<Self> {
        let order = Self { p, d, q };
        order.validate()?;
        Ok(order)
    }

    /// Requires `p + q ≥ 1`, except that a pure random walk (0, d≥1, 0) is
    /// accepted.
    pub fn validate(&self) -> Result<()> {
        if self.p + self.q == 0 && self.d == 0 {
            return Err(Error::InvalidParam("ARIMA order needs p + q ≥ 1 or d ≥ 1".into()));
        }
        Ok(())
    }

    /// Observations needed after differencing.
    pub fn min_observations(&self) -> usize {
        10 * (self.p + self.q + 1)
    }

    fn lags(&self) -> usize {
        self.p.max(self.q)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel<T> {
    pub order: ArimaOrder,
    pub intercept: T,
    pub phi: Vec<T>,
    pub theta: Vec<T>,
    /// Exogenous coefficient; `None` for a plain ARIMA.
    pub beta: Option<T>,
    /// Conditional sum of squares divided by the number of summed residuals.
    pub residual_variance: T,
    pub css: T,
    pub iterations: usize,
}

/// `d`-fold first differences.
pub fn difference<T: Scalar>(series: &[T], d: usize) -> Result<Vec<T>> {
    if series.len() <= d {
        return Err(Error::TooShort {
            len: series.len(),
            needed: d + 1,
        });
    }
    let mut out = series.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(out)
}

/// Inverts `difference` for values that follow `anchors`, the last `d`
/// observed levels in time order.
pub fn undifference<T: Scalar>(deltas: &[T], anchors: &[T]) -> Result<Vec<T>> {
    let d = anchors.len();
    // last value of each difference order 0..d of the anchor window
    let mut tails = Vec::with_capacity(d);
    let mut level = anchors.to_vec();
    for _ in 0..d {
        tails.push(*level.last().expect("non-empty"));
        level = level.windows(2).map(|w| w[1] - w[0]).collect();
    }
    let mut out = deltas.to_vec();
    for &tail in tails.iter().rev() {
        let mut prev = tail;
        for v in out.iter_mut() {
            prev += *v;
            *v = prev;
        }
    }
    Ok(out)
}

fn to_f64<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn diff_f64(v: &[f64], d: usize) -> Vec<f64> {
    let mut out = v.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    out
}

/// ARMA recursion over `u`; writes residuals into `resid` and returns their
/// sum of squares from index `max(p, q)` on.
fn arma_residuals(u: &[f64], c: f64, phi: &[f64], theta: &[f64], resid: &mut Vec<f64>) -> f64 {
    let m = phi.len().max(theta.len());
    resid.clear();
    resid.resize(u.len(), 0.0);
    let mut sum = 0.0;
    for t in m..u.len() {
        let mut e = u[t] - c;
        for (i, p) in phi.iter().enumerate() {
            e -= p * u[t - 1 - i];
        }
        for (j, th) in theta.iter().enumerate() {
            e -= th * resid[t - 1 - j];
        }
        resid[t] = e;
        sum += e * e;
    }
    sum
}

/// Optimizer point layout: `[c]? z_φ z_θ [β]?`.
struct Layout {
    has_c: bool,
    p: usize,
    q: usize,
    has_beta: bool,
}

impl Layout {
    fn len(&self) -> usize {
        self.has_c as usize + self.p + self.q + self.has_beta as usize
    }

    /// Splits an optimizer point into `(c, φ, θ, β)`. The AR and MA blocks
    /// are stored as unconstrained partial autocorrelations, so every point
    /// maps to a stationary and invertible model.
    fn unpack(&self, x: &[f64]) -> (f64, Vec<f64>, Vec<f64>, f64) {
        let k = self.has_c as usize;
        let c = if self.has_c { x[0] } else { 0.0 };
        let phi = pacf_to_coeffs(&x[k..k + self.p]);
        let theta = pacf_to_coeffs(&x[k + self.p..k + self.p + self.q])
            .into_iter()
            .map(|a| -a)
            .collect();
        let beta = if self.has_beta { x[k + self.p + self.q] } else { 0.0 };
        (c, phi, theta, beta)
    }
}

/// Maps unconstrained values to the coefficients of a stationary AR
/// polynomial `1 − Σ aⱼ zʲ` via `tanh` partial autocorrelations and the
/// Durbin-Levinson recursion.
fn pacf_to_coeffs(z: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = Vec::with_capacity(z.len());
    for (k, &zk) in z.iter().enumerate() {
        let r = zk.tanh();
        let prev = a.clone();
        for j in 0..k {
            a[j] = prev[j] - r * prev[k - 1 - j];
        }
        a.push(r);
    }
    a
}

/// Inverse of [`pacf_to_coeffs`]; `None` when `a` is not stationary.
fn coeffs_to_pacf(a: &[f64]) -> Option<Vec<f64>> {
    let mut cur = a.to_vec();
    let mut z = vec![0.0; a.len()];
    for k in (0..a.len()).rev() {
        let r = cur[k];
        if !(r.abs() < 1.0) {
            return None;
        }
        z[k] = r.atanh();
        let denom = 1.0 - r * r;
        let prev: Vec<f64> = (0..k).map(|j| (cur[j] + r * cur[k - 1 - j]) / denom).collect();
        cur = prev;
    }
    Some(z)
}

/// Shrinks AR coefficients towards zero until they are stationary and
/// returns their unconstrained form.
fn stationary_start(phi: &[f64]) -> Vec<f64> {
    let mut a = phi.to_vec();
    for _ in 0..200 {
        if let Some(z) = coeffs_to_pacf(&a) {
            if z.iter().all(|v| v.is_finite() && v.abs() < 8.0) {
                return z;
            }
        }
        for (j, v) in a.iter_mut().enumerate() {
            *v *= 0.95_f64.powi(j as i32 + 1);
        }
    }
    vec![0.0; phi.len()]
}

/// Ordinary least squares with an optional ridge on selected coefficients.
fn least_squares(rows: &[Vec<f64>], y: &[f64], ridge: &[f64]) -> Option<Vec<f64>> {
    let k = ridge.len();
    let mut a = vec![0.0; k * k];
    let mut b = vec![0.0; k];
    for (r, &t) in rows.iter().zip(y) {
        for i in 0..k {
            b[i] += r[i] * t;
            for j in 0..k {
                a[i * k + j] += r[i] * r[j];
            }
        }
    }
    for i in 0..k {
        a[i * k + i] += ridge[i];
    }
    solve_linear(a, b)
}

fn initial_point(layout: &Layout, w: &[f64], x: Option<&[f64]>) -> Vec<f64> {
    let mut beta = 0.0;
    if let Some(x) = x {
        let rows: Vec<Vec<f64>> = x
            .iter()
            .map(|&v| if layout.has_c { vec![1.0, v] } else { vec![v] })
            .collect();
        let ridge = if layout.has_c { vec![0.0, EXOG_RIDGE] } else { vec![EXOG_RIDGE] };
        if let Some(sol) = least_squares(&rows, w, &ridge) {
            beta = *sol.last().expect("non-empty");
        }
    }
    let u: Vec<f64> = match x {
        Some(x) => w.iter().zip(x).map(|(a, b)| a - beta * b).collect(),
        None => w.to_vec(),
    };

    let p = layout.p;
    let mut c = 0.0;
    let mut phi = vec![0.0; p];
    if p > 0 {
        let rows: Vec<Vec<f64>> = (p..u.len())
            .map(|t| {
                let lags = (1..=p).map(|i| u[t - i]);
                if layout.has_c {
                    std::iter::once(1.0).chain(lags).collect()
                } else {
                    lags.collect()
                }
            })
            .collect();
        let width = p + layout.has_c as usize;
        if let Some(sol) = least_squares(&rows, &u[p..], &vec![0.0; width]) {
            if layout.has_c {
                c = sol[0];
                phi.copy_from_slice(&sol[1..]);
            } else {
                phi.copy_from_slice(&sol);
            }
        }
    } else if layout.has_c {
        c = u.iter().sum::<f64>() / u.len() as f64;
    }

    let mut x0 = Vec::with_capacity(layout.len());
    if layout.has_c {
        x0.push(c);
    }
    x0.extend(stationary_start(&phi));
    x0.extend(std::iter::repeat_n(0.0, layout.q));
    if layout.has_beta {
        x0.push(beta);
    }
    x0
}

/// The least-squares start plus variants with the AR part at zero and with
/// a moderate MA part. Duplicates are dropped.
fn starting_points(layout: &Layout, w: &[f64], x: Option<&[f64]>) -> Vec<Vec<f64>> {
    let base = initial_point(layout, w, x);
    let k = layout.has_c as usize;
    let (ar, ma) = (k..k + layout.p, k + layout.p..k + layout.p + layout.q);
    let mut zero_ar = base.clone();
    zero_ar[ar.clone()].iter_mut().for_each(|v| *v = 0.0);
    let mut with_ma = base.clone();
    with_ma[ma.clone()].iter_mut().for_each(|v| *v = 0.5);
    let mut neg_ma = zero_ar.clone();
    neg_ma[ma].iter_mut().for_each(|v| *v = -0.5);
    let mut out: Vec<Vec<f64>> = Vec::new();
    for x0 in [base, zero_ar, with_ma, neg_ma] {
        if !out.contains(&x0) {
            out.push(x0);
        }
    }
    out
}

/// Fits ARIMA(p, d, q) by conditional sum of squares.
pub fn fit_arima<T: Scalar>(series: &[T], order: ArimaOrder) -> Result<ArimaModel<T>> {
    fit(series, None, order, &NelderMeadOptions::default())
}

/// Fits a regression on `exog` with ARIMA(p, d, q) errors.
pub fn fit_arimax<T: Scalar>(series: &[T], exog: &[T], order: ArimaOrder) -> Result<ArimaModel<T>> {
    fit(series, Some(exog), order, &NelderMeadOptions::default())
}

/// Shared fitting routine with explicit optimizer settings.
pub fn fit<T: Scalar>(
    series: &[T],
    exog: Option<&[T]>,
    order: ArimaOrder,
    opts: &NelderMeadOptions,
) -> Result<ArimaModel<T>> {
    order.validate()?;
    if let Some(x) = exog {
        if x.len() != series.len() {
            return Err(Error::LengthMismatch {
                expected: series.len(),
                actual: x.len(),
            });
        }
    }
    let needed = order.min_observations();
    if series.len() < order.d + needed {
        return Err(Error::TooShort {
            len: series.len(),
            needed: order.d + needed,
        });
    }
    let w = diff_f64(&to_f64(series), order.d);
    let xd = exog.map(|x| diff_f64(&to_f64(x), order.d));
    if w.iter().chain(xd.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParam("ARIMA input contains non-finite values".into()));
    }
    let layout = Layout {
        has_c: order.d == 0,
        p: order.p,
        q: order.q,
        has_beta: exog.is_some(),
    };

    let m = order.lags();
    let n_eff = w.len() - m;
    let objective = |params: &[f64]| -> f64 {
        let (c, phi, theta, beta) = layout.unpack(params);
        let mut resid = Vec::new();
        let css = match &xd {
            Some(x) => {
                let u: Vec<f64> = w.iter().zip(x).map(|(a, b)| a - beta * b).collect();
                arma_residuals(&u, c, &phi, &theta, &mut resid)
            }
            None => arma_residuals(&w, c, &phi, &theta, &mut resid),
        };
        css + EXOG_RIDGE * beta * beta
    };

    // CSS surfaces of seasonal series are multimodal, so a few deterministic
    // starts are tried and the lowest converged objective wins.
    let mut best: Option<super::optim::Minimum> = None;
    let mut iterations = 0;
    for x0 in starting_points(&layout, &w, xd.as_deref()) {
        let mut run = nelder_mead(objective, &x0, opts);
        iterations += run.iterations;
        if !run.converged {
            // one restart from the best vertex with a fresh simplex
            let again = nelder_mead(objective, &run.x, opts);
            iterations += again.iterations;
            if again.f <= run.f {
                run = again;
            } else {
                run.converged = again.converged;
            }
        }
        let better = match &best {
            None => true,
            Some(b) => (run.converged && run.f.is_finite() && (!b.converged || run.f < b.f))
                || (!b.converged && run.f < b.f),
        };
        if better {
            best = Some(run);
        }
    }
    let best = best.expect("at least one starting point");
    if !best.converged || !best.f.is_finite() {
        return Err(Error::NoConvergence {
            iterations,
            best_objective: best.f,
            best_point: best.x,
        });
    }

    let (c, phi, theta, beta) = layout.unpack(&best.x);
    let css = best.f - EXOG_RIDGE * beta * beta;
    Ok(ArimaModel {
        order,
        intercept: T::of(c),
        phi: phi.iter().map(|&v| T::of(v)).collect(),
        theta: theta.iter().map(|&v| T::of(v)).collect(),
        beta: layout.has_beta.then(|| T::of(beta)),
        residual_variance: T::of(css / n_eff as f64),
        css: T::of(css),
        iterations,
    })
}

impl<T: Scalar> ArimaModel<T> {
    /// Walk-forward forecast of the next `horizon` levels after `history`.
    ///
    /// Each one-step prediction is fed back as the next lagged value and
    /// future innovations are zero. An exogenous model needs the regressor
    /// over the history and over the forecast window.
    pub fn forecast(
        &self,
        history: &[T],
        exog_history: Option<&[T]>,
        exog_future: Option<&[T]>,
        horizon: usize,
    ) -> Result<Vec<T>> {
        let d = self.order.d;
        let needed = d + self.order.lags() + 1;
        if history.len() < needed {
            return Err(Error::TooShort {
                len: history.len(),
                needed,
            });
        }
        let n = history.len();
        let w = diff_f64(&to_f64(history), d);
        let (beta, x_hist, x_future) = match self.beta {
            Some(b) => {
                let (xh, xf) = match (exog_history, exog_future) {
                    (Some(xh), Some(xf)) => (xh, xf),
                    _ => return Err(Error::InvalidParam("exogenous model needs regressor values".into())),
                };
                if xh.len() != n {
                    return Err(Error::LengthMismatch {
                        expected: n,
                        actual: xh.len(),
                    });
                }
                if xf.len() < horizon {
                    return Err(Error::LengthMismatch {
                        expected: horizon,
                        actual: xf.len(),
                    });
                }
                let mut all = to_f64(xh);
                all.extend(xf[..horizon].iter().map(|v| v.as_f64()));
                let all = diff_f64(&all, d);
                let split = w.len();
                (b.as_f64(), all[..split].to_vec(), all[split..].to_vec())
            }
            None => (0.0, vec![0.0; w.len()], vec![0.0; horizon]),
        };

        let c = self.intercept.as_f64();
        let phi = to_f64(&self.phi);
        let theta = to_f64(&self.theta);
        let mut u: Vec<f64> = w.iter().zip(&x_hist).map(|(a, b)| a - beta * b).collect();
        let mut resid = Vec::new();
        arma_residuals(&u, c, &phi, &theta, &mut resid);

        let mut deltas = Vec::with_capacity(horizon);
        for xf in x_future.iter().take(horizon) {
            let t = u.len();
            let mut next = c;
            for (i, p) in phi.iter().enumerate() {
                next += p * u[t - 1 - i];
            }
            for (j, th) in theta.iter().enumerate() {
                next += th * resid[t - 1 - j];
            }
            u.push(next);
            resid.push(0.0);
            deltas.push(T::of(next + beta * xf));
        }
        undifference(&deltas, &history[n - d..])
    }

    /// Day-ahead forecasts for every index in `start..series.len()`, issued in
    /// consecutive blocks of `horizon` hours. Each block sees only the levels
    /// before its first hour; the regressor over the block is taken as known.
    pub fn day_ahead(&self, series: &[T], exog: Option<&[T]>, start: usize, horizon: usize) -> Result<Vec<T>> {
        if horizon == 0 {
            return Err(Error::InvalidParam("horizon must be positive".into()));
        }
        if let Some(x) = exog {
            if x.len() != series.len() {
                return Err(Error::LengthMismatch {
                    expected: series.len(),
                    actual: x.len(),
                });
            }
        }
        let mut out = Vec::with_capacity(series.len().saturating_sub(start));
        let mut block = start;
        while block < series.len() {
            let h = horizon.min(series.len() - block);
            let f = self.forecast(
                &series[..block],
                exog.map(|x| &x[..block]),
                exog.map(|x| &x[block..block + h]),
                h,
            )?;
            out.extend(f);
            block += h;
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        persist::encode::<T, _>(ARIMA_FORMAT, self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        persist::decode::<T, _>(ARIMA_FORMAT, text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        persist::write(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&persist::read(path)?)
    }
}

/// Free-function form of [`ArimaModel::forecast`].
pub fn forecast_walk_forward<T: Scalar>(
    model: &ArimaModel<T>,
    history: &[T],
    exog_history: Option<&[T]>,
    exog_future: Option<&[T]>,
    horizon: usize,
) -> Result<Vec<T>> {
    model.forecast(history, exog_history, exog_future, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = vec![0.0; n];
        for t in 1..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            y[t] = phi * y[t - 1] + e;
        }
        y
    }

    fn model(order: ArimaOrder, c: f64, phi: &[f64], theta: &[f64], beta: Option<f64>) -> ArimaModel<f64> {
        ArimaModel {
            order,
            intercept: c,
            phi: phi.to_vec(),
            theta: theta.to_vec(),
            beta,
            residual_variance: 1.0,
            css: 0.0,
            iterations: 0,
        }
    }

    #[test]
    fn difference_examples() {
        assert_eq!(difference(&[1.0_f64, 2.0, 4.0], 1).unwrap(), vec![1.0, 2.0]);
        assert_eq!(undifference(&[1.0_f64, 2.0], &[4.0]).unwrap(), vec![5.0, 7.0]);
        assert!(difference(&[1.0_f64, 2.0], 2).is_err());
        assert_eq!(difference(&[3.0_f64], 0).unwrap(), vec![3.0]);
    }

    #[test]
    fn second_order_round_trip() {
        let x = [3.0_f64, 5.0, 4.0, 9.0, 1.0, 0.0, 7.0];
        let d2 = difference(&x, 2).unwrap();
        assert_eq!(undifference(&d2[2..], &x[2..4]).unwrap(), x[4..].to_vec());
    }

    #[test]
    fn order_rules() {
        assert!(ArimaOrder::new(0, 0, 0).is_err());
        assert!(ArimaOrder::new(0, 1, 0).is_ok());
        assert_eq!(ArimaOrder::default(), ArimaOrder { p: 2, d: 1, q: 2 });
    }

    #[test]
    fn recovers_ar1() {
        let y = ar1(0.7, 2000, 7);
        let m = fit_arima(&y, ArimaOrder::new(1, 0, 0).unwrap()).unwrap();
        assert!((0.6..=0.8).contains(&m.phi[0]), "phi = {}", m.phi[0]);
    }

    #[test]
    fn white_noise_has_small_phi() {
        let y = ar1(0.0, 2000, 11);
        let m = fit_arima(&y, ArimaOrder::new(1, 0, 0).unwrap()).unwrap();
        assert!(m.phi[0].abs() < 0.1);
    }

    #[test]
    fn geometric_forecast() {
        let m = model(ArimaOrder::new(1, 0, 0).unwrap(), 0.0, &[0.5], &[], None);
        let f = m.forecast(&[1.0, 3.0, 8.0], None, None, 4).unwrap();
        assert_eq!(f, vec![4.0, 2.0, 1.0, 0.5]);
    }

    #[test]
    fn partial_autocorrelations_round_trip() {
        for z in [vec![0.3], vec![-1.2, 0.8], vec![2.0, -0.4, 1.1]] {
            let a = pacf_to_coeffs(&z);
            let back = coeffs_to_pacf(&a).unwrap();
            for (x, y) in z.iter().zip(&back) {
                assert!((x - y).abs() < 1e-10, "{z:?} -> {back:?}");
            }
        }
    }

    #[test]
    fn transformed_ar2_is_stationary() {
        // AR(2) stationarity triangle
        for z in [[5.0, 5.0], [-5.0, 5.0], [5.0, -5.0], [0.1, -0.2]] {
            let a = pacf_to_coeffs(&z);
            assert!(a[1].abs() < 1.0 && a[0] + a[1] < 1.0 && a[1] - a[0] < 1.0, "{a:?}");
        }
        assert!(coeffs_to_pacf(&[1.2, 0.1]).is_none());
        let z = stationary_start(&[1.2, 0.1]);
        assert!(z.iter().all(|v| v.abs() < 8.0));
    }

    #[test]
    fn random_walk_repeats_last_level() {
        let y = [1.0_f64, 3.0, 2.0, 5.0, 4.0, 6.0, 7.0, 6.5, 8.0, 9.0, 8.5, 10.0];
        let m = fit_arima(&y, ArimaOrder::new(0, 1, 0).unwrap()).unwrap();
        let f = m.forecast(&y, None, None, 24).unwrap();
        assert_eq!(f, vec![10.0; 24]);
    }

    #[test]
    fn too_short_rejected() {
        let y = ar1(0.5, 15, 1);
        assert!(matches!(
            fit_arima(&y, ArimaOrder::new(1, 0, 0).unwrap()),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn day_ahead_blocks_use_only_the_past() {
        let m = model(ArimaOrder::new(1, 0, 0).unwrap(), 0.0, &[0.5], &[], None);
        let series: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let f = m.day_ahead(&series, None, 30, 24).unwrap();
        assert_eq!(f.len(), 30);
        // second block starts at index 54 and anchors on series[53]
        assert_eq!(f[24], 26.5);
        assert_eq!(f[0], 14.5);
    }

    #[test]
    fn json_round_trip() {
        let m = model(ArimaOrder::default(), 0.0, &[0.1, 0.2], &[0.3, -0.4], Some(1.5));
        let back = ArimaModel::<f64>::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
