//! Second-order split scoring and exact greedy enumeration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Regularization and child constraints used while growing one tree.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitParams<T> {
    pub lambda: T,
    pub alpha: T,
    pub gamma: T,
    pub min_child_weight: T,
}

impl<T: Scalar> SplitParams<T> {
    pub fn new(lambda: f64, alpha: f64, gamma: f64, min_child_weight: f64) -> Self {
        Self {
            lambda: T::of(lambda),
            alpha: T::of(alpha),
            gamma: T::of(gamma),
            min_child_weight: T::of(min_child_weight),
        }
    }
}

/// Soft-thresholds a gradient sum by `alpha`.
#[inline]
pub fn soft_threshold<T: Scalar>(g: T, alpha: T) -> T {
    if g > alpha {
        g - alpha
    } else if g < -alpha {
        g + alpha
    } else {
        T::zero()
    }
}

/// Optimal leaf weight `−soft_threshold(G, α) / (H + λ)`.
pub fn leaf_weight<T: Scalar>(grad_sum: T, hess_sum: T, lambda: T, alpha: T) -> Result<T> {
    let denom = hess_sum + lambda;
    if !(denom > T::zero()) {
        return Err(Error::NonPositiveCurvature(denom.as_f64()));
    }
    Ok(-soft_threshold(grad_sum, alpha) / denom)
}

/// Structure-score reduction of splitting a node into (L, R), minus `gamma`.
#[inline]
pub fn split_gain<T: Scalar>(gl: T, hl: T, gr: T, hr: T, lambda: T, gamma: T) -> T {
    let half = T::of(0.5);
    let g = gl + gr;
    let h = hl + hr;
    half * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma
}

/// A candidate split: rows with `x < threshold` go left, missing values
/// follow `default_left`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate<T> {
    pub feature: usize,
    pub threshold: T,
    pub gain: T,
    pub default_left: bool,
}

/// A threshold strictly above `a` and at most `b` (for `a < b`).
#[inline]
pub fn midpoint<T: Scalar>(a: T, b: T) -> T {
    let m = a + (b - a) * T::of(0.5);
    if m > a {
        m
    } else {
        b
    }
}

/// Gradient/hessian totals of a node.
#[derive(Clone, Copy, Debug)]
pub struct NodeStats<T> {
    pub grad: T,
    pub hess: T,
}

/// Scans one feature for its best threshold.
///
/// `sorted` holds the node's rows with a present value, ordered by
/// `column`; `missing` holds the stats of the node's rows whose value is
/// absent. Thresholds are visited in ascending order and only a strictly
/// larger gain replaces the incumbent, so ties keep the lowest threshold and
/// prefer sending missing values left.
#[allow(clippy::too_many_arguments)]
pub fn scan_feature<T: Scalar>(
    feature: usize,
    column: &[T],
    sorted: &[u32],
    missing: NodeStats<T>,
    has_missing: bool,
    grad: &[T],
    hess: &[T],
    totals: NodeStats<T>,
    params: &SplitParams<T>,
) -> Option<SplitCandidate<T>> {
    let mut best: Option<SplitCandidate<T>> = None;
    let mut gl = T::zero();
    let mut hl = T::zero();
    for k in 0..sorted.len().saturating_sub(1) {
        let r = sorted[k] as usize;
        gl += grad[r];
        hl += hess[r];
        let a = column[r];
        let b = column[sorted[k + 1] as usize];
        if !(b > a) {
            continue;
        }
        let threshold = midpoint(a, b);
        let directions: &[bool] = if has_missing { &[true, false] } else { &[true] };
        for &default_left in directions {
            let (left_g, left_h) = if default_left && has_missing {
                (gl + missing.grad, hl + missing.hess)
            } else {
                (gl, hl)
            };
            let right_g = totals.grad - left_g;
            let right_h = totals.hess - left_h;
            if left_h < params.min_child_weight || right_h < params.min_child_weight {
                continue;
            }
            let gain = split_gain(left_g, left_h, right_g, right_h, params.lambda, params.gamma);
            if best.is_none_or(|b| gain > b.gain) {
                best = Some(SplitCandidate {
                    feature,
                    threshold,
                    gain,
                    default_left,
                });
            }
        }
    }
    best
}

/// Exact greedy search over every feature of `columns` for the rows in
/// `rows`. Returns `None` when no split has positive gain.
pub fn best_split<T: Scalar>(
    columns: &[Vec<T>],
    rows: &[usize],
    grad: &[T],
    hess: &[T],
    params: &SplitParams<T>,
) -> Option<SplitCandidate<T>> {
    if rows.len() < 2 {
        return None;
    }
    let totals = NodeStats {
        grad: rows.iter().map(|&r| grad[r]).fold(T::zero(), |a, b| a + b),
        hess: rows.iter().map(|&r| hess[r]).fold(T::zero(), |a, b| a + b),
    };
    let mut best: Option<SplitCandidate<T>> = None;
    for (feature, column) in columns.iter().enumerate() {
        let mut sorted: Vec<u32> = rows
            .iter()
            .filter(|&&r| !column[r].is_nan())
            .map(|&r| r as u32)
            .collect();
        sorted.sort_by(|&a, &b| column[a as usize].partial_cmp(&column[b as usize]).unwrap());
        let mut missing = NodeStats {
            grad: T::zero(),
            hess: T::zero(),
        };
        let mut has_missing = false;
        for &r in rows.iter().filter(|&&r| column[r].is_nan()) {
            missing.grad += grad[r];
            missing.hess += hess[r];
            has_missing = true;
        }
        if let Some(c) = scan_feature(
            feature,
            column,
            &sorted,
            missing,
            has_missing,
            grad,
            hess,
            totals,
            params,
        ) {
            if best.is_none_or(|b| c.gain > b.gain) {
                best = Some(c);
            }
        }
    }
    best.filter(|c| c.gain > T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_weight_examples() {
        assert_eq!(leaf_weight(1.5_f64, 3.0, 0.0, 0.0).unwrap(), -0.5);
        assert_eq!(leaf_weight(1.5_f64, 3.0, 0.0, 2.0).unwrap(), 0.0);
        assert_eq!(leaf_weight(1.5_f64, 3.0, 1.0, 0.0).unwrap(), -0.375);
        assert_eq!(leaf_weight(-3.0_f64, 1.0, 0.0, 1.0).unwrap(), 2.0);
        assert!(matches!(
            leaf_weight(1.0_f64, 0.0, 0.0, 0.0),
            Err(Error::NonPositiveCurvature(_))
        ));
    }

    #[test]
    fn two_point_split_has_gain_25() {
        let columns = vec![vec![0.0_f64, 1.0]];
        let grad = [0.0, -10.0];
        let hess = [1.0, 1.0];
        let p = SplitParams::new(0.0, 0.0, 0.0, 0.0);
        let s = best_split(&columns, &[0, 1], &grad, &hess, &p).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 0.5);
        assert_eq!(s.gain, 25.0);
    }

    #[test]
    fn identical_values_do_not_split() {
        let columns = vec![vec![3.0_f64; 4]];
        let p = SplitParams::new(0.0, 0.0, 0.0, 0.0);
        assert!(best_split(&columns, &[0, 1, 2, 3], &[1.0, -1.0, 2.0, -2.0], &[1.0; 4], &p).is_none());
    }

    #[test]
    fn min_child_weight_blocks_split() {
        let columns = vec![vec![0.0_f64, 1.0, 2.0, 3.0]];
        let grad = [1.0, 1.0, -1.0, -1.0];
        let p = SplitParams::new(0.0, 0.0, 0.0, 4.0);
        assert!(best_split(&columns, &[0, 1, 2, 3], &grad, &[1.0; 4], &p).is_none());
        let p = SplitParams::new(0.0, 0.0, 0.0, 2.0);
        let s = best_split(&columns, &[0, 1, 2, 3], &grad, &[1.0; 4], &p).unwrap();
        assert_eq!(s.threshold, 1.5);
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        let columns = vec![vec![0.0_f64, 1.0], vec![5.0, 9.0]];
        let p = SplitParams::new(0.0, 0.0, 0.0, 0.0);
        let s = best_split(&columns, &[0, 1], &[1.0, -1.0], &[1.0, 1.0], &p).unwrap();
        assert_eq!(s.feature, 0);
    }

    #[test]
    fn missing_values_take_the_better_side() {
        // rows 2 and 3 are missing and look like row 1 (negative gradient)
        let columns = vec![vec![0.0_f64, 1.0, f64::NAN, f64::NAN]];
        let grad = [5.0, -5.0, -5.0, -5.0];
        let p = SplitParams::new(0.0, 0.0, 0.0, 0.0);
        let s = best_split(&columns, &[0, 1, 2, 3], &grad, &[1.0; 4], &p).unwrap();
        assert!(!s.default_left);
    }

    #[test]
    fn gamma_suppresses_weak_splits() {
        let columns = vec![vec![0.0_f64, 1.0]];
        let p = SplitParams::new(0.0, 0.0, 30.0, 0.0);
        assert!(best_split(&columns, &[0, 1], &[0.0, -10.0], &[1.0, 1.0], &p).is_none());
    }
}
