//! Empirical decay along a direction: log-linear fits and ratio stability.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::truncated::TruncatedStationary;
use super::OracleError;
use crate::geometry::Direction;

pub const MIN_FIT_POINTS: usize = 8;
/// Half-width of the acceptance bands around `beta = 0` and `beta = -1/2`.
pub const BETA_BAND: f64 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BetaClass {
    Zero,
    MinusHalf,
    Indeterminate,
}

impl BetaClass {
    pub fn of(beta: f64) -> Self {
        if beta.abs() <= BETA_BAND {
            BetaClass::Zero
        } else if (beta + 0.5).abs() <= BETA_BAND {
            BetaClass::MinusHalf
        } else {
            BetaClass::Indeterminate
        }
    }

    /// The class a power exponent of the decay function should produce.
    pub fn expected(power_exponent: f64) -> Self {
        Self::of(power_exponent)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailFit {
    pub c: Direction,
    pub window: (usize, usize),
    pub xi_hat: f64,
    pub beta_hat: f64,
    pub beta_class: BetaClass,
    pub r_squared: f64,
}

/// `[max(10, N/10), min(N/3, 60 min(c)/max(c))]`.
pub fn default_window(n: usize, c: Direction) -> (usize, usize) {
    let lo = 10.max(n / 10);
    let hi = (n / 3).min(60 * c.min() as usize / c.max() as usize);
    (lo, hi)
}

/// Checks the window stays at least 3 levels away from the truncation faces.
pub fn check_window(n: usize, c: Direction, window: (usize, usize)) -> Result<(), OracleError> {
    let (lo, hi) = window;
    if hi < lo || hi - lo + 1 < MIN_FIT_POINTS {
        return Err(OracleError::WindowTooSmall { lo, hi });
    }
    if hi * c.max() as usize + 3 > n {
        return Err(OracleError::WindowBeyondTruncation { hi, n });
    }
    Ok(())
}

/// Pooled least squares of `log a_{k,j} = alpha_j - xi k + beta log k`.
///
/// `samples` holds `(k, phase, value)`; returns `(xi, beta, r_squared)`.
pub fn fit_log_linear(samples: &[(usize, usize, f64)], phases: usize) -> Result<(f64, f64, f64), OracleError> {
    if samples.iter().any(|s| !(s.2 > 0.0)) {
        return Err(OracleError::ZeroProbability);
    }
    let rows = samples.len();
    let cols = phases + 2;
    let mut x = DMatrix::zeros(rows, cols);
    let mut y = DVector::zeros(rows);
    for (r, &(k, j, v)) in samples.iter().enumerate() {
        x[(r, j)] = 1.0;
        x[(r, phases)] = k as f64;
        x[(r, phases + 1)] = (k as f64).ln();
        y[r] = v.ln();
    }
    let coef = x
        .clone()
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| OracleError::Numerical(e.to_string()))?;
    let fitted = &x * &coef;
    let mean = y.mean();
    let ss_res: f64 = (&y - fitted).norm_squared();
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok((-coef[phases], coef[phases + 1], r2))
}

/// Fit of `nu_{kc}` over `k` in the window.
pub fn fit_decay(ts: &TruncatedStationary, c: Direction, window: (usize, usize)) -> Result<TailFit, OracleError> {
    check_window(ts.n, c, window)?;
    let mut samples = Vec::new();
    for k in window.0..=window.1 {
        let v = ts.at(k * c.c1 as usize, k * c.c2 as usize);
        for (j, &p) in v.iter().enumerate() {
            samples.push((k, j, p));
        }
    }
    let (xi_hat, beta_hat, r_squared) = fit_log_linear(&samples, ts.s0)?;
    Ok(TailFit { c, window, xi_hat, beta_hat, beta_class: BetaClass::of(beta_hat), r_squared })
}

/// Relative spread of `nu_{kc+x} / nu_{kc}` over the last half of the window,
/// maximized over phases.
pub fn homogeneity_check(
    ts: &TruncatedStationary,
    c: Direction,
    x: (usize, usize),
    window: (usize, usize),
) -> Result<f64, OracleError> {
    check_window(ts.n, c, window)?;
    let (lo, hi) = window;
    let top = (hi * c.c1 as usize + x.0).max(hi * c.c2 as usize + x.1);
    if top + 3 > ts.n {
        return Err(OracleError::WindowBeyondTruncation { hi, n: ts.n });
    }
    let start = lo + (hi - lo) / 2;
    let mut spread: f64 = 0.0;
    for j in 0..ts.s0 {
        let mut ratios = Vec::new();
        for k in start..=hi {
            let (a1, a2) = (k * c.c1 as usize, k * c.c2 as usize);
            let base = ts.at(a1, a2)[j];
            let shifted = ts.at(a1 + x.0, a2 + x.1)[j];
            if !(base > 0.0) {
                return Err(OracleError::ZeroProbability);
            }
            ratios.push(shifted / base);
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let (min, max) = ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
        spread = spread.max((max - min) / mean);
    }
    Ok(spread)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_synthetic_power_and_rate() {
        let samples: Vec<_> = (20..=60).map(|k| (k, 0, (k as f64).powf(-0.5) * (-(k as f64)).exp())).collect();
        let (xi, beta, r2) = fit_log_linear(&samples, 1).unwrap();
        assert!((xi - 1.0).abs() < 1e-3);
        assert!((beta + 0.5).abs() < 1e-2);
        assert!(r2 > 0.999);
    }

    #[test]
    fn pooled_phases_share_slopes() {
        let mut samples = Vec::new();
        for k in 10..30 {
            let base = (-(0.7 * k as f64)).exp();
            samples.push((k, 0, 2.0 * base));
            samples.push((k, 1, 0.5 * base));
        }
        let (xi, beta, _) = fit_log_linear(&samples, 2).unwrap();
        assert!((xi - 0.7).abs() < 1e-9);
        assert!(beta.abs() < 1e-8);
    }

    #[test]
    fn beta_classes() {
        assert_eq!(BetaClass::of(-0.47), BetaClass::MinusHalf);
        assert_eq!(BetaClass::of(0.1), BetaClass::Zero);
        assert_eq!(BetaClass::of(-0.25), BetaClass::Indeterminate);
    }

    #[test]
    fn windows() {
        let c = Direction { c1: 1, c2: 1 };
        assert_eq!(default_window(200, c), (20, 60));
        assert!(matches!(check_window(30, c, default_window(30, c)), Err(OracleError::WindowTooSmall { .. })));
        assert!(check_window(200, Direction { c1: 1, c2: 2 }, (20, 60)).is_ok());
        assert!(check_window(100, Direction { c1: 1, c2: 2 }, (20, 60)).is_err());
    }

    #[test]
    fn zero_probability_is_rejected() {
        assert!(matches!(fit_log_linear(&[(1, 0, 0.0)], 1), Err(OracleError::ZeroProbability)));
    }
}
