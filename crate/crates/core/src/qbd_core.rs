//! Minimal nonnegative solutions of the QBD matrix quadratic equations.

use log::debug;
use thiserror::Error;

use crate::kernel::Kernel;
use crate::linalg::{inf_norm, inv_i_minus, is_nonnegative, sine_angle, Mat};
use crate::spectral::{self, perron, spr, SpectralError, TANGENCY_TOL};

/// Sup-norm target for the fixed-point iteration.
pub const FP_TOL: f64 = 1e-13;
/// Iteration budget after which logarithmic reduction takes over.
pub const FP_MAX_ITER: usize = 50_000;
pub const SERIES_MAX_TERMS: usize = 500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QbdError {
    #[error("triplet blocks must be square, of equal size and nonnegative")]
    InvalidTriplet,
    #[error("no real crossing: inf spr(A_*(e^theta)) = {0} > 1")]
    NoRealCrossing(f64),
    #[error("solver did not converge (residual {0:e})")]
    NotConverged(f64),
    #[error("I - H is singular")]
    NotInvertible,
    #[error("triplet is not at a tangency point (root gap {0:e})")]
    NotTangent(f64),
    #[error("branch curvature has the wrong sign ({0})")]
    BranchSign(f64),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Level-down, level-preserving and level-up blocks of a QBD.
#[derive(Clone, Debug, PartialEq)]
pub struct Triplet {
    pub aminus: Mat,
    pub azero: Mat,
    pub aplus: Mat,
}

impl Triplet {
    pub fn new(aminus: Mat, azero: Mat, aplus: Mat) -> Result<Self, QbdError> {
        let n = aminus.nrows();
        let ok = [&aminus, &azero, &aplus]
            .iter()
            .all(|m| m.shape() == (n, n) && is_nonnegative(m) && m.iter().all(|x| x.is_finite()));
        if !ok || n == 0 {
            return Err(QbdError::InvalidTriplet);
        }
        Ok(Self { aminus, azero, aplus })
    }

    /// Triplet of a kernel at `z`, levels indexed by the kernel's second coordinate.
    pub fn from_kernel(kernel: &Kernel, z: f64) -> Self {
        let (aminus, azero, aplus) = kernel.level_triplet(z);
        Self { aminus, azero, aplus }
    }

    pub fn dim(&self) -> usize {
        self.azero.nrows()
    }

    /// Up and down blocks exchanged.
    pub fn swapped(&self) -> Triplet {
        Triplet { aminus: self.aplus.clone(), azero: self.azero.clone(), aplus: self.aminus.clone() }
    }

    /// `A_*(z) = z^{-1} A_{-1} + A_0 + z A_1`.
    pub fn at(&self, z: f64) -> Mat {
        &self.aminus / z + &self.azero + &self.aplus * z
    }

    fn scaled(&self, s: f64) -> Triplet {
        Triplet { aminus: &self.aminus * (-s).exp(), azero: self.azero.clone(), aplus: &self.aplus * s.exp() }
    }

    /// Minimizer and minimum of `theta -> spr(A_*(e^theta))`.
    pub fn min_spr(&self) -> Result<(f64, f64), QbdError> {
        let deriv = |t: f64| {
            let (z, p) = (t.exp(), perron(&self.at(t.exp())));
            match p {
                Ok(p) => p.u.dot(&((&self.aplus * z - &self.aminus / z) * &p.v)),
                Err(_) => f64::NAN,
            }
        };
        let s = spectral::convex_argmin(deriv, 0.0)?;
        Ok((s, spr(&self.at(s.exp()))))
    }

    fn residual_g(&self, g: &Mat) -> f64 {
        inf_norm(&(&self.aminus + &self.azero * g + &self.aplus * g * g - g))
    }

    fn residual_r(&self, r: &Mat) -> f64 {
        inf_norm(&(r * r * &self.aminus + r * &self.azero + &self.aplus - r))
    }
}

fn is_zero(m: &Mat) -> bool {
    m.iter().all(|&x| x == 0.0)
}

enum FixedPoint {
    Converged(Mat),
    TooSlow,
}

/// Monotone iteration `X <- step(X)` from zero, stopped on a rate-corrected increment bound.
fn fixed_point(step: impl Fn(&Mat) -> Mat, dim: usize) -> FixedPoint {
    let mut x = Mat::zeros(dim, dim);
    let mut prev = f64::INFINITY;
    for n in 1..=FP_MAX_ITER {
        let next = step(&x);
        let d = inf_norm(&(&next - &x));
        x = next;
        if !d.is_finite() {
            return FixedPoint::TooSlow;
        }
        let rate = if prev.is_finite() && prev > 0.0 { d / prev } else { f64::NAN };
        if d == 0.0 || (d < FP_TOL && rate < 1.0 && d * rate / (1.0 - rate) < FP_TOL) {
            return FixedPoint::Converged(x);
        }
        if n >= 100 && rate.is_finite() {
            if rate >= 1.0 - 1e-12 {
                return FixedPoint::TooSlow;
            }
            let remaining = ((FP_TOL * (1.0 - rate)) / d).ln() / rate.ln();
            if n as f64 + remaining > FP_MAX_ITER as f64 {
                debug!("fixed point too slow (rate {rate:.6}), switching to reduction");
                return FixedPoint::TooSlow;
            }
        }
        prev = d;
    }
    FixedPoint::TooSlow
}

/// Logarithmic reduction for a triplet whose drift is nonpositive after rescaling.
fn log_reduction(t: &Triplet) -> Option<Mat> {
    let inv = inv_i_minus(&t.azero)?;
    let mut b0 = &inv * &t.aminus;
    let mut b1 = &inv * &t.aplus;
    let mut g = b0.clone();
    let mut tt = b1.clone();
    for _ in 0..128 {
        let u = &b0 * &b1 + &b1 * &b0;
        let Some(m) = inv_i_minus(&u) else { break };
        let (n0, n1) = (&m * &b0 * &b0, &m * &b1 * &b1);
        if !(n0.iter().chain(n1.iter()).all(|v| v.is_finite())) {
            break;
        }
        b0 = n0;
        b1 = n1;
        let inc = &tt * &b0;
        g += &inc;
        tt = &tt * &b1;
        let gn = inf_norm(&g).max(f64::MIN_POSITIVE);
        if inf_norm(&inc) <= 1e-17 * gn || inf_norm(&tt) == 0.0 {
            break;
        }
    }
    Some(g)
}

/// G through a rescaled triplet `(e^{-s} A_{-1}, A_0, e^{s} A_1)`, which has
/// its spectral-radius minimum at `theta = 0`.
fn g_by_reduction(t: &Triplet, s: f64) -> Option<Mat> {
    log_reduction(&t.scaled(s)).map(|g| g * s.exp())
}

/// Rescaling point for the reduction, and the triplet actually solved: when the
/// spectral-radius minimum exceeds 1 by rounding only, the blocks are divided by it
/// so the solve happens exactly at the branch point.
fn check_crossing(t: &Triplet) -> Result<(f64, Triplet), QbdError> {
    let (s, m) = t.min_spr()?;
    if m > 1.0 + 1e-10 {
        return Err(QbdError::NoRealCrossing(m));
    }
    if m > 1.0 {
        let t = Triplet { aminus: &t.aminus / m, azero: &t.azero / m, aplus: &t.aplus / m };
        return Ok((s, t));
    }
    Ok((s, t.clone()))
}

/// Minimal nonnegative solution of `G = A_{-1} + A_0 G + A_1 G^2`.
pub fn solve_g(t: &Triplet) -> Result<Mat, QbdError> {
    let n = t.dim();
    if is_zero(&t.aminus) {
        return Ok(Mat::zeros(n, n));
    }
    if is_zero(&t.aplus) {
        let inv = inv_i_minus(&t.azero).ok_or(QbdError::NoRealCrossing(spr(&t.azero)))?;
        return Ok(inv * &t.aminus);
    }
    let (s, ts) = check_crossing(t)?;
    let g = match fixed_point(|g| &ts.aminus + &ts.azero * g + &ts.aplus * g * g, n) {
        FixedPoint::Converged(g) => g,
        FixedPoint::TooSlow => g_by_reduction(&ts, s).ok_or(QbdError::NotConverged(f64::INFINITY))?,
    };
    finish(t.residual_g(&g), &g)
}

/// Minimal nonnegative solution of `R = R^2 A_{-1} + R A_0 + A_1`.
pub fn solve_r(t: &Triplet) -> Result<Mat, QbdError> {
    let n = t.dim();
    if is_zero(&t.aplus) {
        return Ok(Mat::zeros(n, n));
    }
    if is_zero(&t.aminus) {
        let inv = inv_i_minus(&t.azero).ok_or(QbdError::NoRealCrossing(spr(&t.azero)))?;
        return Ok(&t.aplus * inv);
    }
    let (s, ts) = check_crossing(t)?;
    let r = match fixed_point(|r| r * r * &ts.aminus + r * &ts.azero + &ts.aplus, n) {
        FixedPoint::Converged(r) => r,
        FixedPoint::TooSlow => {
            let g = g_by_reduction(&ts, s).ok_or(QbdError::NotConverged(f64::INFINITY))?;
            let nn = inv_i_minus(&(&ts.azero + &ts.aplus * &g)).ok_or(QbdError::NotInvertible)?;
            &ts.aplus * nn
        }
    };
    finish(t.residual_r(&r), &r)
}

fn finish(residual: f64, x: &Mat) -> Result<Mat, QbdError> {
    if x.iter().all(|v| v.is_finite()) && residual.is_finite() && residual <= 1e-9 * (1.0 + inf_norm(x)) {
        // the exact solution is nonnegative; inversions in the reduction can leave rounding noise
        if x.min() < -1e-10 * (1.0 + inf_norm(x)) {
            return Err(QbdError::NotConverged(residual));
        }
        Ok(x.map(|v| v.max(0.0)))
    } else {
        Err(QbdError::NotConverged(residual))
    }
}

/// `(G^r, R^r)`: minimal solutions for the triplet with up and down exchanged.
pub fn solve_reverse(t: &Triplet) -> Result<(Mat, Mat), QbdError> {
    let s = t.swapped();
    Ok((solve_g(&s)?, solve_r(&s)?))
}

/// Roots `theta_under <= theta_bar` of `spr(A_*(e^theta)) = 1`.
pub fn theta_roots(t: &Triplet) -> Result<(f64, f64), QbdError> {
    let (s, m) = t.min_spr()?;
    if m > 1.0 + spectral::FEASIBILITY_TOL {
        return Err(QbdError::NoRealCrossing(m));
    }
    if m >= 1.0 {
        return Ok((s, s));
    }
    let f = |th: f64| spr(&t.at(th.exp()));
    let side = |dir: f64| {
        let mut step = 0.25;
        while f(s + dir * step) < 1.0 {
            step *= 2.0;
            if step > 60.0 {
                return Err(QbdError::Spectral(SpectralError::Unbounded));
            }
        }
        Ok(spectral::bisect_level(f, 1.0, s, s + dir * step))
    };
    Ok((side(-1.0)?, side(1.0)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrhSolution {
    pub g: Mat,
    pub r: Mat,
    pub h: Mat,
    pub n: Mat,
    pub gr: Mat,
    pub rr: Mat,
    pub hr: Mat,
    pub theta_under: f64,
    pub theta_bar: f64,
}

pub fn solve_all(t: &Triplet) -> Result<GrhSolution, QbdError> {
    let g = solve_g(t)?;
    let r = solve_r(t)?;
    let h = &t.azero + &t.aplus * &g;
    let n = inv_i_minus(&h).ok_or(QbdError::NotInvertible)?;
    let (gr, rr) = solve_reverse(t)?;
    let hr = &t.azero + &t.aminus * &gr;
    let (theta_under, theta_bar) = theta_roots(t)?;
    Ok(GrhSolution { g, r, h, n, gr, rr, hr, theta_under, theta_bar })
}

/// `||(I - A_*(z)) - (I - zR)(I - H)(I - z^{-1} G)||_inf` for a given solution.
pub fn factorization_residual_of(t: &Triplet, sol: &GrhSolution, z: f64) -> f64 {
    let n = t.dim();
    let id = Mat::identity(n, n);
    let lhs = &id - t.at(z);
    let rhs = (&id - &sol.r * z) * (&id - &sol.h) * (&id - &sol.g / z);
    inf_norm(&(lhs - rhs))
}

pub fn factorization_residual(t: &Triplet, z: f64) -> Result<f64, QbdError> {
    Ok(factorization_residual_of(t, &solve_all(t)?, z))
}

/// Partial sum of the first-passage series for `G(z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesEstimate {
    pub g: Mat,
    pub terms: usize,
    /// Sup norm of the last term added.
    pub last_term: f64,
}

impl SeriesEstimate {
    /// Entrywise gap to a reference solution.
    pub fn gap(&self, reference: &Mat) -> f64 {
        (reference - &self.g).amax()
    }
}

/// `sum_{n <= n_max} D_n(z)` over skip-free paths that stay at or above the
/// start level and finish one level below, by dynamic programming over height.
pub fn g_series_oracle(blocks_of_z: impl Fn(f64) -> Triplet, z: f64, n_max: usize) -> SeriesEstimate {
    let t = blocks_of_z(z);
    let n_max = n_max.clamp(1, SERIES_MAX_TERMS);
    let dim = t.dim();
    let mut state = vec![Mat::identity(dim, dim)];
    let mut g = Mat::zeros(dim, dim);
    let mut last_term = 0.0;
    for len in 1..=n_max {
        let term = &state[0] * &t.aminus;
        last_term = term.amax();
        g += term;
        if len == n_max {
            break;
        }
        // heights above this cannot return below the start within the remaining steps
        let max_h = n_max - len - 1;
        let top = (state.len() + 1).min(max_h + 1);
        let mut next = vec![Mat::zeros(dim, dim); top];
        for (h, s) in state.iter().enumerate() {
            if h < top {
                next[h] += s * &t.azero;
            }
            if h + 1 < top {
                next[h + 1] += s * &t.aplus;
            }
            if h >= 1 && h - 1 < top {
                next[h - 1] += s * &t.aminus;
            }
        }
        state = next;
    }
    SeriesEstimate { g, terms: n_max, last_term }
}

/// Square-root branch data of `G(z)` at the curve's extreme point `z_max = e^{theta_max}`.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchLimit {
    pub z_max: f64,
    pub alpha: f64,
    /// `-G_1 >= 0`, the limit of `(G(z_max) - G(z)) / sqrt(z_max - z)`.
    pub minus_g1: Mat,
    pub g: Mat,
    pub n: Mat,
    pub w_star: f64,
    pub zeta_second: f64,
    /// `u^G N v^R` after normalization (should be 1).
    pub normalization: f64,
}

pub fn branch_limit_matrices(kernel: &Kernel, theta_max: f64) -> Result<BranchLimit, QbdError> {
    let z_max = theta_max.exp();
    let t = Triplet::from_kernel(kernel, z_max);
    let g = solve_g(&t)?;
    let h = &t.azero + &t.aplus * &g;
    let n = inv_i_minus(&h).ok_or(QbdError::NotInvertible)?;
    let r = &t.aplus * &n;
    let pg = perron(&g)?;
    let pr = perron(&r)?;
    let w_star = pg.rho;
    let zeta_second = spectral::curve_second_derivative_z_of_w(kernel, w_star)?;
    if !(zeta_second < 0.0) {
        return Err(QbdError::BranchSign(zeta_second));
    }
    let alpha = -(2f64.sqrt()) / (-zeta_second).sqrt();
    let v = pr.v;
    let c = pg.u.dot(&(&n * &v));
    let u = &pg.u / c;
    let normalization = u.dot(&(&n * &v));
    let minus_g1 = (&n * &v) * u.transpose() * (-alpha);
    Ok(BranchLimit { z_max, alpha, minus_g1, g, n, w_star, zeta_second, normalization })
}

/// Sine of the angle between the Perron right vectors of `G` and `G^r` at a tangency point.
pub fn eigenvector_coincidence_check(t: &Triplet) -> Result<f64, QbdError> {
    let (lo, hi) = theta_roots(t)?;
    if hi - lo >= TANGENCY_TOL {
        return Err(QbdError::NotTangent(hi - lo));
    }
    let g = solve_g(t)?;
    let gr = solve_g(&t.swapped())?;
    if t.dim() == 1 {
        return Ok(0.0);
    }
    Ok(sine_angle(&perron(&g)?.v, &perron(&gr)?.v))
}
