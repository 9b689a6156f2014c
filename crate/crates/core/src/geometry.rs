//! Geometry of the spectral curve: extreme points, boundary-induced limits
//! `theta_i^*`, tangency points for a direction and the Type 1-4 classification.

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::kernel::Kernel;
use crate::linalg::Mat;
use crate::model::{BlockSet, Region};
use crate::qbd_core::{self, QbdError, Triplet};
use crate::spectral::{self, chi, chi_point, SpectralError};

/// Tolerance for ties in the classification inequalities.
pub const TIE_TOL: f64 = 1e-9;
/// Relative tolerance on the level `chi = 1` used by the feasibility bisections.
const LEVEL_SLACK: f64 = 4.0 * f64::EPSILON;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("the domain chi <= 1 has no interior around the origin")]
    EmptyDomain,
    #[error("direction must have positive integer components, got ({0}, {1})")]
    InvalidDirection(i64, i64),
    #[error("axis must be 1 or 2, got {0}")]
    InvalidAxis(u8),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Qbd(#[from] QbdError),
}

/// Serialize non-finite reals as strings so JSON output stays lossless.
pub fn ser_real<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_str(&x.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Direction {
    pub c1: u32,
    pub c2: u32,
}

impl Direction {
    pub fn new(c1: i64, c2: i64) -> Result<Self, GeometryError> {
        if c1 < 1 || c2 < 1 || c1 > u32::MAX as i64 || c2 > u32::MAX as i64 {
            return Err(GeometryError::InvalidDirection(c1, c2));
        }
        Ok(Self { c1: c1 as u32, c2: c2 as u32 })
    }

    pub fn as_f64(&self) -> (f64, f64) {
        (self.c1 as f64, self.c2 as f64)
    }

    pub fn dot(&self, p: (f64, f64)) -> f64 {
        self.c1 as f64 * p.0 + self.c2 as f64 * p.1
    }

    pub fn max(&self) -> u32 {
        self.c1.max(self.c2)
    }

    pub fn min(&self) -> u32 {
        self.c1.min(self.c2)
    }
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once(',').ok_or_else(|| format!("expected C1,C2, got {s:?}"))?;
        let parse = |t: &str| t.trim().parse::<i64>().map_err(|e| format!("{t:?}: {e}"));
        Direction::new(parse(a)?, parse(b)?).map_err(|e| e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Extremes {
    pub theta1_min: f64,
    pub theta1_max: f64,
    pub theta2_min: f64,
    pub theta2_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TangencyPoint {
    pub c: Direction,
    pub theta_c_max: f64,
    pub eta: (f64, f64),
    /// `(chi_1 / chi_2) / (c1 / c2)` at `eta`; 1 at an exact tangency.
    pub gradient_ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThetaStar {
    pub value: f64,
    /// The boundary never binds: `theta_i^* = theta_i^max`.
    pub saturated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ModelType {
    Type1,
    Type2,
    Type3,
    Type4,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GammaGeometry {
    pub theta1_min: f64,
    pub theta1_max: f64,
    pub theta2_min: f64,
    pub theta2_max: f64,
    pub theta1_star: f64,
    pub theta2_star: f64,
    pub theta1_star_saturated: bool,
    pub theta2_star_saturated: bool,
    /// `(theta1^*, eta_bar_2(theta1^*))`.
    pub q1: (f64, f64),
    /// `(eta_bar_1(theta2^*), theta2^*)`.
    pub q2: (f64, f64),
    pub model_type: ModelType,
    /// `eta_bar_2'(theta1^*)`; `-inf` at a vertical tangent.
    #[serde(serialize_with = "ser_real")]
    pub slope1: f64,
    /// `eta_bar_1'(theta2^*)`.
    #[serde(serialize_with = "ser_real")]
    pub slope2: f64,
    /// `theta1^* - eta_bar_1(theta2^*)`; nonnegative (up to ties) in Types 1 and 3.
    pub margin1: f64,
    /// `theta2^* - eta_bar_2(theta1^*)`; nonnegative (up to ties) in Types 1 and 4.
    pub margin2: f64,
}

fn slice_min(kernel: &Kernel, t1: f64) -> f64 {
    match spectral::slice2_argmin(kernel, t1) {
        Ok(m) => chi(kernel, t1, m),
        Err(_) => f64::INFINITY,
    }
}

/// Largest `t` in direction `dir` from 0 with `feasible(t)`, by doubling then bisection.
fn feasible_edge(value: impl Fn(f64) -> f64, dir: f64) -> Result<f64, GeometryError> {
    let level = 1.0 + LEVEL_SLACK;
    if !(value(0.0) < level) {
        return Err(GeometryError::EmptyDomain);
    }
    let mut inside = 0.0;
    let mut step = 0.25;
    loop {
        let t = dir * step;
        if !(value(t) < level) {
            return Ok(spectral::bisect_level(|x| sanitize(value(x)), level, inside, t));
        }
        inside = t;
        step *= 2.0;
        if step > 64.0 {
            return Err(SpectralError::Unbounded.into());
        }
    }
}

fn sanitize(x: f64) -> f64 {
    if x.is_nan() {
        f64::INFINITY
    } else {
        x
    }
}

pub fn theta_extremes(blocks: &BlockSet) -> Result<Extremes, GeometryError> {
    let k = blocks.interior();
    let ks = k.swap_axes();
    Ok(Extremes {
        theta1_min: feasible_edge(|t| slice_min(k, t), -1.0)?,
        theta1_max: feasible_edge(|t| slice_min(k, t), 1.0)?,
        theta2_min: feasible_edge(|t| slice_min(&ks, t), -1.0)?,
        theta2_max: feasible_edge(|t| slice_min(&ks, t), 1.0)?,
    })
}

/// Minimizer of `chi` on the line `c . theta = level`, as a point.
fn line_argmin(kernel: &Kernel, c: (f64, f64), level: f64) -> Result<(f64, f64), SpectralError> {
    let n2 = c.0 * c.0 + c.1 * c.1;
    let at = |s: f64| (level * c.0 / n2 - s * c.1, level * c.1 / n2 + s * c.0);
    let s = spectral::convex_argmin(
        |s| {
            let p = at(s);
            chi_point(kernel, p.0, p.1).map(|q| -q.grad.0 * c.1 + q.grad.1 * c.0).unwrap_or(f64::NAN)
        },
        0.0,
    )?;
    Ok(at(s))
}

/// Maximizer of `c . theta` over the region `chi <= 1`.
pub fn theta_c_max(blocks: &BlockSet, c: Direction) -> Result<TangencyPoint, GeometryError> {
    let k = blocks.interior();
    let cf = c.as_f64();
    let min_on = |level: f64| match line_argmin(k, cf, level) {
        Ok(p) => chi(k, p.0, p.1),
        Err(_) => f64::INFINITY,
    };
    let theta = feasible_edge(min_on, 1.0)?;
    let eta = line_argmin(k, cf, theta)?;
    let p = chi_point(k, eta.0, eta.1)?;
    let gradient_ratio = (p.grad.0 * cf.1) / (p.grad.1 * cf.0);
    Ok(TangencyPoint { c, theta_c_max: c.dot(eta), eta, gradient_ratio })
}

/// `C_1(z) = A^{1}_{*,0}(z) + A^{1}_{*,1}(z) G_2(z)`: the face-1 blocks censored
/// onto level 0 through the interior G-matrix.
pub fn censored_boundary(blocks: &BlockSet, z: f64) -> Result<Mat, GeometryError> {
    let g2 = qbd_core::solve_g(&Triplet::from_kernel(blocks.interior(), z))?;
    let (_, b0, b1) = blocks.kernel(Region::B1).level_triplet(z);
    Ok(b0 + b1 * g2)
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

/// `theta_i^*`: the largest `theta_i` in `(0, theta_i^max]` with `spr(C_i(e^theta)) < 1`.
pub fn theta_star(blocks: &BlockSet, axis: u8) -> Result<ThetaStar, GeometryError> {
    let oriented;
    let b = match axis {
        1 => blocks,
        2 => {
            oriented = blocks.transposed();
            &oriented
        }
        other => return Err(GeometryError::InvalidAxis(other)),
    };
    let ext = theta_extremes(b)?;
    let rho = |t: f64| censored_boundary(b, t.exp()).map(|m| spectral::spr(&m)).unwrap_or(f64::INFINITY);
    let tmax = ext.theta1_max;
    if rho(tmax) < 1.0 {
        return Ok(ThetaStar { value: tmax, saturated: true });
    }
    let m = golden_min(rho, 0.0, tmax);
    if !(rho(m) < 1.0) {
        // the boundary already binds at the origin; keep the smallest positive value
        return Ok(ThetaStar { value: m.max(0.0), saturated: false });
    }
    Ok(ThetaStar { value: spectral::bisect_level(rho, 1.0, m, tmax), saturated: false })
}

fn slope_or_vertical(r: Result<f64, SpectralError>) -> Result<f64, GeometryError> {
    match r {
        Ok(s) => Ok(s),
        Err(SpectralError::VerticalTangent) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e.into()),
    }
}

/// Assemble the geometry from extremes and both `theta_i^*`.
pub fn classify(kernel: &Kernel, ext: Extremes, star1: ThetaStar, star2: ThetaStar) -> Result<GammaGeometry, GeometryError> {
    let (t1, t2) = (star1.value, star2.value);
    let eta2_bar = spectral::eta2_branches(kernel, t1)?.1;
    let eta1_bar = spectral::eta1_branches(kernel, t2)?.1;
    let q1 = (t1, eta2_bar);
    let q2 = (eta1_bar, t2);
    let slope1 = slope_or_vertical(spectral::eta_derivative(kernel, q1.0, q1.1))?;
    let slope2 = slope_or_vertical(spectral::eta1_derivative(kernel, q2.0, q2.1))?;
    let margin1 = t1 - eta1_bar;
    let margin2 = t2 - eta2_bar;
    let model_type = match (margin1 >= -TIE_TOL, margin2 >= -TIE_TOL) {
        (true, true) => ModelType::Type1,
        (false, false) => ModelType::Type2,
        (true, false) => ModelType::Type3,
        (false, true) => ModelType::Type4,
    };
    Ok(GammaGeometry {
        theta1_min: ext.theta1_min,
        theta1_max: ext.theta1_max,
        theta2_min: ext.theta2_min,
        theta2_max: ext.theta2_max,
        theta1_star: t1,
        theta2_star: t2,
        theta1_star_saturated: star1.saturated,
        theta2_star_saturated: star2.saturated,
        q1,
        q2,
        model_type,
        slope1,
        slope2,
        margin1,
        margin2,
    })
}

/// Full geometry of a model.
pub fn gamma_geometry(blocks: &BlockSet) -> Result<GammaGeometry, GeometryError> {
    let ext = theta_extremes(blocks)?;
    let s1 = theta_star(blocks, 1)?;
    let s2 = theta_star(blocks, 2)?;
    classify(blocks.interior(), ext, s1, s2)
}

/// One row of the curve sample: both branches over `theta1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveSample {
    pub theta1: f64,
    pub eta2_under: f64,
    pub eta2_bar: f64,
}

/// Samples of the curve `chi = 1` on a `theta1` grid of spacing `step`, endpoints included.
pub fn curve_samples(blocks: &BlockSet, step: f64) -> Result<Vec<CurveSample>, GeometryError> {
    let ext = theta_extremes(blocks)?;
    let k = blocks.interior();
    let n = ((ext.theta1_max - ext.theta1_min) / step).ceil().max(1.0) as usize;
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = (ext.theta1_min + i as f64 * step).min(ext.theta1_max);
        // endpoints sit exactly on the feasibility edge
        let (lo, hi) = match spectral::eta2_branches(k, t) {
            Ok(b) => b,
            Err(SpectralError::OutsideRange { .. }) => {
                let m = spectral::slice2_argmin(k, t)?;
                (m, m)
            }
            Err(e) => return Err(e.into()),
        };
        out.push(CurveSample { theta1: t, eta2_under: lo, eta2_bar: hi });
    }
    Ok(out)
}
