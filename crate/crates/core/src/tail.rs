//! Decay rates and decay functions along a direction, plus the block-state
//! ("hat") construction used for the tangency prefactor along `(1, 1)`.

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{self, Direction, GammaGeometry, GeometryError, ModelType};
use crate::kernel::{jumps, Kernel};
use crate::linalg::{eigen_moduli, inverse, Mat, Vector};
use crate::model::{BlockSet, Region};
use crate::qbd_core::{self, QbdError, Triplet};
use crate::spectral::{perron, spr, SpectralError};

/// Width of the band around a slope condition treated as equality.
pub const SLOPE_TOL: f64 = 1e-7;
/// `hat_phi00` refuses arguments with `spr(U) >= 1 - SPR_GUARD`; at the branch point
/// itself `spr(U)` is only resolved to about the square root of machine precision.
pub const SPR_GUARD: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TailError {
    #[error("spr(U(z)) = {0} is not below 1")]
    SpectralRadiusAtLeastOne(f64),
    #[error("branch constant is not positive ({0})")]
    NonPositive(f64),
    #[error("prefactor needs c = (1, 1) in the strict tangency regime, got {0:?}")]
    NotTangencyRegime(Regime),
    #[error("boundary generating functions did not converge (tail bound {0:e})")]
    BoundaryGfNotConverged(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Qbd(#[from] QbdError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `xi_c = c . Q1`.
    Face1Dominant,
    /// `xi_c = c . Q2`.
    Face2Dominant,
    /// `xi_c = theta_c^max` with the slope conditions strict.
    TangencyInterior,
    /// `xi_c = theta_c^max` with `-c1/c2` on the `eta_bar_2'(theta1^*)` edge.
    TangencyBoundary1,
    /// `xi_c = theta_c^max` with `-c1/c2` on the `1/eta_bar_1'(theta2^*)` edge.
    TangencyBoundary2,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailAsymptotics {
    pub c: Direction,
    pub xi_c: f64,
    /// Exponent of `k` in the decay function: `0` or `-1/2`.
    pub power_exponent: f64,
    pub regime: Regime,
    pub prefactor: Option<Vec<f64>>,
}

fn slope_tol(c: Direction) -> f64 {
    let (c1, c2) = c.as_f64();
    SLOPE_TOL * (c1 / c2).max(1.0)
}

/// Decay rate along `c` from the four-type case analysis.
pub fn decay_rate(blocks: &BlockSet, geo: &GammaGeometry, c: Direction) -> Result<TailAsymptotics, TailError> {
    let (c1, c2) = c.as_f64();
    let r = -c1 / c2;
    let face1 = c.dot(geo.q1);
    let face2 = c.dot(geo.q2);
    let (xi_c, regime) = match geo.model_type {
        ModelType::Type1 => {
            let tol = slope_tol(c);
            let inv2 = 1.0 / geo.slope2;
            if r < geo.slope1 - tol {
                (face1, Regime::Face1Dominant)
            } else if r > inv2 + tol {
                (face2, Regime::Face2Dominant)
            } else {
                (geometry::theta_c_max(blocks, c)?.theta_c_max, Regime::TangencyInterior)
            }
        }
        ModelType::Type2 => {
            let chord = (geo.q2.1 - geo.q1.1) / (geo.q2.0 - geo.q1.0);
            if r <= chord {
                (face1, Regime::Face1Dominant)
            } else {
                (face2, Regime::Face2Dominant)
            }
        }
        ModelType::Type3 => (face2, Regime::Face2Dominant),
        ModelType::Type4 => (face1, Regime::Face1Dominant),
    };
    Ok(TailAsymptotics { c, xi_c, power_exponent: 0.0, regime, prefactor: None })
}

/// Decay rate together with the power term of the decay function.
pub fn decay_function(blocks: &BlockSet, geo: &GammaGeometry, c: Direction) -> Result<TailAsymptotics, TailError> {
    let mut t = decay_rate(blocks, geo, c)?;
    if t.regime == Regime::TangencyInterior {
        let (c1, c2) = c.as_f64();
        let r = -c1 / c2;
        let tol = slope_tol(c);
        if (r - geo.slope1).abs() <= tol {
            t.regime = Regime::TangencyBoundary1;
        } else if (r - 1.0 / geo.slope2).abs() <= tol {
            t.regime = Regime::TangencyBoundary2;
        } else {
            t.power_exponent = -0.5;
        }
    }
    Ok(t)
}

/// Block-state kernels along `(1, 1)`: phases are `(r, j)` with `r` the remainder of
/// `x2 - x1` modulo 2, the second level the quotient.
#[derive(Clone, Debug, PartialEq)]
pub struct HatModel {
    pub hat_a12: Kernel,
    pub hat_a2: Kernel,
}

/// Re-encode a kernel on `(x1, floor((x2 - x1)/2))` with remainder phases.
pub fn hat_kernel(k: &Kernel) -> Kernel {
    let s0 = k.dim();
    let mut out = Kernel::zeros(2 * s0);
    for (i1, i2) in jumps() {
        let a = k.block(i1, i2);
        for r in 0..2 {
            let d = r + i2 - i1;
            let (r2, shift) = (d.rem_euclid(2), d.div_euclid(2));
            let mut view = out.block_mut(i1, shift).view_mut((r as usize * s0, r2 as usize * s0), (s0, s0));
            view += a;
        }
    }
    out
}

pub fn build_hat_model(blocks: &BlockSet) -> HatModel {
    HatModel { hat_a12: hat_kernel(blocks.interior()), hat_a2: hat_kernel(blocks.kernel(Region::B2)) }
}

/// `U(z) = A_{*,-1}(z) G^r(z) + A_{*,0}(z) + A_{*,1}(z) G(z)` for the hat interior kernel.
pub fn hat_u_of(hat: &HatModel, z: f64) -> Result<Mat, TailError> {
    let t = Triplet::from_kernel(&hat.hat_a12, z);
    let g = qbd_core::solve_g(&t)?;
    let gr = qbd_core::solve_g(&t.swapped())?;
    Ok(&t.aminus * gr + &t.azero + &t.aplus * g)
}

pub fn hat_u(blocks: &BlockSet, z: f64) -> Result<Mat, TailError> {
    hat_u_of(&build_hat_model(blocks), z)
}

/// `(I - U(z))^{-1}`.
pub fn hat_phi00(blocks: &BlockSet, z: f64) -> Result<Mat, TailError> {
    hat_phi00_of(&build_hat_model(blocks), z)
}

pub fn hat_phi00_of(hat: &HatModel, z: f64) -> Result<Mat, TailError> {
    let u = hat_u_of(hat, z)?;
    let rho = spr(&u);
    if rho >= 1.0 - SPR_GUARD {
        return Err(TailError::SpectralRadiusAtLeastOne(rho));
    }
    let n = u.nrows();
    let phi = inverse(&(Mat::identity(n, n) - u)).ok_or(TailError::SpectralRadiusAtLeastOne(rho))?;
    // entries are sums of nonnegative series; clear rounding-level negatives
    Ok(phi.map(|x| x.max(0.0)))
}

/// Hat quantities at the tangency point `z_max = e^{theta_c^max}`, `c = (1, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HatTangency {
    pub z_max: f64,
    pub u: Mat,
    pub rho: f64,
    /// Second largest eigenvalue modulus of `U(z_max)`.
    pub second_modulus: f64,
    /// Left Perron vector of `U(z_max)`, scaled so `u_left . v_right = 1`.
    pub u_left: Vector,
    pub v_right: Vector,
    /// `-G_1` for `G` and for `G^r` at the common branch point.
    pub minus_g1: Mat,
    pub minus_g1_rev: Mat,
    pub g_phi: f64,
}

impl HatTangency {
    /// `g_phi v u`, the predicted leading coefficient of `sqrt(z_max - z) Phi_00(z)`.
    pub fn limit_matrix(&self) -> Mat {
        &self.v_right * self.u_left.transpose() * self.g_phi
    }
}

pub fn hat_tangency(blocks: &BlockSet) -> Result<HatTangency, TailError> {
    let tp = geometry::theta_c_max(blocks, Direction { c1: 1, c2: 1 })?;
    hat_tangency_at(&build_hat_model(blocks), tp.theta_c_max)
}

pub fn hat_tangency_at(hat: &HatModel, theta_max: f64) -> Result<HatTangency, TailError> {
    let z_max = theta_max.exp();
    let u = hat_u_of(hat, z_max)?;
    let p = perron(&u)?;
    let moduli = eigen_moduli(&u);
    let second_modulus = moduli.get(1).copied().unwrap_or(0.0);
    let fwd = qbd_core::branch_limit_matrices(&hat.hat_a12, theta_max)?;
    let rev = qbd_core::branch_limit_matrices(&hat.hat_a12.reverse_second(), theta_max)?;
    let t = Triplet::from_kernel(&hat.hat_a12, z_max);
    let inner = &t.aminus * &rev.minus_g1 + &t.aplus * &fwd.minus_g1;
    let denom = p.u.dot(&(inner * &p.v));
    let g_phi = 1.0 / denom;
    if !(g_phi > 0.0 && g_phi.is_finite()) {
        return Err(TailError::NonPositive(g_phi));
    }
    Ok(HatTangency {
        z_max,
        u,
        rho: p.rho,
        second_modulus,
        u_left: p.u,
        v_right: p.v,
        minus_g1: fwd.minus_g1,
        minus_g1_rev: rev.minus_g1,
        g_phi,
    })
}

/// The branch constant `g_phi > 0` of `Phi_00` at the tangency point.
pub fn prefactor_ghat_phi(blocks: &BlockSet) -> Result<f64, TailError> {
    Ok(hat_tangency(blocks)?.g_phi)
}

/// Estimate of `lim sqrt(z_max - z) Phi_00(z)` as `z -> z_max` from below, sampled at
/// relative offsets `delta` and `4 delta` and extrapolated once in `sqrt(delta)`.
pub fn hat_phi_edge_limit(hat: &HatModel, z_max: f64, delta: f64) -> Result<Mat, TailError> {
    let f = |d: f64| -> Result<Mat, TailError> {
        let z = z_max * (1.0 - d);
        Ok(hat_phi00_of(hat, z)? * (z_max - z).sqrt())
    };
    Ok(f(delta)? * 2.0 - f(4.0 * delta)?)
}

/// `sqrt(z_max - z) Phi_00(z)` at `z = z_max (1 - delta)`, without extrapolation.
pub fn hat_phi_edge_sample(hat: &HatModel, z_max: f64, delta: f64) -> Result<Mat, TailError> {
    let z = z_max * (1.0 - delta);
    Ok(hat_phi00_of(hat, z)? * (z_max - z).sqrt())
}

/// Boundary generating-function values `phi1(z)`, `phi2(w)`, `nu_00`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryValues {
    pub phi1: Vector,
    pub phi2: Vector,
    pub nu00: Vector,
    pub tail_bound: f64,
}

/// `g(z, w) = phi1(z)(A^{1}(z,w) - I) + phi2(w)(A^{2}(z,w) - I) + nu00(A^{0}(z,w) - I)`.
pub fn boundary_g(blocks: &BlockSet, z: f64, w: f64, bv: &BoundaryValues) -> Vector {
    let n = blocks.s0();
    let id = Mat::identity(n, n);
    let term = |x: &Vector, r: Region| (x.transpose() * (blocks.kernel(r).eval(z, w) - &id)).transpose();
    term(&bv.phi1, Region::B1) + term(&bv.phi2, Region::B2) + term(&bv.nu00, Region::Empty)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prefactor {
    pub vector: Vec<f64>,
    pub g_phi: f64,
    /// Truncation bound carried over from the boundary data.
    pub tail_bound: f64,
}

/// Leading vector of `k^{1/2} e^{xi_c k} nu_{kc}` up to the universal `Gamma(1/2)` factor,
/// for `c = (1, 1)` in the strict tangency regime.
pub fn prefactor_vector(
    blocks: &BlockSet,
    tail: &TailAsymptotics,
    hat: &HatTangency,
    eta: (f64, f64),
    bv: &BoundaryValues,
) -> Result<Prefactor, TailError> {
    if tail.c != (Direction { c1: 1, c2: 1 }) || tail.regime != Regime::TangencyInterior {
        return Err(TailError::NotTangencyRegime(tail.regime));
    }
    if !bv.tail_bound.is_finite() {
        return Err(TailError::BoundaryGfNotConverged(bv.tail_bound));
    }
    let s0 = blocks.s0();
    let g = boundary_g(blocks, eta.0.exp(), eta.1.exp(), bv);
    let v1 = hat.v_right.rows(0, s0).into_owned();
    let u1 = hat.u_left.rows(0, s0).into_owned();
    let scale = hat.g_phi * g.dot(&v1);
    let vector: Vec<f64> = u1.iter().map(|x| x * scale).collect();
    if !vector.iter().all(|&x| x > 0.0 && x.is_finite()) {
        return Err(TailError::NonPositive(vector.iter().copied().fold(f64::INFINITY, f64::min)));
    }
    Ok(Prefactor { vector, g_phi: hat.g_phi, tail_bound: bv.tail_bound })
}
