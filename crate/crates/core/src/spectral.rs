//! Perron-Frobenius computations and the spectral curve `chi(theta1, theta2) = 1`.

use thiserror::Error;

use crate::kernel::Kernel;
use crate::linalg::{is_nonnegative, max_abs, Mat, Vector};

pub const PERRON_MAX_ITER: usize = 100_000;
/// Branches closer than this are reported as coincident.
pub const TANGENCY_TOL: f64 = 1e-7;
/// Slack accepted on `min chi <= 1` before a slice is declared infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-12;
pub const FD_BASE_STEP: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("matrix has negative or non-finite entries")]
    NotNonnegative,
    #[error("matrix is zero")]
    ZeroMatrix,
    #[error("Perron iteration did not converge (residual {0:e})")]
    NotConverged(f64),
    #[error("left and right Perron vectors are orthogonal")]
    Degenerate,
    #[error("theta = {theta} lies outside the curve's range (min chi = {min_chi})")]
    OutsideRange { theta: f64, min_chi: f64 },
    #[error("curve slice is unbounded")]
    Unbounded,
    #[error("vertical tangent: derivative is unbounded")]
    VerticalTangent,
    #[error("finite-difference step underflow")]
    StepUnderflow,
}

/// Dominant eigenvalue of a nonnegative matrix with left/right vectors, `u . v = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PerronTriple {
    pub rho: f64,
    pub u: Vector,
    pub v: Vector,
}

pub fn perron(m: &Mat) -> Result<PerronTriple, SpectralError> {
    if !m.iter().all(|x| x.is_finite()) || !is_nonnegative(m) {
        return Err(SpectralError::NotNonnegative);
    }
    let scale = max_abs(m);
    if scale == 0.0 {
        return Err(SpectralError::ZeroMatrix);
    }
    let a = m / scale;
    let v = dominant_right(&a)?;
    let u = dominant_right(&a.transpose())?;
    let uv = u.dot(&v);
    if !(uv > 1e-300) {
        return Err(SpectralError::Degenerate);
    }
    let rho = u.dot(&(&a * &v)) / uv * scale;
    let v = &v / v.norm();
    let u = &u / u.dot(&v);
    Ok(PerronTriple { rho, u, v })
}

/// Spectral radius, with 0 for the zero matrix.
pub fn spr(m: &Mat) -> f64 {
    match perron(m) {
        Ok(p) => p.rho,
        Err(SpectralError::ZeroMatrix) => 0.0,
        Err(_) => crate::linalg::eigen_moduli(m)[0],
    }
}

/// Collatz-Wielandt upper bound `max_i (Ax)_i / x_i` over the support of `x`.
fn cw_upper(a: &Mat, x: &Vector) -> f64 {
    let ax = a * x;
    let xmax = x.amax();
    (0..x.len())
        .filter(|&i| x[i] > 1e-300 && x[i] > 1e-200 * xmax)
        .map(|i| ax[i] / x[i])
        .fold(0.0, f64::max)
}

fn residual(a: &Mat, x: &Vector, rho: f64) -> f64 {
    (a * x - x * rho).amax() / x.amax()
}

/// Right Perron vector of a nonnegative matrix with max entry 1.
///
/// Shifted power iteration supplies an upper bound `sigma >= rho`; inverse
/// iteration at shifts above `rho` then converges to the Perron vector since
/// `rho` is the eigenvalue closest to any real shift exceeding it.
fn dominant_right(a: &Mat) -> Result<Vector, SpectralError> {
    let n = a.nrows();
    let mut x = Vector::from_element(n, 1.0 / (n as f64).sqrt());
    if n == 1 {
        return Ok(Vector::from_element(1, 1.0));
    }
    let shift = 0.5;
    let id = Mat::identity(n, n);
    let mut best = f64::INFINITY;
    let mut it = 0;
    while it < PERRON_MAX_ITER {
        for _ in 0..8 {
            let y = a * &x + &x * shift;
            x = &y / y.norm();
            it += 1;
        }
        let upper = cw_upper(a, &x);
        let mut sigma = upper * (1.0 + 1e-8) + 1e-300;
        let mut prev = f64::INFINITY;
        for _ in 0..40 {
            let Some(y) = (&id * sigma - a).lu().solve(&x) else {
                sigma *= 1.0 + 1e-10;
                continue;
            };
            let norm = y.norm();
            if !norm.is_finite() || norm == 0.0 {
                break;
            }
            let mut y = y / norm;
            if y.sum() < 0.0 {
                y = -y;
            }
            y.iter_mut().for_each(|v| *v = v.max(0.0));
            x = &y / y.norm();
            it += 1;
            let rho = x.dot(&(a * &x)) / x.dot(&x);
            let r = residual(a, &x, rho);
            best = best.min(r);
            if r <= 4.0 * f64::EPSILON * rho.max(1e-300) + 1e-300 {
                return Ok(x);
            }
            // stagnation at rounding level
            if r < 1e-12 && r > 0.5 * prev {
                return Ok(x);
            }
            prev = r;
            let next = cw_upper(a, &x).min(sigma);
            if next > rho {
                sigma = next + (next - rho).max(1e-15 * next);
            }
        }
        if best <= 1e-13 {
            return Ok(x);
        }
    }
    if best <= 1e-10 {
        Ok(x)
    } else {
        Err(SpectralError::NotConverged(best))
    }
}

/// `chi(theta1, theta2)`, the Perron root of `A_{*,*}(e^theta1, e^theta2)`.
pub fn chi(kernel: &Kernel, t1: f64, t2: f64) -> f64 {
    spr(&kernel.eval_log(t1, t2))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub theta1: f64,
    pub theta2: f64,
    pub chi: f64,
    pub grad: (f64, f64),
}

/// `chi` with its gradient in `(theta1, theta2)` from the Perron vectors.
pub fn chi_point(kernel: &Kernel, t1: f64, t2: f64) -> Result<CurvePoint, SpectralError> {
    let (z, w) = (t1.exp(), t2.exp());
    let p = perron(&kernel.eval(z, w))?;
    let d1 = p.u.dot(&(kernel.weighted(z, w, |i, _| i as f64) * &p.v));
    let d2 = p.u.dot(&(kernel.weighted(z, w, |_, j| j as f64) * &p.v));
    Ok(CurvePoint { theta1: t1, theta2: t2, chi: p.rho, grad: (d1, d2) })
}

/// Limit on |theta| when bracketing along a slice.
const BRACKET_LIMIT: f64 = 60.0;

/// Minimizer of a convex function given its derivative `g`, by bisection on the sign of `g`.
/// Returns `Err(Unbounded)` when `g` keeps its sign up to the bracket limit.
pub fn convex_argmin(g: impl Fn(f64) -> f64, start: f64) -> Result<f64, SpectralError> {
    let g0 = g(start);
    if g0 == 0.0 {
        return Ok(start);
    }
    let dir = if g0 > 0.0 { -1.0 } else { 1.0 };
    let mut step = 0.5;
    let mut near = start;
    let mut far = start + dir * step;
    while g(far) * dir < 0.0 {
        near = far;
        step *= 2.0;
        far = start + dir * step;
        if (far - start).abs() > BRACKET_LIMIT {
            return Err(SpectralError::Unbounded);
        }
    }
    let (mut lo, mut hi) = if dir > 0.0 { (near, far) } else { (far, near) };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bisection for `f(x) = level` with `f(inside) < level <= f(outside)`, to machine precision.
pub fn bisect_level(f: impl Fn(f64) -> f64, level: f64, mut inside: f64, mut outside: f64) -> f64 {
    for _ in 0..300 {
        let mid = 0.5 * (inside + outside);
        if mid == inside || mid == outside {
            break;
        }
        if f(mid) < level {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    inside
}

/// Both roots of a convex slice `f = 1` around its minimizer `m`.
fn slice_roots(f: impl Fn(f64) -> f64, m: f64, theta: f64) -> Result<(f64, f64), SpectralError> {
    let fmin = f(m);
    if fmin > 1.0 + FEASIBILITY_TOL {
        return Err(SpectralError::OutsideRange { theta, min_chi: fmin });
    }
    if fmin >= 1.0 {
        return Ok((m, m));
    }
    let side = |dir: f64| {
        let mut step = 0.25;
        loop {
            let t = m + dir * step;
            if f(t) >= 1.0 {
                return Ok(bisect_level(&f, 1.0, m, t));
            }
            step *= 2.0;
            if step > BRACKET_LIMIT {
                return Err(SpectralError::Unbounded);
            }
        }
    };
    let lo = side(-1.0)?;
    let hi = side(1.0)?;
    Ok((lo, hi))
}

/// `(eta_under_2, eta_bar_2)(theta1)`: roots in `theta2` of `chi(theta1, theta2) = 1`.
pub fn eta2_branches(kernel: &Kernel, t1: f64) -> Result<(f64, f64), SpectralError> {
    let m = slice2_argmin(kernel, t1)?;
    slice_roots(|t2| chi(kernel, t1, t2), m, t1)
}

/// `(eta_under_1, eta_bar_1)(theta2)`.
pub fn eta1_branches(kernel: &Kernel, t2: f64) -> Result<(f64, f64), SpectralError> {
    eta2_branches(&kernel.swap_axes(), t2)
}

/// Minimizer in `theta2` of `chi(theta1, .)`.
pub fn slice2_argmin(kernel: &Kernel, t1: f64) -> Result<f64, SpectralError> {
    convex_argmin(|t2| chi_point(kernel, t1, t2).map(|p| p.grad.1).unwrap_or(f64::NAN), 0.0)
}

/// Slope `d eta_2 / d theta1 = -chi_1 / chi_2` of the curve through `(t1, t2)`.
pub fn eta_derivative(kernel: &Kernel, t1: f64, t2: f64) -> Result<f64, SpectralError> {
    let p = chi_point(kernel, t1, t2)?;
    let scale = p.grad.0.abs().max(p.chi);
    if p.grad.1.abs() < 1e-12 * scale {
        return Err(SpectralError::VerticalTangent);
    }
    Ok(-p.grad.0 / p.grad.1)
}

/// Slope `d eta_1 / d theta2` at `(t1, t2)`.
pub fn eta1_derivative(kernel: &Kernel, t1: f64, t2: f64) -> Result<f64, SpectralError> {
    eta_derivative(&kernel.swap_axes(), t2, t1)
}

/// Larger root `z` of `chi(log z, log w) = 1`.
pub fn zeta_bar(kernel: &Kernel, w: f64) -> Result<f64, SpectralError> {
    Ok(eta1_branches(kernel, w.ln())?.1.exp())
}

/// Second derivative of `w -> zeta_bar(w)`, by central differences with two Richardson levels.
pub fn curve_second_derivative_z_of_w(kernel: &Kernel, w: f64) -> Result<f64, SpectralError> {
    let f0 = zeta_bar(kernel, w)?;
    let d2 = |h: f64| -> Result<f64, SpectralError> {
        let fp = zeta_bar(kernel, w + h)?;
        let fm = zeta_bar(kernel, w - h)?;
        Ok((fp - 2.0 * f0 + fm) / (h * h))
    };
    let mut h = FD_BASE_STEP * w.abs().max(1e-3);
    loop {
        let attempt = (|| {
            let (a, b, c) = (d2(h)?, d2(h / 2.0)?, d2(h / 4.0)?);
            let r1 = (4.0 * b - a) / 3.0;
            let r2 = (4.0 * c - b) / 3.0;
            Ok::<f64, SpectralError>((16.0 * r2 - r1) / 15.0)
        })();
        match attempt {
            Ok(v) => return Ok(v),
            Err(SpectralError::OutsideRange { .. }) | Err(SpectralError::Unbounded) => {
                h /= 2.0;
                if h < 1e-10 * w.abs().max(1e-3) {
                    return Err(SpectralError::StepUnderflow);
                }
            }
            Err(e) => return Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Kernel;

    fn m1() -> Kernel {
        let p = |i: i32, j: i32| match (i, j) {
            (1, 0) | (0, 1) => 0.1,
            (-1, 0) | (0, -1) => 0.3,
            (0, 0) => 0.2,
            _ => 0.0,
        };
        Kernel::from_fn(1, |i, j| Mat::from_element(1, 1, p(i, j)))
    }

    #[test]
    fn perron_identity() {
        let p = perron(&Mat::identity(3, 3)).unwrap();
        assert!((p.rho - 1.0).abs() < 1e-15);
        for k in 0..3 {
            assert!((p.u[k] - 1.0 / 3f64.sqrt()).abs() < 1e-14);
            assert!((p.v[k] - p.u[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn perron_scalar_and_zero() {
        assert_eq!(perron(&Mat::from_element(1, 1, 0.7)).unwrap().rho, 0.7);
        assert_eq!(perron(&Mat::zeros(2, 2)), Err(SpectralError::ZeroMatrix));
        assert_eq!(perron(&Mat::from_element(1, 1, -1.0)), Err(SpectralError::NotNonnegative));
    }

    #[test]
    fn perron_handles_periodic_and_reducible() {
        let swap = Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((perron(&swap).unwrap().rho - 1.0).abs() < 1e-14);
        let g = Mat::from_row_slice(2, 2, &[0.0, 3.0, 0.0, 9.0]);
        let p = perron(&g).unwrap();
        assert!((p.rho - 9.0).abs() < 1e-13);
        assert!((p.v[1] / p.v[0] - 3.0).abs() < 1e-12);
        assert!(p.u[0].abs() < 1e-12);
    }

    #[test]
    fn chi_on_m1() {
        let k = m1();
        let l3 = 3f64.ln();
        assert!((chi(&k, 0.0, 0.0) - 1.0).abs() < 1e-15);
        assert!((chi(&k, l3, l3) - 1.0).abs() < 1e-15);
        assert!((chi(&k, 0.0, l3) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn branches_at_zero() {
        let (lo, hi) = eta2_branches(&m1(), 0.0).unwrap();
        assert!(lo.abs() < 1e-14);
        assert!((hi - 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn outside_range() {
        assert!(matches!(eta2_branches(&m1(), 2.0), Err(SpectralError::OutsideRange { .. })));
    }

    #[test]
    fn derivative_closed_forms() {
        let k = m1();
        let l3 = 3f64.ln();
        assert!((eta_derivative(&k, l3, l3).unwrap() + 1.0).abs() < 1e-13);
        assert!((eta_derivative(&k, 0.0, l3).unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn argmin_bisection_finds_quadratic_minimum() {
        let m = convex_argmin(|x| 2.0 * (x - 1.7), 0.0).unwrap();
        assert!((m - 1.7).abs() < 1e-15);
        assert_eq!(convex_argmin(|_| 1.0, 0.0), Err(SpectralError::Unbounded));
    }
}
