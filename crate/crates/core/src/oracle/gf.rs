//! Generating functions of truncated stationary data and the stationary identity.

use serde::Serialize;

use super::truncated::TruncatedStationary;
use super::OracleError;
use crate::geometry::GammaGeometry;
use crate::linalg::{Mat, Vector};
use crate::model::{BlockSet, Region};
use crate::spectral;
use crate::tail::{boundary_g, BoundaryValues};

/// Number of terms in the ratio estimate of the omitted geometric tail.
const TAIL_DECADE: usize = 10;
/// Levels next to the truncation face treated as biased.
const FACE_SHELL: usize = 3;

/// Geometric bound on the tail of `sum_i terms[i]` beyond the last index, with
/// the shell next to the face counted as omitted.
fn series_tail(terms: &[f64]) -> Result<f64, OracleError> {
    let n = terms.len() - 1;
    let hi = n - FACE_SHELL;
    let lo = hi - TAIL_DECADE;
    let (a, b) = (terms[lo], terms[hi]);
    let shell: f64 = terms[hi + 1..].iter().sum();
    if a == 0.0 {
        return Ok(shell);
    }
    let ratio = (b / a).powf(1.0 / TAIL_DECADE as f64);
    if !(ratio < 1.0) {
        return Err(OracleError::DivergentAtArgument { ratio });
    }
    Ok(shell + b * ratio / (1.0 - ratio) * 2.0)
}

/// `phi1(z) = sum_{i>=1} nu_{(i,0)} z^i`, `phi2(w) = sum_{j>=1} nu_{(0,j)} w^j` and `nu_{(0,0)}`.
pub fn eval_boundary_gf(ts: &TruncatedStationary, z: f64, w: f64) -> Result<BoundaryValues, OracleError> {
    let n = ts.n;
    let mut phi1 = Vector::zeros(ts.s0);
    let mut phi2 = Vector::zeros(ts.s0);
    let mut t1 = vec![0.0; n + 1];
    let mut t2 = vec![0.0; n + 1];
    for i in 1..=n {
        let a = ts.vector(i, 0) * z.powi(i as i32);
        t1[i] = a.sum();
        phi1 += a;
        let b = ts.vector(0, i) * w.powi(i as i32);
        t2[i] = b.sum();
        phi2 += b;
    }
    let tail_bound = series_tail(&t1)? + series_tail(&t2)?;
    Ok(BoundaryValues { phi1, phi2, nu00: ts.vector(0, 0), tail_bound })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IdentityCheck {
    /// Sup norm of `phi_+(I - A(z,w)) - g(z,w)`.
    pub residual: f64,
    /// Bound on the contribution of states next to the truncation faces, plus rounding.
    pub tail_bound: f64,
}

/// Residual of `phi_+(z,w)(I - A^{1,2}(z,w)) = g(z,w)` from truncated sums.
pub fn stationary_identity_residual(
    blocks: &BlockSet,
    ts: &TruncatedStationary,
    z: f64,
    w: f64,
) -> Result<IdentityCheck, OracleError> {
    let n = ts.n;
    let s0 = ts.s0;
    let mut phi_plus = Vector::zeros(s0);
    let mut shell = 0.0;
    let mut abs_sum = 0.0;
    let lo = n + 1 - FACE_SHELL;
    let (zs, ws) = (z.max(1.0), w.max(1.0));
    let zp: Vec<f64> = (0..=n).map(|i| z.powi(i as i32)).collect();
    let wp: Vec<f64> = (0..=n).map(|i| w.powi(i as i32)).collect();
    for x1 in 0..=n {
        for x2 in 0..=n {
            let weight = zp[x1] * wp[x2];
            let v = ts.vector(x1, x2) * weight;
            let mass = v.sum();
            abs_sum += mass;
            if x1 >= lo || x2 >= lo {
                shell += mass * (1.0 + zs * ws);
            }
            if x1 >= 1 && x2 >= 1 {
                phi_plus += v;
            }
        }
    }
    let bv = BoundaryValues {
        phi1: (1..=n).fold(Vector::zeros(s0), |acc, i| acc + ts.vector(i, 0) * zp[i]),
        phi2: (1..=n).fold(Vector::zeros(s0), |acc, j| acc + ts.vector(0, j) * wp[j]),
        nu00: ts.vector(0, 0),
        tail_bound: shell,
    };
    let a = blocks.kernel(Region::Interior).eval(z, w);
    let lhs = (phi_plus.transpose() * (Mat::identity(s0, s0) - a)).transpose();
    let rhs = boundary_g(blocks, z, w, &bv);
    let residual = (lhs - rhs).amax();
    let terms = ((n + 1) * (n + 1) * s0 * 9) as f64;
    let rounding = f64::EPSILON * terms * abs_sum * (1.0 + zs * ws);
    Ok(IdentityCheck { residual, tail_bound: shell + rounding })
}

/// Whether `theta` lies in the region dominated componentwise by a point of
/// `{chi < 1, theta1 < theta1^*, theta2 < theta2^*}`.
pub fn in_domain(blocks: &BlockSet, geo: &GammaGeometry, theta: (f64, f64)) -> bool {
    let k = blocks.interior();
    let top = geo.theta1_star.min(geo.theta1_max);
    if theta.0 >= top || theta.1 >= geo.theta2_star {
        return false;
    }
    let lo = theta.0.max(geo.theta1_min);
    const SAMPLES: usize = 400;
    (1..SAMPLES).any(|i| {
        let t1 = lo + (top - lo) * i as f64 / SAMPLES as f64;
        if t1 <= theta.0 {
            return false;
        }
        match spectral::eta2_branches(k, t1) {
            Ok((under, bar)) => theta.1.max(under) < bar.min(geo.theta2_star),
            Err(_) => false,
        }
    })
}
