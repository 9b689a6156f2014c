//! Small dense helpers shared by the numerical modules.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Max absolute row sum.
pub fn inf_norm(m: &Mat) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0, |a, &x| a.max(x.abs()))
}

pub fn is_nonnegative(m: &Mat) -> bool {
    m.iter().all(|&x| x >= 0.0)
}

pub fn inverse(m: &Mat) -> Option<Mat> {
    let inv = m.clone().lu().try_inverse()?;
    inv.iter().all(|x| x.is_finite()).then_some(inv)
}

/// `(I - m)^{-1}`, or `None` when singular.
pub fn inv_i_minus(m: &Mat) -> Option<Mat> {
    let n = m.nrows();
    inverse(&(Mat::identity(n, n) - m))
}

/// Assemble a 2x2 block matrix from equally sized square blocks.
pub fn block2(a11: &Mat, a12: &Mat, a21: &Mat, a22: &Mat) -> Mat {
    let n = a11.nrows();
    let mut out = Mat::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(a11);
    out.view_mut((0, n), (n, n)).copy_from(a12);
    out.view_mut((n, 0), (n, n)).copy_from(a21);
    out.view_mut((n, n), (n, n)).copy_from(a22);
    out
}

/// Sine of the angle between two nonzero vectors, stable for tiny angles.
pub fn sine_angle(a: &Vector, b: &Vector) -> f64 {
    let a = a / a.norm();
    let b = b / b.norm();
    let proj = a.dot(&b);
    (&a - &b * proj).norm()
}

/// Singular values sorted in decreasing order.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

/// Moduli of all eigenvalues, largest first.
pub fn eigen_moduli(m: &Mat) -> Vec<f64> {
    let mut ev: Vec<f64> = m.complex_eigenvalues().iter().map(|c| c.norm()).collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// Stationary row vector of an irreducible stochastic matrix by GTH elimination.
///
/// Diagonal entries are never read, so rows only need to be stochastic up to
/// their off-diagonal mass. Returns `None` when a pivot vanishes (reducible input).
pub fn stationary_gth(p: &Mat) -> Option<Vector> {
    let n = p.nrows();
    let mut a = p.clone();
    let mut piv = vec![0.0; n];
    for k in (1..n).rev() {
        let s: f64 = (0..k).map(|j| a[(k, j)]).sum();
        if s <= 0.0 || !s.is_finite() {
            return None;
        }
        piv[k] = s;
        for i in 0..k {
            let f = a[(i, k)] / s;
            if f != 0.0 {
                for j in 0..k {
                    a[(i, j)] += f * a[(k, j)];
                }
            }
        }
    }
    let mut pi = Vector::zeros(n);
    pi[0] = 1.0;
    for k in 1..n {
        pi[k] = (0..k).map(|i| pi[i] * a[(i, k)]).sum::<f64>() / piv[k];
    }
    let total = pi.sum();
    Some(pi / total)
}
