//! Stationary distribution of the chain truncated to `[0, N]^2 x phases`.
//!
//! Jumps leaving the box are redirected to the state they start from. The
//! direct solver reduces level by level along `x1` with subtraction-free
//! elimination, so tail probabilities keep their relative accuracy.

use log::debug;

use super::OracleError;
use crate::kernel::jumps;
use crate::linalg::{stationary_gth, Mat, Vector};
use crate::model::{mean_drifts, BlockSet, Region, Stability};

pub const MIN_TRUNCATION: usize = 30;

#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedStationary {
    pub n: usize,
    pub s0: usize,
    /// Probabilities indexed by `(x1 * (n + 1) + x2) * s0 + j`.
    pub nu: Vec<f64>,
    /// `||nu P - nu||_1` on the truncated chain.
    pub residual: f64,
    /// Mass within 3 levels of the truncation faces.
    pub tail_mass_bound: f64,
}

impl TruncatedStationary {
    fn index(&self, x1: usize, x2: usize) -> usize {
        (x1 * (self.n + 1) + x2) * self.s0
    }

    /// Phase vector at `(x1, x2)`.
    pub fn at(&self, x1: usize, x2: usize) -> &[f64] {
        let i = self.index(x1, x2);
        &self.nu[i..i + self.s0]
    }

    pub fn vector(&self, x1: usize, x2: usize) -> Vector {
        Vector::from_column_slice(self.at(x1, x2))
    }

    pub fn total_mass(&self) -> f64 {
        self.nu.iter().sum()
    }
}

/// One outgoing transition: target `(x1, x2, phase)` and probability.
type Edge = (usize, usize, usize, f64);

/// Transitions out of `(x1, x2, j)`, with jumps leaving the box sent back to the start.
fn edges(blocks: &BlockSet, n: usize, x1: usize, x2: usize, j: usize, out: &mut Vec<Edge>) {
    out.clear();
    let k = blocks.kernel(Region::of_point(x1, x2));
    for (i1, i2) in jumps() {
        let b = k.block(i1, i2);
        let (t1, t2) = (x1 as i64 + i1 as i64, x2 as i64 + i2 as i64);
        let inside = t1 >= 0 && t2 >= 0 && t1 <= n as i64 && t2 <= n as i64;
        for jp in 0..blocks.s0() {
            let p = b[(j, jp)];
            if p == 0.0 {
                continue;
            }
            if inside {
                out.push((t1 as usize, t2 as usize, jp, p));
            } else {
                out.push((x1, x2, j, p));
            }
        }
    }
}

fn check_inputs(blocks: &BlockSet, n: usize) -> Result<(), OracleError> {
    if n < MIN_TRUNCATION {
        return Err(OracleError::TruncationTooSmall(n));
    }
    let drift = mean_drifts(blocks).map_err(|e| OracleError::Numerical(e.to_string()))?;
    if drift.stability != Stability::PositiveRecurrent {
        return Err(OracleError::Unstable(drift.stability));
    }
    Ok(())
}

/// Subtraction-free LU factors of `I - U` for a substochastic `U`.
///
/// Only off-diagonal entries of `U` and the row deficits are used; pivots are
/// recomputed as outflow sums, never as `1 - U_kk`.
struct GthFactor {
    b: Mat,
    d: Vec<f64>,
}

impl GthFactor {
    fn new(mut b: Mat, mut exit: Vec<f64>) -> Result<Self, OracleError> {
        let m = b.nrows();
        let mut d = vec![0.0; m];
        for k in 0..m {
            let dk: f64 = ((k + 1)..m).map(|j| b[(k, j)]).sum::<f64>() + exit[k];
            if !(dk > 0.0) {
                return Err(OracleError::Numerical(format!("zero pivot at state {k}")));
            }
            d[k] = dk;
            for i in (k + 1)..m {
                let f = b[(i, k)] / dk;
                if f == 0.0 {
                    continue;
                }
                for j in (k + 1)..m {
                    if j != i {
                        b[(i, j)] += f * b[(k, j)];
                    }
                }
                exit[i] += f * exit[k];
            }
        }
        Ok(Self { b, d })
    }

    /// `x` with `(I - U) x = y`, for `y >= 0`.
    fn solve_right(&self, y: &mut [f64]) {
        let m = self.d.len();
        for i in 0..m {
            let mut s = y[i];
            for k in 0..i {
                s += self.b[(i, k)] / self.d[k] * y[k];
            }
            y[i] = s;
        }
        for k in (0..m).rev() {
            let mut s = y[k];
            for j in (k + 1)..m {
                s += self.b[(k, j)] * y[j];
            }
            y[k] = s / self.d[k];
        }
    }

    /// `x` with `x (I - U) = y`, for `y >= 0`.
    fn solve_left(&self, y: &mut [f64]) {
        let m = self.d.len();
        for k in 0..m {
            let mut s = y[k];
            for i in 0..k {
                s += y[i] * self.b[(i, k)];
            }
            y[k] = s / self.d[k];
        }
        for k in (0..m).rev() {
            let mut s = y[k];
            for i in (k + 1)..m {
                s += y[i] * self.b[(i, k)] / self.d[k];
            }
            y[k] = s;
        }
    }
}

/// Level blocks `P_{n,n-1}`, `P_{n,n}`, `P_{n,n+1}` over states `(x2, j)`.
fn level_blocks(blocks: &BlockSet, n: usize, x1: usize) -> [Mat; 3] {
    let s0 = blocks.s0();
    let m = (n + 1) * s0;
    let mut out = [Mat::zeros(m, m), Mat::zeros(m, m), Mat::zeros(m, m)];
    let mut buf = Vec::new();
    for x2 in 0..=n {
        for j in 0..s0 {
            edges(blocks, n, x1, x2, j, &mut buf);
            for &(t1, t2, jp, p) in &buf {
                let which = (t1 as i64 - x1 as i64 + 1) as usize;
                out[which][(x2 * s0 + j, t2 * s0 + jp)] += p;
            }
        }
    }
    out
}

/// Direct solve by censoring onto successively lower `x1` levels.
pub fn solve_truncated(blocks: &BlockSet, n: usize) -> Result<TruncatedStationary, OracleError> {
    check_inputs(blocks, n)?;
    let s0 = blocks.s0();
    let m = (n + 1) * s0;
    let level: Vec<[Mat; 3]> = (0..=n).map(|x1| level_blocks(blocks, n, x1)).collect();

    // factors[x1] factorizes I - U_{x1} for x1 >= 1
    let mut factors: Vec<Option<GthFactor>> = (0..=n).map(|_| None).collect();
    let mut u = level[n][1].clone();
    for x1 in (0..=n).rev() {
        if x1 < n {
            let f = factors[x1 + 1].as_ref().expect("factor of the level above");
            // X = (I - U_{x1+1})^{-1} P_{x1+1,x1}, column by column
            let down = &level[x1 + 1][0];
            let mut x = Mat::zeros(m, m);
            let mut col = vec![0.0; m];
            for c in 0..m {
                if down.column(c).iter().all(|&v| v == 0.0) {
                    continue;
                }
                col.copy_from_slice(down.column(c).as_slice());
                f.solve_right(&mut col);
                x.column_mut(c).copy_from_slice(&col);
            }
            u = &level[x1][1] + &level[x1][2] * x;
        }
        if x1 > 0 {
            let exit: Vec<f64> = level[x1][0].row_iter().map(|r| r.sum()).collect();
            factors[x1] = Some(GthFactor::new(u.clone(), exit)?);
        }
    }
    let pi0 = stationary_gth(&u).ok_or_else(|| OracleError::Numerical("level 0 is reducible".into()))?;

    let mut nu = vec![0.0; (n + 1) * m];
    nu[..m].copy_from_slice(pi0.as_slice());
    for x1 in 0..n {
        let prev = Vector::from_column_slice(&nu[x1 * m..(x1 + 1) * m]);
        let mut y: Vec<f64> = (prev.transpose() * &level[x1][2]).iter().copied().collect();
        factors[x1 + 1].as_ref().expect("factor").solve_left(&mut y);
        nu[(x1 + 1) * m..(x1 + 2) * m].copy_from_slice(&y);
    }
    let total: f64 = nu.iter().sum();
    nu.iter_mut().for_each(|v| *v /= total);
    let mut ts = TruncatedStationary { n, s0, nu, residual: 0.0, tail_mass_bound: 0.0 };
    ts.residual = balance_residual(blocks, &ts);
    ts.tail_mass_bound = face_mass(&ts, 3);
    debug!("truncated solve N={n}: residual {:e}", ts.residual);
    Ok(ts)
}

/// `||nu P - nu||_1`.
pub fn balance_residual(blocks: &BlockSet, ts: &TruncatedStationary) -> f64 {
    let n = ts.n;
    let mut flow = vec![0.0; ts.nu.len()];
    let mut buf = Vec::new();
    for x1 in 0..=n {
        for x2 in 0..=n {
            for j in 0..ts.s0 {
                let v = ts.at(x1, x2)[j];
                if v == 0.0 {
                    continue;
                }
                edges(blocks, n, x1, x2, j, &mut buf);
                for &(t1, t2, jp, p) in &buf {
                    flow[ts.index(t1, t2) + jp] += v * p;
                }
            }
        }
    }
    flow.iter().zip(&ts.nu).map(|(a, b)| (a - b).abs()).sum()
}

/// Mass of states with `x1 > n - width` or `x2 > n - width`.
pub fn face_mass(ts: &TruncatedStationary, width: usize) -> f64 {
    let lo = ts.n + 1 - width;
    let mut s = 0.0;
    for x1 in 0..=ts.n {
        for x2 in 0..=ts.n {
            if x1 >= lo || x2 >= lo {
                s += ts.at(x1, x2).iter().sum::<f64>();
            }
        }
    }
    s
}

/// Independent solve by symmetric Gauss-Seidel sweeps on the balance equations,
/// stopped when the largest relative change of a sweep falls below `tol`.
pub fn solve_truncated_sweeps(
    blocks: &BlockSet,
    n: usize,
    tol: f64,
    max_sweeps: usize,
) -> Result<TruncatedStationary, OracleError> {
    check_inputs(blocks, n)?;
    let s0 = blocks.s0();
    let states = (n + 1) * (n + 1) * s0;
    let idx = |x1: usize, x2: usize, j: usize| (x1 * (n + 1) + x2) * s0 + j;
    // incoming transitions (source, probability), and outflow excluding self-loops
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); states];
    let mut outflow = vec![0.0; states];
    let mut buf = Vec::new();
    for x1 in 0..=n {
        for x2 in 0..=n {
            for j in 0..s0 {
                let from = idx(x1, x2, j);
                edges(blocks, n, x1, x2, j, &mut buf);
                for &(t1, t2, jp, p) in &buf {
                    let to = idx(t1, t2, jp);
                    if to != from {
                        incoming[to].push((from, p));
                        outflow[from] += p;
                    }
                }
            }
        }
    }
    let mut nu = vec![1.0 / states as f64; states];
    let mut converged = false;
    for sweep in 0..max_sweeps {
        let mut change: f64 = 0.0;
        let mut update = |y: usize, nu: &mut Vec<f64>| {
            let inflow: f64 = incoming[y].iter().map(|&(z, p)| nu[z] * p).sum();
            let new = inflow / outflow[y];
            if new > 0.0 {
                change = change.max(((new - nu[y]) / new).abs());
            }
            nu[y] = new;
        };
        for y in 0..states {
            update(y, &mut nu);
        }
        for y in (0..states).rev() {
            update(y, &mut nu);
        }
        let total: f64 = nu.iter().sum();
        nu.iter_mut().for_each(|v| *v /= total);
        if change < tol {
            debug!("sweeps converged after {sweep} iterations");
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(OracleError::NotConverged);
    }
    let mut ts = TruncatedStationary { n, s0, nu, residual: 0.0, tail_mass_bound: 0.0 };
    ts.residual = balance_residual(blocks, &ts);
    ts.tail_mass_bound = face_mass(&ts, 3);
    Ok(ts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gth_factor_solves_both_sides() {
        let u = Mat::from_row_slice(3, 3, &[0.1, 0.3, 0.2, 0.2, 0.0, 0.5, 0.1, 0.1, 0.3]);
        let exit: Vec<f64> = u.row_iter().map(|r| 1.0 - r.sum()).collect();
        let f = GthFactor::new(u.clone(), exit).unwrap();
        let a = Mat::identity(3, 3) - &u;
        let mut y = vec![1.0, 2.0, 0.5];
        f.solve_right(&mut y);
        let back = &a * Vector::from_vec(y.clone());
        assert!((back - Vector::from_vec(vec![1.0, 2.0, 0.5])).amax() < 1e-14);
        let mut y = vec![0.3, 0.0, 1.0];
        f.solve_left(&mut y);
        let back = Vector::from_vec(y).transpose() * &a;
        assert!((back.transpose() - Vector::from_vec(vec![0.3, 0.0, 1.0])).amax() < 1e-14);
    }

    #[test]
    fn small_truncation_is_rejected() {
        let b = BlockSet::load_json(include_str!("../../fixtures/m1.json")).unwrap();
        assert!(matches!(solve_truncated(&b, 10), Err(OracleError::TruncationTooSmall(10))));
    }
}
