//! Model definition, validation, induced one-dimensional kernels and stability.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{jumps, Kernel};
use crate::linalg::{inv_i_minus, stationary_gth, Mat, Vector};
use crate::qbd_core::{self, Triplet};

/// Tolerance on row sums accepted at parse time before exact renormalization.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Drifts with absolute value below this are treated as zero.
pub const ZERO_DRIFT_TOL: f64 = 1e-9;
/// Side of the level window explored by the irreducibility check.
pub const IRREDUCIBILITY_WINDOW: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Empty,
    B1,
    B2,
    Interior,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::Empty, Region::B1, Region::B2, Region::Interior];

    pub fn of_point(x1: usize, x2: usize) -> Region {
        match (x1 > 0, x2 > 0) {
            (false, false) => Region::Empty,
            (true, false) => Region::B1,
            (false, true) => Region::B2,
            (true, true) => Region::Interior,
        }
    }

    /// Whether the jump `(i, j)` may carry probability from this region.
    pub fn allows(self, i: i32, j: i32) -> bool {
        match self {
            Region::Empty => i >= 0 && j >= 0,
            Region::B1 => j >= 0,
            Region::B2 => i >= 0,
            Region::Interior => true,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Region::Empty => "empty",
            Region::B1 => "b1",
            Region::B2 => "b2",
            Region::Interior => "interior",
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    fn mirrored(self) -> Region {
        match self {
            Region::B1 => Region::B2,
            Region::B2 => Region::B1,
            r => r,
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed model file: {0}")]
    Parse(String),
    #[error("model failed validation with {} violation(s)", .0.violations.len())]
    Invalid(Box<ValidationReport>),
    #[error("axis must be 1 or 2, got {0}")]
    InvalidAxis(u8),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// The four region-indexed block families of a 2d-QBD process.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSet {
    s0: usize,
    kernels: [Kernel; 4],
}

impl BlockSet {
    pub fn new(s0: usize, mut f: impl FnMut(Region, i32, i32) -> Mat) -> Self {
        let kernels = Region::ALL.map(|r| Kernel::from_fn(s0, |i, j| f(r, i, j)));
        Self { s0, kernels }
    }

    /// Single-phase model from scalar jump probabilities.
    pub fn scalar(mut p: impl FnMut(Region, i32, i32) -> f64) -> Self {
        Self::new(1, |r, i, j| Mat::from_element(1, 1, p(r, i, j)))
    }

    pub fn s0(&self) -> usize {
        self.s0
    }

    pub fn kernel(&self, region: Region) -> &Kernel {
        &self.kernels[region.index()]
    }

    pub fn kernel_mut(&mut self, region: Region) -> &mut Kernel {
        &mut self.kernels[region.index()]
    }

    pub fn interior(&self) -> &Kernel {
        self.kernel(Region::Interior)
    }

    pub fn block(&self, region: Region, i: i32, j: i32) -> &Mat {
        self.kernel(region).block(i, j)
    }

    /// The same chain with the two coordinates exchanged.
    pub fn transposed(&self) -> BlockSet {
        BlockSet::new(self.s0, |r, i, j| self.block(r.mirrored(), j, i).clone())
    }

    /// The same chain with phases relabelled by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> BlockSet {
        let kernels = Region::ALL.map(|r| self.kernel(r).permute(perm));
        BlockSet { s0: self.s0, kernels }
    }

    /// Divide every row of each region family by its total mass.
    pub fn renormalize_rows(&mut self) {
        for r in Region::ALL {
            let sums = self.kernel(r).total().column_sum();
            let k = self.kernel_mut(r);
            for (i, j) in jumps() {
                let b = k.block_mut(i, j);
                for row in 0..b.nrows() {
                    if sums[row] > 0.0 {
                        for c in 0..b.ncols() {
                            b[(row, c)] /= sums[row];
                        }
                    }
                }
            }
        }
    }

    /// Parse a model file without checking probabilistic invariants.
    pub fn parse_json(text: &str) -> Result<BlockSet, ModelError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        let s0 = file.phases;
        if s0 == 0 {
            return Err(ModelError::Parse("phases must be positive".into()));
        }
        let mut set = BlockSet::new(s0, |_, _, _| Mat::zeros(s0, s0));
        for (region, map) in [
            (Region::Empty, &file.blocks.empty),
            (Region::B1, &file.blocks.b1),
            (Region::B2, &file.blocks.b2),
            (Region::Interior, &file.blocks.interior),
        ] {
            let mut seen = Vec::new();
            for (key, rows) in map {
                let (i, j) = parse_jump_key(key)?;
                if seen.contains(&(i, j)) {
                    return Err(ModelError::Parse(format!("duplicate jump {key} in {}", region.key())));
                }
                seen.push((i, j));
                if rows.len() != s0 || rows.iter().any(|r| r.len() != s0) {
                    return Err(ModelError::Parse(format!(
                        "block {key} in {} must be {s0}x{s0}",
                        region.key()
                    )));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                *set.kernel_mut(region).block_mut(i, j) = Mat::from_row_slice(s0, s0, &flat);
            }
        }
        Ok(set)
    }

    /// Parse, validate and renormalize; the entry point for model files.
    pub fn load_json(text: &str) -> Result<BlockSet, ModelError> {
        let mut set = Self::parse_json(text)?;
        let report = validate(&set);
        if !report.is_ok() {
            return Err(ModelError::Invalid(Box::new(report)));
        }
        set.renormalize_rows();
        Ok(set)
    }

    pub fn to_json(&self) -> String {
        let mut blocks = BTreeMap::new();
        for r in Region::ALL {
            let mut map = BTreeMap::new();
            for (i, j) in jumps() {
                let b = self.block(r, i, j);
                if b.iter().any(|&x| x != 0.0) {
                    let rows: Vec<Vec<f64>> =
                        (0..self.s0).map(|a| (0..self.s0).map(|c| b[(a, c)]).collect()).collect();
                    map.insert(format!("{i},{j}"), rows);
                }
            }
            blocks.insert(r.key(), map);
        }
        serde_json::json!({ "phases": self.s0, "blocks": blocks }).to_string()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    phases: usize,
    blocks: RegionMaps,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionMaps {
    empty: BTreeMap<String, Vec<Vec<f64>>>,
    b1: BTreeMap<String, Vec<Vec<f64>>>,
    b2: BTreeMap<String, Vec<Vec<f64>>>,
    interior: BTreeMap<String, Vec<Vec<f64>>>,
}

fn parse_jump_key(key: &str) -> Result<(i32, i32), ModelError> {
    let bad = || ModelError::Parse(format!("invalid jump key {key:?}; expected \"i,j\" with i,j in -1..1"));
    let (a, b) = key.split_once(',').ok_or_else(bad)?;
    let i: i32 = a.trim().parse().map_err(|_| bad())?;
    let j: i32 = b.trim().parse().map_err(|_| bad())?;
    if !(-1..=1).contains(&i) || !(-1..=1).contains(&j) {
        return Err(bad());
    }
    Ok((i, j))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum Violation {
    NonFiniteEntry { region: Region, jump: (i32, i32), row: usize, col: usize },
    NegativeEntry { region: Region, jump: (i32, i32), row: usize, col: usize, value: f64 },
    EntryAboveOne { region: Region, jump: (i32, i32), row: usize, col: usize, value: f64 },
    ForbiddenSupport { region: Region, jump: (i32, i32) },
    NonStochasticRow { region: Region, row: usize, sum: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    Fail,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub irreducibility: Verdict,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty() && self.irreducibility != Verdict::Fail
    }
}

pub fn validate(blocks: &BlockSet) -> ValidationReport {
    let mut violations = Vec::new();
    for r in Region::ALL {
        for (i, j) in jumps() {
            let b = blocks.block(r, i, j);
            let mut nonzero = false;
            for row in 0..b.nrows() {
                for col in 0..b.ncols() {
                    let v = b[(row, col)];
                    let jump = (i, j);
                    if !v.is_finite() {
                        violations.push(Violation::NonFiniteEntry { region: r, jump, row, col });
                    } else if v < 0.0 {
                        violations.push(Violation::NegativeEntry { region: r, jump, row, col, value: v });
                    } else if v > 1.0 {
                        violations.push(Violation::EntryAboveOne { region: r, jump, row, col, value: v });
                    }
                    nonzero |= v != 0.0;
                }
            }
            if nonzero && !r.allows(i, j) {
                violations.push(Violation::ForbiddenSupport { region: r, jump: (i, j) });
            }
        }
        let sums = blocks.kernel(r).total().column_sum();
        for (row, &sum) in sums.iter().enumerate() {
            if !((sum - 1.0).abs() <= STOCHASTIC_TOL) {
                violations.push(Violation::NonStochasticRow { region: r, row, sum });
            }
        }
    }
    let irreducibility = if violations.is_empty() { irreducibility_verdict(blocks) } else { Verdict::Unknown };
    ValidationReport { violations, irreducibility }
}

fn provably_reducible(blocks: &BlockSet) -> bool {
    let s0 = blocks.s0();
    let nonzero = |r: Region, i: i32, j: i32| blocks.block(r, i, j).iter().any(|&x| x > 0.0);
    let any_jump = |regions: &[Region], pred: &dyn Fn(i32, i32) -> bool| {
        regions.iter().any(|&r| jumps().any(|(i, j)| pred(i, j) && nonzero(r, i, j)))
    };
    let all = &Region::ALL;
    if !any_jump(all, &|i, _| i == 1) || !any_jump(all, &|_, j| j == 1) {
        return true;
    }
    if !any_jump(&[Region::B1, Region::Interior], &|i, _| i == -1)
        || !any_jump(&[Region::B2, Region::Interior], &|_, j| j == -1)
    {
        return true;
    }
    if s0 > 1 {
        for target in 0..s0 {
            let entered = Region::ALL.iter().any(|&r| {
                jumps().any(|(i, j)| {
                    let b = blocks.block(r, i, j);
                    (0..s0).any(|from| from != target && b[(from, target)] > 0.0)
                })
            });
            if !entered {
                return true;
            }
        }
    }
    false
}

/// Sufficient-condition check of irreducibility and aperiodicity on a finite window.
fn irreducibility_verdict(blocks: &BlockSet) -> Verdict {
    if provably_reducible(blocks) {
        return Verdict::Fail;
    }
    let s0 = blocks.s0();
    let w = IRREDUCIBILITY_WINDOW;
    let n = w * w * s0;
    let id = |x1: usize, x2: usize, p: usize| (x1 * w + x2) * s0 + p;
    let mut fwd = vec![Vec::new(); n];
    let mut bwd = vec![Vec::new(); n];
    for x1 in 0..w {
        for x2 in 0..w {
            let region = Region::of_point(x1, x2);
            for (i, j) in jumps() {
                let (y1, y2) = (x1 as i64 + i as i64, x2 as i64 + j as i64);
                if y1 < 0 || y2 < 0 || y1 >= w as i64 || y2 >= w as i64 {
                    continue;
                }
                let b = blocks.block(region, i, j);
                for p in 0..s0 {
                    for q in 0..s0 {
                        if b[(p, q)] > 0.0 {
                            let (u, v) = (id(x1, x2, p), id(y1 as usize, y2 as usize, q));
                            fwd[u].push(v);
                            bwd[v].push(u);
                        }
                    }
                }
            }
        }
    }
    let bfs = |adj: &Vec<Vec<usize>>| {
        let mut dist = vec![usize::MAX; n];
        dist[0] = 0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    };
    let dist = bfs(&fwd);
    let back = bfs(&bwd);
    if dist.iter().chain(back.iter()).any(|&d| d == usize::MAX) {
        return Verdict::Unknown;
    }
    let mut period = 0i64;
    for (u, out) in fwd.iter().enumerate() {
        for &v in out {
            let delta = (dist[u] as i64 + 1 - dist[v] as i64).abs();
            period = gcd(period, delta);
        }
    }
    if period == 1 {
        Verdict::Pass
    } else {
        Verdict::Unknown
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Kernel of the Markov-additive process induced on one boundary face.
///
/// The additive coordinate is the face's own axis; the level is the other
/// coordinate. Level 0 uses the face blocks, levels >= 1 the interior blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct MaKernel1D {
    pub axis: u8,
    boundary: [[Mat; 2]; 3],
    interior: [[Mat; 3]; 3],
}

impl MaKernel1D {
    /// Block for additive increment `delta` and level shift `shift ∈ {0, 1}` at level 0.
    pub fn boundary(&self, delta: i32, shift: i32) -> &Mat {
        &self.boundary[(delta + 1) as usize][shift as usize]
    }

    /// Block for additive increment `delta` and level shift `shift ∈ {-1, 0, 1}` at levels >= 1.
    pub fn interior(&self, delta: i32, shift: i32) -> &Mat {
        &self.interior[(delta + 1) as usize][(shift + 1) as usize]
    }

    /// Level-process transition matrix on `{0..=n} x phases`, additive part summed out,
    /// with jumps above level `n` redirected to the current state.
    pub fn level_matrix(&self, n: usize) -> Mat {
        let s0 = self.boundary(0, 0).nrows();
        let mut p = Mat::zeros((n + 1) * s0, (n + 1) * s0);
        for level in 0..=n {
            let shifts: &[i32] = if level == 0 { &[0, 1] } else { &[-1, 0, 1] };
            for &s in shifts {
                let mut b = Mat::zeros(s0, s0);
                for d in -1..=1 {
                    b += if level == 0 { self.boundary(d, s) } else { self.interior(d, s) };
                }
                let target = level as i64 + s as i64;
                if target > n as i64 {
                    for r in 0..s0 {
                        p[(level * s0 + r, level * s0 + r)] += b.row(r).sum();
                    }
                } else {
                    let t = target as usize;
                    let mut view = p.view_mut((level * s0, t * s0), (s0, s0));
                    view += &b;
                }
            }
        }
        p
    }
}

pub fn build_ma_kernel(blocks: &BlockSet, axis: u8) -> Result<MaKernel1D, ModelError> {
    let (face, swap) = match axis {
        1 => (Region::B1, false),
        2 => (Region::B2, true),
        other => return Err(ModelError::InvalidAxis(other)),
    };
    // (delta, shift) -> (i1, i2)
    let jump = |delta: i32, shift: i32| if swap { (shift, delta) } else { (delta, shift) };
    let boundary = std::array::from_fn(|d| {
        std::array::from_fn(|s| {
            let (i, j) = jump(d as i32 - 1, s as i32);
            blocks.block(face, i, j).clone()
        })
    });
    let interior = std::array::from_fn(|d| {
        std::array::from_fn(|s| {
            let (i, j) = jump(d as i32 - 1, s as i32 - 1);
            blocks.block(Region::Interior, i, j).clone()
        })
    });
    Ok(MaKernel1D { axis, boundary, interior })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Stability {
    PositiveRecurrent,
    Transient,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftReport {
    pub a12: (f64, f64),
    pub a1: Option<f64>,
    pub a2: Option<f64>,
    pub stability: Stability,
}

/// Mean drifts of the interior and of both face-induced processes, with the stability verdict.
pub fn mean_drifts(blocks: &BlockSet) -> Result<DriftReport, ModelError> {
    let interior = blocks.interior();
    let pi = stationary_gth(&interior.total())
        .ok_or_else(|| ModelError::Numerical("interior phase process is reducible".into()))?;
    let ones = Vector::from_element(blocks.s0(), 1.0);
    let drift = |f: &dyn Fn(i32, i32) -> f64| pi.dot(&(interior.weighted(1.0, 1.0, f) * &ones));
    let a12 = (drift(&|i, _| i as f64), drift(&|_, j| j as f64));

    let a1 = if a12.1 < -ZERO_DRIFT_TOL { Some(face_drift(&build_ma_kernel(blocks, 1)?)?) } else { None };
    let a2 = if a12.0 < -ZERO_DRIFT_TOL { Some(face_drift(&build_ma_kernel(blocks, 2)?)?) } else { None };
    let stability = drift_stability(a12, a1, a2);
    Ok(DriftReport { a12, a1, a2, stability })
}

/// Horizontal drift of a face-induced process under the stationary law of its level process.
fn face_drift(k: &MaKernel1D) -> Result<f64, ModelError> {
    let s0 = k.boundary(0, 0).nrows();
    let numerr = |m: &str| ModelError::Numerical(m.to_string());
    let sum_delta = |f: &dyn Fn(i32) -> Mat| {
        let mut m = Mat::zeros(s0, s0);
        for d in -1..=1 {
            m += &f(d);
        }
        m
    };
    let b0 = sum_delta(&|d| k.boundary(d, 0).clone());
    let b1 = sum_delta(&|d| k.boundary(d, 1).clone());
    let am = sum_delta(&|d| k.interior(d, -1).clone());
    let a0 = sum_delta(&|d| k.interior(d, 0).clone());
    let ap = sum_delta(&|d| k.interior(d, 1).clone());
    let t = Triplet::new(am.clone(), a0.clone(), ap).map_err(|e| numerr(&e.to_string()))?;
    let r = qbd_core::solve_r(&t).map_err(|e| numerr(&e.to_string()))?;
    let n0 = inv_i_minus(&(&a0 + &r * &am)).ok_or_else(|| numerr("level-1 block is singular"))?;
    let r0 = &b1 * n0;
    let pi0 = stationary_gth(&(&b0 + &r0 * &am)).ok_or_else(|| numerr("censored level-0 matrix is reducible"))?;
    let tail = inv_i_minus(&r).ok_or_else(|| numerr("I - R is singular"))?;
    let ones = Vector::from_element(s0, 1.0);
    let upper = &r0 * &tail;
    let mass = pi0.dot(&ones) + pi0.dot(&(&upper * &ones));
    let ddrift = |f: &dyn Fn(i32, i32) -> Mat, shifts: &[i32]| {
        let mut m = Mat::zeros(s0, s0);
        for d in -1..=1 {
            for &s in shifts {
                m += f(d, s) * d as f64;
            }
        }
        m * &ones
    };
    let d0 = ddrift(&|d, s| k.boundary(d, s).clone(), &[0, 1]);
    let di = ddrift(&|d, s| k.interior(d, s).clone(), &[-1, 0, 1]);
    Ok((pi0.dot(&d0) + pi0.dot(&(&upper * di))) / mass)
}

fn drift_stability(a12: (f64, f64), a1: Option<f64>, a2: Option<f64>) -> Stability {
    let neg = |a: f64| a < -ZERO_DRIFT_TOL;
    let pos = |a: f64| a > ZERO_DRIFT_TOL;
    let by_sign = |a: Option<f64>| match a {
        Some(a) if neg(a) => Stability::PositiveRecurrent,
        Some(a) if pos(a) => Stability::Transient,
        _ => Stability::Inconclusive,
    };
    match (neg(a12.0), neg(a12.1)) {
        (true, true) => match (a1, a2) {
            (Some(x), Some(y)) if pos(x) || pos(y) => Stability::Transient,
            (Some(x), Some(y)) if neg(x) && neg(y) => Stability::PositiveRecurrent,
            _ => Stability::Inconclusive,
        },
        (false, true) => by_sign(a1),
        (true, false) => by_sign(a2),
        (false, false) => {
            if pos(a12.0) || pos(a12.1) {
                Stability::Transient
            } else {
                Stability::Inconclusive
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn m1() -> BlockSet {
        BlockSet::load_json(include_str!("../fixtures/m1.json")).unwrap()
    }

    #[test]
    fn m1_passes_validation() {
        let r = validate(&m1());
        assert!(r.violations.is_empty());
        assert_eq!(r.irreducibility, Verdict::Pass);
    }

    #[test]
    fn short_row_is_reported() {
        let mut b = m1();
        b.kernel_mut(Region::Interior).block_mut(0, 0)[(0, 0)] = 0.19;
        let r = validate(&b);
        assert!(matches!(r.violations[..], [Violation::NonStochasticRow { region: Region::Interior, .. }]));
    }

    #[test]
    fn forbidden_support_is_reported() {
        let mut b = m1();
        b.kernel_mut(Region::Empty).block_mut(-1, 0)[(0, 0)] = 0.1;
        b.kernel_mut(Region::Empty).block_mut(0, 0)[(0, 0)] = 0.3;
        let r = validate(&b);
        assert_eq!(r.violations, vec![Violation::ForbiddenSupport { region: Region::Empty, jump: (-1, 0) }]);
    }

    #[test]
    fn no_upward_jumps_fails_irreducibility() {
        let b = BlockSet::scalar(|r, i, j| match (r, i, j) {
            (_, 0, 0) => 1.0,
            _ => 0.0,
        });
        assert_eq!(validate(&b).irreducibility, Verdict::Fail);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_jumps() {
        let extra = r#"{"phases":1,"blocks":{"empty":{},"b1":{},"b2":{},"interior":{}},"x":1}"#;
        assert!(matches!(BlockSet::parse_json(extra), Err(ModelError::Parse(_))));
        let bad = r#"{"phases":1,"blocks":{"empty":{"2,0":[[1]]},"b1":{},"b2":{},"interior":{}}}"#;
        assert!(matches!(BlockSet::parse_json(bad), Err(ModelError::Parse(_))));
    }

    #[test]
    fn json_round_trip() {
        let b = m1();
        assert_eq!(BlockSet::parse_json(&b.to_json()).unwrap(), b);
    }

    #[test]
    fn near_stochastic_rows_are_renormalized() {
        let text = include_str!("../fixtures/m1.json").replace("0.2]]", "0.2000000000001]]");
        let b = BlockSet::load_json(&text).unwrap();
        for r in Region::ALL {
            let s = b.kernel(r).total()[(0, 0)];
            assert!((s - 1.0).abs() <= f64::EPSILON);
        }
    }

    #[test]
    fn kernel_axis1_copies_face_and_interior_blocks() {
        let b = m1();
        let k = build_ma_kernel(&b, 1).unwrap();
        let close = |m: &Mat, x: f64| (m[(0, 0)] - x).abs() < 1e-15;
        assert!(close(k.boundary(1, 0), 0.1));
        assert!(close(k.boundary(-1, 0), 0.3));
        assert!(close(k.boundary(0, 1), 0.2));
        assert!(close(k.boundary(0, 0), 0.4));
        assert!(close(k.interior(0, -1), 0.3));
        assert!(close(k.interior(1, 0), 0.1));
    }

    #[test]
    fn kernel_axis2_mirrors_axis1_for_m1() {
        let b = m1();
        let (k1, k2) = (build_ma_kernel(&b, 1).unwrap(), build_ma_kernel(&b, 2).unwrap());
        for d in -1..=1 {
            for s in 0..=1 {
                assert!((k1.boundary(d, s) - k2.boundary(d, s)).amax() < 1e-15);
            }
            for s in -1..=1 {
                assert!((k1.interior(d, s) - k2.interior(d, s)).amax() < 1e-15);
            }
        }
        assert!(matches!(build_ma_kernel(&b, 3), Err(ModelError::InvalidAxis(3))));
    }

    #[test]
    fn face_equal_to_interior_drops_only_down_steps() {
        let b = BlockSet::new(1, |r, i, j| {
            let m1 = m1();
            match r {
                Region::B1 if j >= 0 => m1.block(Region::Interior, i, j).clone(),
                _ => m1.block(r, i, j).clone(),
            }
        });
        let k = build_ma_kernel(&b, 1).unwrap();
        for d in -1..=1 {
            for s in 0..=1 {
                assert_eq!(k.boundary(d, s), k.interior(d, s));
            }
        }
    }

    #[test]
    fn level_matrix_is_stochastic() {
        let k = build_ma_kernel(&m1(), 1).unwrap();
        let p = k.level_matrix(12);
        for s in p.column_sum().iter() {
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn m1_drifts() {
        let d = mean_drifts(&m1()).unwrap();
        assert!((d.a12.0 + 0.2).abs() < 1e-14 && (d.a12.1 + 0.2).abs() < 1e-14);
        assert!((d.a1.unwrap() + 0.2).abs() < 1e-12);
        assert!((d.a2.unwrap() + 0.2).abs() < 1e-12);
        assert_eq!(d.stability, Stability::PositiveRecurrent);
    }

    fn with_interior_horizontal(right: f64, left: f64) -> BlockSet {
        let mut b = m1();
        b.kernel_mut(Region::Interior).block_mut(1, 0)[(0, 0)] = right;
        b.kernel_mut(Region::Interior).block_mut(-1, 0)[(0, 0)] = left;
        b
    }

    // Background level chain: boundary mass 1/2, interior mass 1/2, so
    // a1 = (face drift + interior drift) / 2.
    #[test]
    fn swapped_horizontal_interior_is_decided_by_face_drift() {
        let d = mean_drifts(&with_interior_horizontal(0.3, 0.1)).unwrap();
        assert!((d.a12.0 - 0.2).abs() < 1e-14);
        assert!(d.a2.is_none());
        assert!(d.a1.unwrap().abs() < 1e-12);
        assert_eq!(d.stability, Stability::Inconclusive);

        let d = mean_drifts(&with_interior_horizontal(0.25, 0.15)).unwrap();
        assert!((d.a1.unwrap() + 0.05).abs() < 1e-12);
        assert_eq!(d.stability, Stability::PositiveRecurrent);

        let d = mean_drifts(&with_interior_horizontal(0.35, 0.05)).unwrap();
        assert!((d.a1.unwrap() - 0.05).abs() < 1e-12);
        assert_eq!(d.stability, Stability::Transient);
    }

    #[test]
    fn drift_stability_cases() {
        use Stability::*;
        assert_eq!(drift_stability((-0.1, -0.1), Some(-0.1), Some(-0.2)), PositiveRecurrent);
        assert_eq!(drift_stability((-0.1, -0.1), Some(0.1), Some(-0.2)), Transient);
        assert_eq!(drift_stability((-0.1, -0.1), Some(0.0), Some(-0.2)), Inconclusive);
        assert_eq!(drift_stability((0.1, -0.1), Some(-0.1), None), PositiveRecurrent);
        assert_eq!(drift_stability((-0.1, 0.0), None, Some(0.3)), Transient);
        assert_eq!(drift_stability((0.1, 0.0), None, None), Transient);
        assert_eq!(drift_stability((0.0, 0.0), None, None), Inconclusive);
    }
}
