//! Single-trajectory simulation.
//!
//! The generator is ChaCha8 seeded with `seed_from_u64(seed)`; every step
//! draws exactly one `f64` uniform and inverts the cumulative row of the
//! current region's blocks, jumps in row-major `(i, j)` order then target phase.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::kernel::jumps;
use crate::model::{BlockSet, Region};

/// Number of batches used for the batch-means error estimate.
const BATCHES: u64 = 100;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Simulation {
    pub steps: u64,
    pub seed: u64,
    /// Side of the counted window `[0, window]^2`.
    pub window: usize,
    /// Visit counts indexed by `(x1 * (window + 1) + x2) * s0 + j`.
    pub counts: Vec<u64>,
    /// Time-average of the level jump.
    pub mean_jump: (f64, f64),
    /// Batch-means standard error of the fraction of time spent in the window.
    pub window_mass_se: f64,
    pub final_state: (usize, usize, usize),
}

impl Simulation {
    pub fn window_mass(&self) -> f64 {
        self.counts.iter().sum::<u64>() as f64 / self.steps as f64
    }
}

type Row = Vec<(f64, i32, i32, usize)>;

fn cumulative_rows(blocks: &BlockSet) -> Vec<Vec<Row>> {
    Region::ALL
        .iter()
        .map(|&r| {
            let k = blocks.kernel(r);
            (0..blocks.s0())
                .map(|j| {
                    let mut acc = 0.0;
                    let mut row = Vec::new();
                    for (i1, i2) in jumps() {
                        for jp in 0..blocks.s0() {
                            let p = k.block(i1, i2)[(j, jp)];
                            if p > 0.0 {
                                acc += p;
                                row.push((acc, i1, i2, jp));
                            }
                        }
                    }
                    row
                })
                .collect()
        })
        .collect()
}

/// Simulate `steps` transitions from `(0, 0, 0)`, counting visits inside `[0, window]^2`.
pub fn simulate(blocks: &BlockSet, steps: u64, seed: u64, window: usize) -> Simulation {
    let rows = cumulative_rows(blocks);
    let s0 = blocks.s0();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; (window + 1) * (window + 1) * s0];
    let (mut x1, mut x2, mut j) = (0usize, 0usize, 0usize);
    let (mut sum1, mut sum2) = (0i64, 0i64);
    let batch_len = (steps / BATCHES).max(1);
    let mut batch_hits = 0u64;
    let mut batch_fracs = Vec::new();
    for step in 0..steps {
        let region = Region::of_point(x1, x2);
        let row = &rows[Region::ALL.iter().position(|&r| r == region).expect("region")][j];
        let u: f64 = rng.random::<f64>() * row.last().map_or(1.0, |r| r.0);
        let &(_, i1, i2, jp) = row.iter().find(|r| u < r.0).unwrap_or_else(|| row.last().expect("nonempty row"));
        x1 = (x1 as i64 + i1 as i64) as usize;
        x2 = (x2 as i64 + i2 as i64) as usize;
        j = jp;
        sum1 += i1 as i64;
        sum2 += i2 as i64;
        if x1 <= window && x2 <= window {
            counts[(x1 * (window + 1) + x2) * s0 + j] += 1;
            batch_hits += 1;
        }
        if (step + 1) % batch_len == 0 {
            batch_fracs.push(batch_hits as f64 / batch_len as f64);
            batch_hits = 0;
        }
    }
    let b = batch_fracs.len() as f64;
    let mean = batch_fracs.iter().sum::<f64>() / b;
    let var = batch_fracs.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (b - 1.0).max(1.0);
    Simulation {
        steps,
        seed,
        window,
        counts,
        mean_jump: (sum1 as f64 / steps as f64, sum2 as f64 / steps as f64),
        window_mass_se: (var / b).sqrt(),
        final_state: (x1, x2, j),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_path() {
        let b = BlockSet::load_json(include_str!("../../fixtures/m1.json")).unwrap();
        let a = simulate(&b, 20_000, 7, 5);
        let c = simulate(&b, 20_000, 7, 5);
        assert_eq!(a, c);
        assert_ne!(a.counts, simulate(&b, 20_000, 8, 5).counts);
    }
}
