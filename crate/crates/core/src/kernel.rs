//! A skip-free family of nonnegative blocks `A_{i,j}`, `i, j ∈ {-1, 0, 1}`.

use crate::linalg::Mat;

#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    dim: usize,
    blocks: [Mat; 9],
}

fn slot(i: i32, j: i32) -> usize {
    assert!((-1..=1).contains(&i) && (-1..=1).contains(&j), "jump ({i},{j}) out of range");
    ((i + 1) * 3 + (j + 1)) as usize
}

/// All nine jumps in row-major order of `(i, j)`.
pub fn jumps() -> impl Iterator<Item = (i32, i32)> {
    (-1..=1).flat_map(|i| (-1..=1).map(move |j| (i, j)))
}

impl Kernel {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, blocks: std::array::from_fn(|_| Mat::zeros(dim, dim)) }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(i32, i32) -> Mat) -> Self {
        let mut k = Self::zeros(dim);
        for (i, j) in jumps() {
            let b = f(i, j);
            assert_eq!(b.shape(), (dim, dim), "block ({i},{j}) has wrong shape");
            k.blocks[slot(i, j)] = b;
        }
        k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block(&self, i: i32, j: i32) -> &Mat {
        &self.blocks[slot(i, j)]
    }

    pub fn block_mut(&mut self, i: i32, j: i32) -> &mut Mat {
        &mut self.blocks[slot(i, j)]
    }

    /// `sum_{i,j} f(i,j) z^i w^j A_{i,j}`.
    pub fn weighted(&self, z: f64, w: f64, f: impl Fn(i32, i32) -> f64) -> Mat {
        let mut out = Mat::zeros(self.dim, self.dim);
        for (i, j) in jumps() {
            let c = f(i, j);
            if c != 0.0 {
                out += self.block(i, j) * (c * z.powi(i) * w.powi(j));
            }
        }
        out
    }

    /// `A_{*,*}(z, w)`.
    pub fn eval(&self, z: f64, w: f64) -> Mat {
        self.weighted(z, w, |_, _| 1.0)
    }

    pub fn eval_log(&self, t1: f64, t2: f64) -> Mat {
        self.eval(t1.exp(), t2.exp())
    }

    pub fn total(&self) -> Mat {
        self.eval(1.0, 1.0)
    }

    /// Blocks grouped by the second index: `(A_{*,-1}(z), A_{*,0}(z), A_{*,1}(z))`.
    pub fn level_triplet(&self, z: f64) -> (Mat, Mat, Mat) {
        let col = |j: i32| {
            let mut m = Mat::zeros(self.dim, self.dim);
            for i in -1..=1 {
                m += self.block(i, j) * z.powi(i);
            }
            m
        };
        (col(-1), col(0), col(1))
    }

    /// `B_{i,j} = A_{j,i}`.
    pub fn swap_axes(&self) -> Kernel {
        Kernel::from_fn(self.dim, |i, j| self.block(j, i).clone())
    }

    /// `B_{i,j} = A_{i,-j}`: the family seen with the level direction reversed.
    pub fn reverse_second(&self) -> Kernel {
        Kernel::from_fn(self.dim, |i, j| self.block(i, -j).clone())
    }

    /// Conjugate every block by a phase permutation: `B[p[a]][p[b]] = A[a][b]`.
    pub fn permute(&self, perm: &[usize]) -> Kernel {
        Kernel::from_fn(self.dim, |i, j| {
            let a = self.block(i, j);
            let mut b = Mat::zeros(self.dim, self.dim);
            for r in 0..self.dim {
                for c in 0..self.dim {
                    b[(perm[r], perm[c])] = a[(r, c)];
                }
            }
            b
        })
    }
}
