//! Block-tridiagonal systems with dense complex blocks.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// `lower[j] x[j-1] + diag[j] x[j] + upper[j] x[j+1] = b[j]` for `j = 0..n`.
/// `lower[0]` and `upper[n-1]` are ignored.
#[derive(Debug, Clone)]
pub struct BlockTridiag {
    pub lower: Vec<CMat>,
    pub diag: Vec<CMat>,
    pub upper: Vec<CMat>,
}

impl BlockTridiag {
    pub fn zeros(levels: usize, block: usize) -> Self {
        let z = CMat::zeros(block, block);
        Self {
            lower: vec![z.clone(); levels],
            diag: vec![z.clone(); levels],
            upper: vec![z; levels],
        }
    }

    pub fn levels(&self) -> usize {
        self.diag.len()
    }

    pub fn block(&self) -> usize {
        self.diag.first().map_or(0, |d| d.nrows())
    }

    pub fn apply(&self, x: &[CVec]) -> Vec<CVec> {
        let n = self.levels();
        (0..n)
            .map(|j| {
                let mut y = &self.diag[j] * &x[j];
                if j > 0 {
                    y += &self.lower[j] * &x[j - 1];
                }
                if j + 1 < n {
                    y += &self.upper[j] * &x[j + 1];
                }
                y
            })
            .collect()
    }

    /// Block Thomas elimination without inter-block pivoting.
    pub fn factor(&self) -> Result<BlockLu> {
        let n = self.levels();
        let mut pivots: Vec<LU<Complex64, Dyn, Dyn>> = Vec::with_capacity(n);
        let mut mult = Vec::with_capacity(n);
        mult.push(CMat::zeros(0, 0));
        let mut d = self.diag[0].clone();
        for j in 0..n {
            if j > 0 {
                let inv = pivots[j - 1].try_inverse().ok_or_else(|| {
                    Error::Solver(format!("singular pivot block at level {}", j - 1))
                })?;
                let m = &self.lower[j] * inv;
                d = &self.diag[j] - &m * &self.upper[j - 1];
                mult.push(m);
            }
            let lu = d.clone().lu();
            if !lu.is_invertible() {
                return Err(Error::Solver(format!("singular pivot block at level {j}")));
            }
            pivots.push(lu);
        }
        Ok(BlockLu {
            pivots,
            mult,
            upper: self.upper.clone(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct BlockLu {
    pivots: Vec<LU<Complex64, Dyn, Dyn>>,
    mult: Vec<CMat>,
    upper: Vec<CMat>,
}

impl BlockLu {
    pub fn solve(&self, rhs: &[CVec]) -> Vec<CVec> {
        let n = self.pivots.len();
        let mut y: Vec<CVec> = rhs.to_vec();
        for j in 1..n {
            let t = &self.mult[j] * &y[j - 1];
            y[j] -= t;
        }
        let mut x: Vec<CVec> = vec![CVec::zeros(0); n];
        for j in (0..n).rev() {
            let mut r = y[j].clone();
            if j + 1 < n {
                r -= &self.upper[j] * &x[j + 1];
            }
            x[j] = self.pivots[j]
                .solve(&r)
                .expect("pivot blocks checked invertible");
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_system(levels: usize, k: usize, seed: u64) -> BlockTridiag {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = || Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let mut sys = BlockTridiag::zeros(levels, k);
        for j in 0..levels {
            sys.lower[j] = CMat::from_fn(k, k, |_, _| c());
            sys.upper[j] = CMat::from_fn(k, k, |_, _| c());
            sys.diag[j] = CMat::from_fn(k, k, |r, s| {
                if r == s {
                    Complex64::new(4.0 * k as f64, 0.0)
                } else {
                    c()
                }
            });
        }
        sys
    }

    #[test]
    fn solve_inverts_apply() {
        let sys = random_system(9, 5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<CVec> = (0..9)
            .map(|_| CVec::from_fn(5, |_, _| Complex64::new(rng.random_range(-1.0..1.0), 0.3)))
            .collect();
        let b = sys.apply(&x);
        let got = sys.factor().unwrap().solve(&b);
        for (g, e) in got.iter().zip(&x) {
            assert!((g - e).norm() < 1e-12);
        }
    }

    #[test]
    fn matches_dense_solve() {
        let (n, k) = (6, 3);
        let sys = random_system(n, k, 7);
        let mut dense = CMat::zeros(n * k, n * k);
        for j in 0..n {
            dense
                .view_mut((j * k, j * k), (k, k))
                .copy_from(&sys.diag[j]);
            if j > 0 {
                dense
                    .view_mut((j * k, (j - 1) * k), (k, k))
                    .copy_from(&sys.lower[j]);
            }
            if j + 1 < n {
                dense
                    .view_mut((j * k, (j + 1) * k), (k, k))
                    .copy_from(&sys.upper[j]);
            }
        }
        let b = CVec::from_fn(n * k, |i, _| Complex64::new(i as f64, 1.0));
        let want = dense.lu().solve(&b).unwrap();
        let rhs: Vec<CVec> = (0..n).map(|j| b.rows(j * k, k).into_owned()).collect();
        let got = sys.factor().unwrap().solve(&rhs);
        for j in 0..n {
            assert!((&got[j] - want.rows(j * k, k)).norm() < 1e-12);
        }
    }

    #[test]
    fn singular_block_is_reported() {
        let sys = BlockTridiag::zeros(3, 2);
        assert!(matches!(sys.factor(), Err(Error::Solver(_))));
    }
}
