//! Complex banded LU with partial pivoting (LAPACK `gbtf2` layout).

use num_complex::Complex64;
use num_traits::Zero;

use crate::error::{Error, Result};

/// Banded storage: entry `(i, j)` lives at `j * ldab + kv + i - j` where
/// `kv = kl + ku` leaves room for the fill-in produced by row swaps.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ab: Vec<Complex64>,
    ipiv: Vec<usize>,
}

impl BandLu {
    /// Factors the `n x n` matrix whose nonzero entries `(i, j)` satisfy
    /// `j - kl <= i <= j + ku`, read through `entry`.
    pub fn factor<F>(n: usize, kl: usize, ku: usize, entry: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> Complex64,
    {
        let ldab = 2 * kl + ku + 1;
        let kv = kl + ku;
        let mut lu = Self { n, kl, ku, ab: vec![Complex64::zero(); ldab * n], ipiv: vec![0; n] };
        for j in 0..n {
            let lo = j.saturating_sub(ku);
            let hi = (j + kl).min(n - 1);
            for i in lo..=hi {
                let k = lu.idx(i, j);
                lu.ab[k] = entry(i, j);
            }
        }
        let mut ju = 0;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut p = j;
            let mut best = lu.at(j, j).norm();
            for i in j + 1..=j + km {
                let a = lu.at(i, j).norm();
                if a > best {
                    best = a;
                    p = i;
                }
            }
            lu.ipiv[j] = p;
            if best == 0.0 {
                return Err(Error::Solve { residual: f64::INFINITY });
            }
            ju = ju.max((p + ku).min(n - 1));
            if p != j {
                for c in j..=ju {
                    let (a, b) = (lu.idx(j, c), lu.idx(p, c));
                    lu.ab.swap(a, b);
                }
            }
            let pivot = lu.at(j, j);
            for i in j + 1..=j + km {
                let k = lu.idx(i, j);
                lu.ab[k] /= pivot;
            }
            for c in j + 1..=ju {
                let ujc = lu.at(j, c);
                if ujc.is_zero() {
                    continue;
                }
                for i in j + 1..=j + km {
                    let lij = lu.at(i, j);
                    let k = lu.idx(i, c);
                    lu.ab[k] -= lij * ujc;
                }
            }
        }
        debug_assert!(kv >= ku);
        Ok(lu)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let ldab = 2 * self.kl + self.ku + 1;
        j * ldab + self.kl + self.ku + i - j
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> Complex64 {
        self.ab[self.idx(i, j)]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Overwrites `b` with the solution of `A x = b`.
    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        let kv = self.kl + self.ku;
        let ldab = 2 * self.kl + self.ku + 1;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj.is_zero() {
                continue;
            }
            let m = self.kl.min(n - 1 - j);
            // column j below the diagonal holds the multipliers
            let col = &self.ab[j * ldab + kv + 1..j * ldab + kv + 1 + m];
            for (bi, l) in b[j + 1..j + 1 + m].iter_mut().zip(col) {
                *bi -= l * bj;
            }
        }
        for j in (0..n).rev() {
            let base = j * ldab;
            b[j] /= self.ab[base + kv];
            let bj = b[j];
            let top = j.saturating_sub(kv);
            let col = &self.ab[base + kv - (j - top)..base + kv];
            for (bi, u) in b[top..j].iter_mut().zip(col) {
                *bi -= u * bj;
            }
        }
    }
}
