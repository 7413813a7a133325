//! Small dense LU factorisation, used for reference-element inversion,
//! per-cell mass blocks and test oracles.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major LU factorisation with partial pivoting.
#[derive(Debug, Clone)]
pub struct DenseLu<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Real> DenseLu<T> {
    pub fn new(a: &[Vec<T>]) -> Result<Self> {
        let n = a.len();
        let mut lu = Vec::with_capacity(n * n);
        for row in a {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: row.len(),
                });
            }
            lu.extend_from_slice(row);
        }
        let scale = lu.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -T::one()), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            if !(pmax > scale * T::epsilon() * T::from_usize_lossy(n)) {
                return Err(Error::invalid("singular matrix in dense LU"));
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                for j in k + 1..n {
                    let u = lu[k * n + j];
                    lu[i * n + j] -= f * u;
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                let l = self.lu[i * n + j];
                x[i] = x[i] - l * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let u = self.lu[i * n + j];
                x[i] = x[i] - u * x[j];
            }
            x[i] = x[i] / self.lu[i * n + i];
        }
        x
    }

    pub fn inverse(&self) -> Vec<Vec<T>> {
        let n = self.n;
        let mut inv = vec![vec![T::zero(); n]; n];
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[i][j] = col[i];
            }
        }
        inv
    }
}

/// Solves a dense system, for oracles and tiny blocks.
pub fn dense_solve<T: Real>(a: &[Vec<T>], b: &[T]) -> Result<Vec<T>> {
    Ok(DenseLu::new(a)?.solve(b))
}

pub fn dense_matvec<T: Real>(a: &[Vec<T>], x: &[T]) -> Vec<T> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(&aij, &xj)| aij * xj).sum())
        .collect()
}
