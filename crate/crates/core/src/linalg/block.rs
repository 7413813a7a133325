//! Block-diagonal inverses and 2x2 block (velocity, pressure) systems.

use crate::error::{Error, Result};
use crate::scalar::{dot, Real};

use super::dense::DenseLu;
use super::krylov::{
    fgmres, pcg, GeneralSystem, Jacobi, LinearOperator, Preconditioner, SolverConfig,
};
use super::sparse::CsrMatrix;

/// Exact inverse of a block-diagonal matrix whose blocks are given as index
/// groups (one group per cell for DG mass matrices).
#[derive(Debug, Clone)]
pub struct BlockDiagonal<T> {
    dim: usize,
    blocks: Vec<(Vec<usize>, Vec<Vec<T>>)>,
}

impl<T: Real> BlockDiagonal<T> {
    /// Inverts the blocks of `a` selected by `groups`. Entries of `a` coupling
    /// different groups are ignored.
    pub fn inverse_of(a: &CsrMatrix<T>, groups: &[Vec<usize>]) -> Result<Self> {
        let mut blocks = Vec::with_capacity(groups.len());
        for g in groups {
            let local: Vec<Vec<T>> = g
                .iter()
                .map(|&i| g.iter().map(|&j| a.get(i, j)).collect())
                .collect();
            let inv = DenseLu::new(&local)?.inverse();
            blocks.push((g.clone(), inv));
        }
        Ok(Self {
            dim: a.nrows(),
            blocks,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.dim];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[T], y: &mut [T]) {
        for (idx, inv) in &self.blocks {
            for (r, &i) in idx.iter().enumerate() {
                y[i] = idx.iter().zip(&inv[r]).map(|(&j, &v)| v * x[j]).sum();
            }
        }
    }

    pub fn to_csr(&self) -> CsrMatrix<T> {
        let mut b = super::TripletBuilder::new(self.dim, self.dim);
        for (idx, inv) in &self.blocks {
            for (r, &i) in idx.iter().enumerate() {
                for (c, &j) in idx.iter().enumerate() {
                    b.push(i, j, inv[r][c]);
                }
            }
        }
        b.build()
    }
}

impl<T: Real> Preconditioner<T> for BlockDiagonal<T> {
    fn apply(&self, r: &[T], z: &mut [T]) -> Result<()> {
        self.apply_into(r, z);
        Ok(())
    }
}

/// Nullspace of the pressure block spanned by `k`, with `mk = M k` for the
/// pressure mass matrix `M`.
#[derive(Debug, Clone)]
pub struct PressureNullspace<T> {
    k: Vec<T>,
    mk: Vec<T>,
    kmk: T,
}

impl<T: Real> PressureNullspace<T> {
    pub fn new(k: Vec<T>, mass: &CsrMatrix<T>) -> Self {
        let mk = mass.spmv(&k).expect("nullspace vector matches mass matrix");
        let kmk = dot(&k, &mk);
        Self { k, mk, kmk }
    }

    /// Makes a pressure iterate mass-orthogonal to the nullspace (zero mean).
    pub fn project_primal(&self, p: &mut [T]) {
        let c = dot(&self.mk, p) / self.kmk;
        for (pi, &ki) in p.iter_mut().zip(&self.k) {
            *pi -= c * ki;
        }
    }

    /// Removes the component of a dual (moment) vector that pairs with the nullspace.
    pub fn project_dual(&self, r: &mut [T]) {
        let c = dot(&self.k, r) / self.kmk;
        for (ri, &mi) in r.iter_mut().zip(&self.mk) {
            *ri -= c * mi;
        }
    }

    pub fn vector(&self) -> &[T] {
        &self.k
    }
}

/// The operator `[[a, bt], [b, c]]` acting on stacked `(velocity, pressure)`.
#[derive(Debug, Clone)]
pub struct BlockSystem<T> {
    pub a: CsrMatrix<T>,
    pub bt: CsrMatrix<T>,
    pub b: CsrMatrix<T>,
    pub c: Option<CsrMatrix<T>>,
    pub nullspace: Option<PressureNullspace<T>>,
}

impl<T: Real> BlockSystem<T> {
    pub fn new(
        a: CsrMatrix<T>,
        bt: CsrMatrix<T>,
        b: CsrMatrix<T>,
        c: Option<CsrMatrix<T>>,
    ) -> Result<Self> {
        let (nu, np) = (a.nrows(), b.nrows());
        let dims_ok = a.ncols() == nu
            && bt.nrows() == nu
            && bt.ncols() == np
            && b.ncols() == nu
            && c.as_ref().map_or(true, |c| c.nrows() == np && c.ncols() == np);
        if !dims_ok {
            return Err(Error::invalid("inconsistent block dimensions"));
        }
        Ok(Self {
            a,
            bt,
            b,
            c,
            nullspace: None,
        })
    }

    pub fn with_nullspace(mut self, ns: PressureNullspace<T>) -> Self {
        self.nullspace = Some(ns);
        self
    }

    pub fn velocity_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn pressure_dim(&self) -> usize {
        self.b.nrows()
    }

    /// Dense copy of the whole operator, for small oracles.
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let (nu, np) = (self.velocity_dim(), self.pressure_dim());
        let mut out = vec![vec![T::zero(); nu + np]; nu + np];
        for r in 0..nu {
            for (c, v) in self.a.row(r) {
                out[r][c] = v;
            }
            for (c, v) in self.bt.row(r) {
                out[r][nu + c] = v;
            }
        }
        for r in 0..np {
            for (c, v) in self.b.row(r) {
                out[nu + r][c] = v;
            }
            if let Some(cm) = &self.c {
                for (c, v) in cm.row(r) {
                    out[nu + r][nu + c] = v;
                }
            }
        }
        out
    }
}

impl<T: Real> LinearOperator<T> for BlockSystem<T> {
    fn dim(&self) -> usize {
        self.velocity_dim() + self.pressure_dim()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        let nu = self.velocity_dim();
        let (xu, xp) = x.split_at(nu);
        let (yu, yp) = y.split_at_mut(nu);
        self.a.spmv_into(xu, yu);
        let tmp = self.bt.spmv(xp).expect("block dims checked");
        for (a, b) in yu.iter_mut().zip(tmp) {
            *a += b;
        }
        self.b.spmv_into(xu, yp);
        if let Some(c) = &self.c {
            let tmp = c.spmv(xp).expect("block dims checked");
            for (a, b) in yp.iter_mut().zip(tmp) {
                *a += b;
            }
        }
    }
}

/// `diag(diag(a)^-1, S^-1)` with `S = c - b diag(a)^-1 bt` solved iteratively.
struct SchurBlockPreconditioner<'a, T> {
    nu: usize,
    a_jacobi: Jacobi<T>,
    schur: CsrMatrix<T>,
    schur_jacobi: Jacobi<T>,
    symmetric: bool,
    inner: SolverConfig<T>,
    nullspace: Option<&'a PressureNullspace<T>>,
}

impl<'a, T: Real> Preconditioner<T> for SchurBlockPreconditioner<'a, T> {
    fn apply(&self, r: &[T], z: &mut [T]) -> Result<()> {
        let (ru, rp) = r.split_at(self.nu);
        let (zu, zp) = z.split_at_mut(self.nu);
        self.a_jacobi.apply(ru, zu)?;
        let mut rhs = rp.to_vec();
        if let Some(ns) = self.nullspace {
            ns.project_dual(&mut rhs);
        }
        zp.iter_mut().for_each(|v| *v = T::zero());
        if self.symmetric {
            pcg(&self.schur, &self.schur_jacobi, &rhs, zp, &self.inner)?;
        } else {
            fgmres(&self.schur, &self.schur_jacobi, &rhs, zp, &self.inner, None)?;
        }
        if let Some(ns) = self.nullspace {
            ns.project_primal(zp);
        }
        Ok(())
    }
}

impl<T: Real> GeneralSystem<T> for BlockSystem<T> {
    fn preconditioner(&self, cfg: &SolverConfig<T>) -> Result<Box<dyn Preconditioner<T> + '_>> {
        let diag = self.a.diagonal();
        let inv: Vec<T> = diag
            .iter()
            .map(|&d| if d != T::zero() { T::one() / d } else { T::one() })
            .collect();
        // S = c - b D^-1 bt
        let scaled_bt = self.bt.scale_rows(&inv);
        let bdb = self.b.matmul(&scaled_bt)?;
        let schur = match &self.c {
            Some(c) => c.linear_combination(T::one(), &bdb, -T::one())?,
            None => bdb.scaled(-T::one()),
        };
        let scale = schur.max_abs().max(T::min_positive_value());
        let symmetric = schur.asymmetry() <= T::lit(1e-12) * scale;
        let inner = SolverConfig {
            rel_tol: T::lit(1e-8).max(cfg.rel_tol),
            max_iters: Some(20 * schur.nrows().max(10)),
            ..SolverConfig::default()
        };
        Ok(Box::new(SchurBlockPreconditioner {
            nu: self.velocity_dim(),
            a_jacobi: Jacobi::from_diagonal(&diag),
            schur_jacobi: Jacobi::new(&schur),
            schur,
            symmetric,
            inner,
            nullspace: self.nullspace.as_ref(),
        }))
    }

    fn project_rhs(&self, b: &mut [T]) {
        if let Some(ns) = &self.nullspace {
            ns.project_dual(&mut b[self.velocity_dim()..]);
        }
    }

    fn iterate_projection(&self) -> Option<Box<dyn Fn(&mut [T]) + '_>> {
        let nu = self.velocity_dim();
        self.nullspace
            .as_ref()
            .map(|ns| Box::new(move |x: &mut [T]| ns.project_primal(&mut x[nu..])) as Box<dyn Fn(&mut [T])>)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense::dense_solve;
    use crate::linalg::krylov::solve_general;
    use crate::linalg::TripletBuilder;

    fn laplacian_like(n: usize) -> CsrMatrix<f64> {
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 2.0 + 0.05 * i as f64);
            if i + 1 < n {
                b.push(i, i + 1, 0.3);
                b.push(i + 1, i, 0.3);
            }
        }
        b.build()
    }

    #[test]
    fn block_diagonal_inverse() {
        let a = CsrMatrix::from_dense(&[
            vec![2.0, 1.0, 0.0],
            vec![1.0, 3.0, 0.0],
            vec![0.0, 0.0, 4.0],
        ]);
        let bd = BlockDiagonal::inverse_of(&a, &[vec![0, 1], vec![2]]).unwrap();
        let x = [1.0f64, 2.0, 3.0];
        let y = bd.apply(&a.spmv(&x).unwrap());
        for i in 0..3 {
            assert!((y[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn saddle_point_matches_dense() {
        let nu = 8;
        let np = 3;
        let a = laplacian_like(nu);
        let mut bb = TripletBuilder::new(np, nu);
        for i in 0..np {
            bb.push(i, 2 * i, 1.0);
            bb.push(i, 2 * i + 1, -0.5);
            bb.push(i, (2 * i + 5) % nu, 0.25);
        }
        let b = bb.build();
        let bt = b.transpose().scaled(-1.0);
        let sys = BlockSystem::new(a, bt, b, None).unwrap();
        let rhs: Vec<f64> = (0..nu + np).map(|i| (i as f64 + 1.0).sqrt()).collect();
        let x = solve_general(&sys, &rhs, &SolverConfig::with_tol(1e-12)).unwrap();
        let dense = dense_solve(&sys.to_dense(), &rhs).unwrap();
        for i in 0..nu + np {
            assert!((x[i] - dense[i]).abs() < 1e-9, "{i}: {} vs {}", x[i], dense[i]);
        }
    }
}
