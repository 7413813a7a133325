//! Preconditioned conjugate gradients and restarted flexible GMRES.

use crate::error::{Error, Result};
use crate::scalar::{axpy, dot, norm2, Real};

use super::sparse::CsrMatrix;

/// A square linear map acting on coefficient vectors.
pub trait LinearOperator<T> {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[T], y: &mut [T]);
}

impl<T: Real> LinearOperator<T> for CsrMatrix<T> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        self.spmv_into(x, y);
    }
}

/// Approximate inverse applied to a residual.
pub trait Preconditioner<T> {
    fn apply(&self, r: &[T], z: &mut [T]) -> Result<()>;
}

pub struct IdentityPreconditioner;

impl<T: Real> Preconditioner<T> for IdentityPreconditioner {
    fn apply(&self, r: &[T], z: &mut [T]) -> Result<()> {
        z.copy_from_slice(r);
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Jacobi<T> {
    inv_diag: Vec<T>,
}

impl<T: Real> Jacobi<T> {
    pub fn new(a: &CsrMatrix<T>) -> Self {
        Self::from_diagonal(&a.diagonal())
    }

    /// Zero diagonal entries fall back to the identity.
    pub fn from_diagonal(diag: &[T]) -> Self {
        let inv_diag = diag
            .iter()
            .map(|&d| if d != T::zero() { T::one() / d } else { T::one() })
            .collect();
        Self { inv_diag }
    }
}

impl<T: Real> Preconditioner<T> for Jacobi<T> {
    fn apply(&self, r: &[T], z: &mut [T]) -> Result<()> {
        for ((zi, &ri), &d) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * d;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KrylovMethod {
    Cg,
    Gmres,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    pub rel_tol: T,
    /// Defaults to `10 * n` when `None`.
    pub max_iters: Option<usize>,
    pub method: KrylovMethod,
    pub restart: usize,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            rel_tol: T::lit(T::DEFAULT_TOL),
            max_iters: None,
            method: KrylovMethod::Gmres,
            restart: 50,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn with_tol(rel_tol: T) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    pub fn cg(rel_tol: T) -> Self {
        Self {
            rel_tol,
            method: KrylovMethod::Cg,
            ..Self::default()
        }
    }

    fn iteration_cap(&self, n: usize) -> usize {
        self.max_iters.unwrap_or(10 * n.max(1))
    }

    fn validate(&self) -> Result<()> {
        if !(self.rel_tol > T::zero()) {
            return Err(Error::invalid("solver rel_tol must be positive"));
        }
        if self.restart == 0 {
            return Err(Error::invalid("GMRES restart length must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats<T> {
    pub iterations: usize,
    pub rel_residual: T,
}

fn check_dims<T>(op: &dyn LinearOperator<T>, b: &[T], x: &[T]) -> Result<()> {
    let n = op.dim();
    for len in [b.len(), x.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: len,
            });
        }
    }
    Ok(())
}

fn residual<T: Real>(op: &dyn LinearOperator<T>, b: &[T], x: &[T], r: &mut [T]) {
    op.apply(x, r);
    for (ri, &bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

/// Preconditioned conjugate gradients; `x` holds the initial guess on entry.
pub fn pcg<T: Real>(
    op: &dyn LinearOperator<T>,
    pc: &dyn Preconditioner<T>,
    b: &[T],
    x: &mut [T],
    cfg: &SolverConfig<T>,
) -> Result<SolveStats<T>> {
    cfg.validate()?;
    check_dims(op, b, x)?;
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(SolveStats {
            iterations: 0,
            rel_residual: T::zero(),
        });
    }
    let target = cfg.rel_tol * bnorm;
    let cap = cfg.iteration_cap(n);
    let mut r = vec![T::zero(); n];
    residual(op, b, x, &mut r);
    let mut z = vec![T::zero(); n];
    let mut q = vec![T::zero(); n];
    let mut rnorm = norm2(&r);
    let mut it = 0;
    // Restart the recurrence a few times so the reported residual is the true one.
    for _attempt in 0..4 {
        if rnorm <= target {
            break;
        }
        pc.apply(&r, &mut z)?;
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while it < cap {
            op.apply(&p, &mut q);
            let pq = dot(&p, &q);
            if !(pq > T::zero()) {
                return Err(Error::Convergence {
                    method: "CG",
                    iterations: it,
                    residual: (rnorm / bnorm).to_f64_lossy(),
                });
            }
            let alpha = rz / pq;
            axpy(alpha, &p, x);
            axpy(-alpha, &q, &mut r);
            it += 1;
            rnorm = norm2(&r);
            if rnorm <= target {
                break;
            }
            pc.apply(&r, &mut z)?;
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, &zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        residual(op, b, x, &mut r);
        rnorm = norm2(&r);
        if it >= cap {
            break;
        }
    }
    if rnorm <= target {
        Ok(SolveStats {
            iterations: it,
            rel_residual: rnorm / bnorm,
        })
    } else {
        Err(Error::Convergence {
            method: "CG",
            iterations: it,
            residual: (rnorm / bnorm).to_f64_lossy(),
        })
    }
}

/// Restarted flexible GMRES with right preconditioning.
///
/// `project`, when given, is applied to every preconditioned direction so that
/// iterates stay inside a chosen complement (e.g. zero-mean pressures).
pub fn fgmres<T: Real>(
    op: &dyn LinearOperator<T>,
    pc: &dyn Preconditioner<T>,
    b: &[T],
    x: &mut [T],
    cfg: &SolverConfig<T>,
    project: Option<&dyn Fn(&mut [T])>,
) -> Result<SolveStats<T>> {
    cfg.validate()?;
    check_dims(op, b, x)?;
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(SolveStats {
            iterations: 0,
            rel_residual: T::zero(),
        });
    }
    let target = cfg.rel_tol * bnorm;
    let cap = cfg.iteration_cap(n);
    let m = cfg.restart.min(n.max(1));
    let mut r = vec![T::zero(); n];
    residual(op, b, x, &mut r);
    let mut rnorm = norm2(&r);
    let mut it = 0usize;
    let mut stalled_cycles = 0;

    let mut basis: Vec<Vec<T>> = Vec::with_capacity(m + 1);
    let mut dirs: Vec<Vec<T>> = Vec::with_capacity(m);
    let mut h = vec![vec![T::zero(); m]; m + 1];
    let mut cs = vec![T::zero(); m];
    let mut sn = vec![T::zero(); m];
    let mut g = vec![T::zero(); m + 1];
    let mut w = vec![T::zero(); n];

    while rnorm > target && it < cap {
        let cycle_start = rnorm;
        basis.clear();
        dirs.clear();
        g.iter_mut().for_each(|v| *v = T::zero());
        g[0] = rnorm;
        basis.push(r.iter().map(|&v| v / rnorm).collect());
        let mut k = 0;
        while k < m && it < cap {
            let mut z = vec![T::zero(); n];
            pc.apply(&basis[k], &mut z)?;
            if let Some(proj) = project {
                proj(&mut z);
            }
            op.apply(&z, &mut w);
            // Modified Gram-Schmidt with one reorthogonalisation pass.
            for col in h.iter_mut() {
                col[k] = T::zero();
            }
            for _pass in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let hij = dot(&w, v);
                    h[i][k] += hij;
                    axpy(-hij, v, &mut w);
                }
            }
            let wnorm = norm2(&w);
            h[k + 1][k] = wnorm;
            dirs.push(z);
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if denom == T::zero() {
                cs[k] = T::one();
                sn[k] = T::zero();
            } else {
                cs[k] = h[k][k] / denom;
                sn[k] = h[k + 1][k] / denom;
            }
            h[k][k] = cs[k] * h[k][k] + sn[k] * h[k + 1][k];
            h[k + 1][k] = T::zero();
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k] * g[k];
            it += 1;
            k += 1;
            let breakdown = wnorm <= T::epsilon() * cycle_start;
            if g[k].abs() <= target || breakdown {
                break;
            }
            basis.push(w.iter().map(|&v| v / wnorm).collect());
        }
        // Back substitution for the least-squares coefficients.
        let mut y = vec![T::zero(); k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[i][j] * y[j];
            }
            y[i] = if h[i][i] != T::zero() { s / h[i][i] } else { T::zero() };
        }
        for (yi, z) in y.iter().zip(&dirs) {
            axpy(*yi, z, x);
        }
        residual(op, b, x, &mut r);
        rnorm = norm2(&r);
        if rnorm > T::lit(0.999) * cycle_start {
            stalled_cycles += 1;
            if stalled_cycles >= 3 {
                break;
            }
        } else {
            stalled_cycles = 0;
        }
    }
    if rnorm <= target {
        Ok(SolveStats {
            iterations: it,
            rel_residual: rnorm / bnorm,
        })
    } else {
        Err(Error::Convergence {
            method: "GMRES",
            iterations: it,
            residual: (rnorm / bnorm).to_f64_lossy(),
        })
    }
}

/// Solves an SPD system with Jacobi-preconditioned CG.
pub fn solve_spd<T: Real>(a: &CsrMatrix<T>, b: &[T], cfg: &SolverConfig<T>) -> Result<Vec<T>> {
    let mut x = vec![T::zero(); a.ncols()];
    pcg(a, &Jacobi::new(a), b, &mut x, cfg)?;
    Ok(x)
}

/// An operator that knows how to precondition itself for GMRES.
pub trait GeneralSystem<T: Real>: LinearOperator<T> {
    fn preconditioner(&self, cfg: &SolverConfig<T>) -> Result<Box<dyn Preconditioner<T> + '_>>;

    /// Removes nullspace components from a right-hand side. No-op by default.
    fn project_rhs(&self, _b: &mut [T]) {}

    /// Removes nullspace components from an iterate. `None` when there is none.
    fn iterate_projection(&self) -> Option<Box<dyn Fn(&mut [T]) + '_>> {
        None
    }
}

impl<T: Real> GeneralSystem<T> for CsrMatrix<T> {
    fn preconditioner(&self, _cfg: &SolverConfig<T>) -> Result<Box<dyn Preconditioner<T> + '_>> {
        Ok(Box::new(Jacobi::new(self)))
    }
}

/// Solves a general (nonsymmetric or indefinite) system by preconditioned,
/// restarted GMRES, or by CG when the configuration asks for it.
pub fn solve_general<T: Real, S: GeneralSystem<T>>(
    sys: &S,
    b: &[T],
    cfg: &SolverConfig<T>,
) -> Result<Vec<T>> {
    let mut rhs = b.to_vec();
    sys.project_rhs(&mut rhs);
    let mut x = vec![T::zero(); sys.dim()];
    let pc = sys.preconditioner(cfg)?;
    match cfg.method {
        KrylovMethod::Cg => {
            pcg(sys, pc.as_ref(), &rhs, &mut x, cfg)?;
        }
        KrylovMethod::Gmres => {
            let proj = sys.iterate_projection();
            fgmres(sys, pc.as_ref(), &rhs, &mut x, cfg, proj.as_deref())?;
        }
    }
    if let Some(proj) = sys.iterate_projection() {
        proj(&mut x);
    }
    Ok(x)
}
