//! Sparse linear algebra: CSR storage, Krylov solvers and block systems.

pub mod block;
pub mod dense;
pub mod krylov;
pub mod sparse;

pub use block::{BlockDiagonal, BlockSystem, PressureNullspace};
pub use dense::{dense_solve, DenseLu};
pub use krylov::{
    fgmres, pcg, solve_general, solve_spd, GeneralSystem, IdentityPreconditioner, Jacobi,
    KrylovMethod, LinearOperator, Preconditioner, SolveStats, SolverConfig,
};
pub use sparse::{CsrMatrix, TripletBuilder};

/// Free-function sparse product, checked for dimensions.
pub fn spmv<T: crate::Real>(a: &CsrMatrix<T>, x: &[T]) -> crate::Result<Vec<T>> {
    a.spmv(x)
}
