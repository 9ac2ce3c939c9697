//! Sparse matrices, the Krylov solver used by every implicit step, and the
//! eigensolver for linear ground and excited states.

pub mod eigen;
pub mod krylov;
pub mod sparse;

pub use eigen::{smallest_eigenpairs, EigenConfig, EigenPair};
pub use krylov::{solve_linear, PreconditionerKind, SolveStats, SolverConfig};
pub use sparse::CsrMatrix;
