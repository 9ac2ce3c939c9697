//! Ground states of Gross–Pitaevskii eigenvalue problems on curved 2D domains.
//!
//! The domain is described by a signed distance function sampled on a uniform
//! Cartesian grid. Nodes next to the boundary are coupled to exterior ghost
//! nodes whose values come from an explicit extrapolation operator: the
//! constant normal extension of every irregular nodal basis function is
//! computed once and combined with diagonal geometric factors into a sparse
//! ghost map. The ghost map is folded into second- and fourth-order stencils,
//! and the resulting operators drive a backward-Euler normalized gradient flow.
//!
//! Module map:
//!
//! - [`geometry`]: grid, shapes and signed distances, node classification,
//!   normals and curvature.
//! - [`extension`]: transport-based constant extension, the extension matrix
//!   and the linear / cubic ghost maps.
//! - [`operators`]: ghost-folded Laplacian and gradient operators, potentials
//!   and the discrete Hamiltonian.
//! - [`quadrature`]: cell-based quadrature on the level-set domain, norms,
//!   chemical potential and energy.
//! - [`linalg`]: CSR matrices, BiCGSTAB and a shift-invert subspace eigensolver.
//! - [`flow`]: initial data, the BEFD step and the two-phase driver.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// CSR loops index several parallel arrays by row.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod extension;
pub mod flow;
pub mod geometry;
pub mod linalg;
pub mod operators;
pub mod quadrature;
pub mod rates;

pub use error::{Error, Result};
