//! Dense numerics: row-major matrices, SPD solves, eigen/SVD routines, and a
//! reverse-mode tape over a fixed operation set.
//!
//! Everything here is hand-rolled dense linear algebra sized for desk-scale
//! problems (hundreds of rows, dozens of columns). There is deliberately no
//! LAPACK-class dependency; the routines that matter are small enough to own
//! and to test against independent oracles.

mod eigen;
mod gradcheck;
mod matrix;
mod solve;
mod svd;
mod tape;

pub use eigen::sym_eigen;
pub use gradcheck::grad_check;
pub use matrix::Matrix;
pub use solve::{solve_spd, Cholesky};
pub use svd::{pca_project, truncated_svd, Svd};
pub use tape::{NodeId, Tape};
