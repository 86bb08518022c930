//! Symbolic Wirtinger calculus for scalar functions of complex square
//! matrices.
//!
//! The crate is organized bottom-up:
//!
//! - [`matrix`]: dense complex matrices and the small linear-algebra kernel
//!   (LU, Hermitian eigendecomposition, matrix functions).
//! - [`expr`]: the expression language, its grammar, canonical form and
//!   free-variable analysis.
//! - [`eval`]: numeric evaluation of expressions at bound points.
//! - [`engine`]: symbolic derivative pairs `(df/dZ, df/dZ*)`, including
//!   corrections for structured variables.
//! - [`fd`]: the central-difference oracle that checks the engine.
//! - [`optimizer`]: Lagrangian stationary-point solvers, both iterative and
//!   closed-form for the density-operator and Frobenius problems.

pub mod engine;
pub mod error;
pub mod eval;
pub mod expr;
pub mod fd;
pub mod io;
pub mod matrix;
pub mod optimizer;
pub mod random;

pub use engine::{derive, derive_unstructured, holomorphy_test, apply_structure, WirtingerPair};
pub use error::{Error, Result};
pub use eval::{eval_matrix, eval_scalar, EvalEnv};
pub use expr::{
    canonicalize_matrix, canonicalize_scalar, free_vars, parse, parse_matrix, pretty_print,
    pretty_print_matrix, AnalyticFunction, Decls, MatrixExpr, ScalarExpr, StructureClass,
    VariableDecl,
};
pub use matrix::ComplexMatrix;

pub type C64 = num_complex::Complex64;
