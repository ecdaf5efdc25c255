//! Numerical engine for the geometry of statistical manifolds whose metric
//! may degenerate.
//!
//! The crate is organized in layers:
//!
//! - [`expr`], [`chart`], [`field`], [`fd`], [`quad`], [`path`]: the numeric
//!   substrate — an expression language, coordinate charts, tensor fields,
//!   finite differences, quadrature and staircase path integration.
//! - [`metric`], [`conn`], [`model`], [`blowup`]: metrics, affine connections
//!   and their duals, torsion/curvature, Codazzi condition reports,
//!   statistical models with Fisher metric and alpha-connections, and the
//!   probe demonstrating that dual connections blow up where the metric
//!   degenerates.
//! - [`contrast`]: two-point functions, Eguchi derivative calculus, and the
//!   degenerate-safe construction of weak contrast functions from `(h, C)`.
//! - [`bundle`], [`qcs`], [`front`]: para-Hermitian vector bundles, Lagrange
//!   bundle maps, dual bundle connections, quasi-Codazzi structures and their
//!   condition ledger, isomorphism checking, and the wavefront builder.
//! - [`frame`], [`atlas`]: parallel frames for flat bundle connections,
//!   Legendre embeddings obtained by path integration, and recovery of the
//!   affine transition maps that glue a quasi-Hessian atlas.
//!
//! All evaluations are pure functions of immutable field descriptions, so
//! grid sweeps parallelize freely; reductions are ordered to keep results
//! independent of the worker count.

pub mod atlas;
pub mod blowup;
pub mod bundle;
pub mod chart;
pub mod conn;
pub mod contrast;
pub mod error;
pub mod expr;
pub mod fd;
pub mod field;
pub mod frame;
pub mod front;
pub mod metric;
pub mod model;
pub mod path;
pub mod qcs;
pub mod quad;
pub mod testgen;

pub use chart::Chart;
pub use error::{Error, Result};
pub use expr::Program;
pub use fd::{FdConfig, Scheme};
pub use field::{Component, MatrixField, Symmetry, TensorField};
pub use quad::QuadratureRule;
