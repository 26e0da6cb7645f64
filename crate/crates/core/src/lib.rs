//! Inner convex approximation for smooth nonconvex programs.
//!
//! The solver handles problems of the form
//!
//! ```text
//! minimize    U(x)
//! subject to  g_j(x) <= 0,  j = 1..m
//!             x in K         (closed convex set)
//! ```
//!
//! where `U` and the `g_j` may all be nonconvex. Each outer iteration
//! replaces `U` by a strongly convex model and every `g_j` by a convex upper
//! bound anchored at the current iterate. The resulting subproblem has a
//! unique minimizer (the *best response*), its feasible set lies inside the
//! original feasible set, and the next iterate is a convex combination of
//! the current point and the best response. Every iterate is therefore
//! feasible.
//!
//! Subproblems are solved centrally, or across variable blocks by dual
//! decomposition (multiplier ascent over shared constraints) or primal
//! decomposition (slack allocation with a master subgradient loop).
//!
//! Module map:
//!
//! * [`problem`], [`set`], [`expr`], [`func`]: problem oracles, convex sets
//!   and builtin smooth primitives.
//! * [`surrogate`]: convex model builders and their empirical verification.
//! * [`inner`], [`pg`]: strongly convex subproblem solves.
//! * [`dual`], [`primal`]: decomposed subproblem solvers.
//! * [`nova`]: the outer loop, step schedules and per-iteration diagnostics.
//! * [`sim`]: simulated multi-agent execution with message accounting.
//! * [`bench`]: benchmark registry, run configuration, grid oracle, traces.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// A single block spanning every coordinate is a valid partition.
#![allow(clippy::single_range_in_vec_init)]

pub mod bench;
pub mod dual;
pub mod error;
pub mod expr;
pub mod func;
pub mod inner;
pub mod linalg;
pub mod nova;
pub mod pg;
pub mod primal;
pub mod problem;
pub mod set;
pub mod sim;
pub mod surrogate;

pub use error::{Error, Result};
pub use func::{Oracle, SmoothFn};
pub use problem::ProblemSpec;
pub use set::{BlockPartition, ConvexSet};

/// A point is accepted as feasible when every constraint value and the
/// distance to the convex set are both below this threshold.
pub const FEASIBILITY_TOL: f64 = 1e-9;
