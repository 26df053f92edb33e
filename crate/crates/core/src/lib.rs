//! Scalar fields, curves and their compositions.
//!
//! A field `E(x1, ..., x{n-1}, t)`, a curve `p(t)` and the path function
//! `f = E∘p` are kept as distinct types. The only bridge from a field to a
//! path function is composition, and the only derivative of a path function
//! is the total derivative, computed either directly or as the limit of
//! `(V·∇)E + ∂E/∂t` along the curve.

pub mod calculus;
pub mod cases;
pub mod cli;
pub mod error;
pub mod expr;
pub mod filters;
pub mod genfun;
pub mod geometry;
pub mod ode;
pub mod sampling;

pub use error::{Error, Result};
pub use expr::{parse, Assignment, Expr};
