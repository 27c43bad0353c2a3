//! Differentiable primitives. Every op is a method on [`Var`](crate::Var)
//! and records a backward rule on the owning graph.

pub mod conv;
pub mod elementwise;
pub mod linear;
pub mod norm;
pub mod reduce;
pub mod shape;

pub use conv::{conv2d_output_size, conv_transpose2d_output_size};
