//! Reverse-mode automatic differentiation over dense n-dimensional tensors.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s in creation
//! order. Creation order is a valid topological order, so [`Graph::backward`]
//! walks the record once in reverse and accumulates gradients into every
//! leaf created with `requires_grad`.
//!
//! The op set is the one needed for small convolutional image-to-image
//! networks: strided convolutions and their transposes, batch normalization,
//! linear layers, pointwise activations, channel concatenation and the
//! slicing ops used by image-space losses.
//!
//! ```
//! use blan_autograd::{Graph, Tensor};
//!
//! let g = Graph::<f64>::new();
//! let x = g.param(Tensor::from_vec(vec![3], vec![1.0, -2.0, 3.0]).unwrap());
//! let y = x.abs().sum();
//! g.backward(y).unwrap();
//! assert_eq!(x.grad().unwrap().data(), &[1.0, -1.0, 1.0]);
//! ```

mod error;
mod graph;
mod linalg;
mod scalar;
mod tensor;

pub mod gradcheck;
pub mod layer;
pub mod ops;

pub use error::{Error, Result};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use graph::{Graph, Var};
pub use layer::{BatchNormState, LayerSpec, Mode};
pub use ops::norm::BatchStats;
pub use scalar::Scalar;
pub use tensor::Tensor;
