//! Reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! A [`Graph`] records every operation as it is evaluated; [`Graph::backward`]
//! then walks the nodes in reverse insertion order exactly once. Trainable
//! values live in a [`ParamStore`] outside the graph and are copied in with
//! [`Graph::param`] for each forward pass.

mod array;
pub mod check;
mod graph;
mod grl;
mod optim;
mod params;

pub use array::Array;
pub use check::{grad_check, grad_check_params};
pub use graph::{sigmoid, Graph, Tensor, LEAKY_SLOPE, LOGIT_CLAMP};
pub use grl::GrlCoefficient;
pub use optim::Adam;
pub use params::{ParamId, ParamStore};
