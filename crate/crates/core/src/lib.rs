pub mod adapt;
pub mod augment;
pub mod autodiff;
pub mod cloud;
pub mod detector;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod seed;
pub mod synthgen;

pub use error::{Error, Result};
