//! Learnable hyperbolic positional encodings for graph transformers and deep
//! graph convolutional networks, on top of a small reverse-mode autodiff
//! engine.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod eigen;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod graph;
pub mod manifold;
pub mod models;
pub mod nn;
pub mod pe;
pub mod rng;
pub mod sbm;
pub mod sparse;
pub mod tensor;
pub mod training;
pub mod verify;

pub use autodiff::{concat_cols, Gradients, RadialFn, Tape, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
