//! Cross-view graph pooling on a compact dense GNN stack.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`], [`tape`], [`gradcheck`]: dense matrices and reverse-mode autodiff
//! * [`data`]: TU-format ingestion, dataset transforms, folds and batches
//! * [`layers`]: graph convolution, readout, linear layers and Adam
//! * [`copool`]: edge-view pooling, node-view pooling and their fusion
//! * [`model`]: classification and regression networks, checkpoints
//! * [`harness`]: training, cross-validation and the experiment drivers
//! * [`cli`]: the `copool` command line
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix it to `f64`, which is what the harness uses.

pub mod cli;
pub mod copool;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod layers;
pub mod model;
pub mod ratio;
pub mod rng;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Real = f64;
pub type Tensor = tensor::Tensor<Real>;
pub type Tape = tape::Tape<Real>;
pub type Gradients = tape::Gradients<Real>;
pub type Adam = layers::Adam<Real>;
pub type CoPoolParams = copool::CoPoolParams<Tensor>;
pub type PooledGraph = copool::PooledGraph<Real>;
pub type ModelParams = model::ModelParams<Tensor>;
