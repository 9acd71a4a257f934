//! Structural deep clustering.
//!
//! An autoencoder learns per-layer representations of the samples; a GCN
//! over a sample graph receives those representations layer by layer through
//! a delivery operator; and a sharpened target distribution derived from the
//! autoencoder's Student-t soft assignments supervises both the autoencoder
//! and the GCN's softmax predictions.
//!
//! The modules follow the data flow: [`graph`] builds the sample graph,
//! [`autoencoder`] and [`gcn`] are the two networks, [`selfsup`] holds the
//! assignment distributions and objectives, and [`trainer`] runs the joint
//! optimization. [`tape`] provides the reverse-mode gradients and
//! [`probes`] checks the structural identities numerically.

#[cfg(doctest)]
mod book;

pub mod autoencoder;
pub mod error;
pub mod gcn;
pub mod gradcheck;
pub mod graph;
pub mod kmeans;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params_io;
pub mod probes;
pub mod selfsup;
pub mod tape;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::DenseMatrix;
