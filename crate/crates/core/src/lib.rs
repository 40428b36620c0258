//! Deterministic federated-learning simulator with a four-stage Byzantine
//! defense.
//!
//! - [`vecmath`]: flat-vector kernel (cosine, power iteration, exact 1-D 2-means, median)
//! - [`data`]: synthetic and IDX datasets, label-skewed client partitioning
//! - [`model`] / [`fl`]: one-hidden-layer MLP, local SGD, global update, evaluation
//! - [`attacks`]: LIE, IPM, label flipping, sign flipping and a mixed adversary
//! - [`fpd`]: selection, colluding filter, spectral filter, denoising, aggregation
//! - [`baselines`]: FedAvg, Krum, FABA, coordinate-wise median
//! - [`harness`]: experiment config, seeded round loop, CSV logs and summaries

pub mod attacks;
pub mod baselines;
pub mod data;
pub mod error;
pub mod fl;
pub mod fpd;
pub mod harness;
pub mod model;
pub mod rng;
pub mod vecmath;

pub use error::{FpdError, Result};
pub use vecmath::{ClientId, ParamVector};
