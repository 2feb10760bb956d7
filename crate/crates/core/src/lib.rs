//! Residual 1-D convolutional network for EEG classification, built from
//! first principles: a minimal f64 tensor substrate, layers with
//! hand-written forward/backward passes, Adam with a step-decay schedule,
//! dataset ingestion for the Bonn and Bern-Barcelona corpora, and
//! confusion-matrix metrics with hidden-unit activation inspection.
//!
//! All numeric kernels carry independent oracles in their tests: naive loop
//! references for the linear ops and central finite differences for every
//! gradient.

pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod optim;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Rng, Tensor};
