//! Federated training of a neural news recommendation model with local
//! differential privacy on uploaded gradients.
//!
//! The library simulates the protocol end to end: a content-based news
//! encoder and a long/short-term user encoder are trained across simulated
//! clients, each client clips and noises its gradient before upload, and the
//! server applies sample-count-weighted aggregation followed by an SGD step.
//! A centralized trainer over the same model serves as the comparison
//! baseline, and impression-level ranking metrics (AUC, MRR, nDCG@k) measure
//! recommendation quality.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod fed;
pub mod ldp;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::RngState;
pub use tensor::Tensor;
