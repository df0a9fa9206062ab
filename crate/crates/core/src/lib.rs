//! Pseudo-contrastive learning for graph-based semi-supervised node
//! classification.
//!
//! The crate trains GCN/MLP backbones with a joint objective: supervised
//! cross-entropy plus a negative-pairs-only contrastive loss whose pairs come
//! from confidence-thresholded positive pseudo-labels and per-class top-K
//! negative pseudo-labels, weighted by random-walk-with-restart topological
//! relevance.
//!
//! All numerical code is generic over the scalar type ([`scalar::Scalar`],
//! `f32` or `f64`); the aliases at the crate root fix `f64`, which every
//! reported experiment uses.

#![forbid(unsafe_code)]

pub mod adam;
pub mod backbone;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod losses;
pub mod metrics;
pub mod pairs;
pub mod pseudo;
pub mod report;
pub mod rwr;
pub mod scalar;
pub mod sparse;
pub mod tape;
pub mod tensor;
pub mod trainer;

pub use error::{PclError, Result};

/// Sizes the global worker pool that `multi_run` fans runs out on. Later
/// calls after the pool exists are ignored.
pub fn init_thread_pool(jobs: usize) {
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global();
}

/// Dense `f64` matrix.
pub type Tensor = tensor::Tensor<f64>;
/// CSR sparse `f64` matrix.
pub type SparseMatrix = sparse::CsrMatrix<f64>;
/// Reverse-mode tape over `f64`.
pub type Tape = tape::Tape<f64>;
/// Adam moment state over `f64`.
pub type AdamState = adam::AdamState<f64>;
/// Loaded `f64` graph dataset.
pub type GraphBundle = graph::GraphBundle<f64>;
/// GCN/RWR operators over `f64`.
pub type NormalizedOperators = graph::NormalizedOperators<f64>;
/// Backbone parameters over `f64`.
pub type BackboneParams = backbone::BackboneParams<f64>;
/// Contrast plan over `f64` weights.
pub type ContrastPlan = pairs::ContrastPlan<f64>;
/// RWR score cache over `f64`.
pub type RwrScores = rwr::RwrScores<f64>;
/// Shared per-bundle training state over `f64`.
pub type TrainContext = trainer::TrainContext<f64>;
