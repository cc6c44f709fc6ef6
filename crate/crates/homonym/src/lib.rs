//! Disambiguation of author names in bibliographic collections.
//!
//! Name homonymy is resolved one name at a time: mentions whose normalized
//! names match form a block, and each block is clustered agglomeratively
//! under a probabilistic feature-overlap score until no merge is good
//! enough. The crate covers the full pipeline: record ingestion and
//! feature extraction ([`ingest`]), feature counting ([`counts`]), the
//! similarity kernels ([`similarity`]), the clustering loop ([`cluster`]),
//! evaluation ([`metrics`]), weight training and stopping sweeps
//! ([`train`]), and synthetic gold-labeled corpora ([`synth`]).

mod error;

pub mod cluster;
pub mod counts;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod similarity;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
