//! Retrieval-augmented OpenMP parallelization pipeline.
//!
//! The crate is organised along the pipeline stages: tutorial corpus
//! ingestion ([`corpus`]), embeddings ([`embed`]), exact retrieval
//! ([`index`]), prompt assembly ([`prompt`]), model calls ([`generate`]),
//! compile gating and differential testing ([`validate`]), thread-scaling
//! benchmarks ([`bench`]), snippet harvesting ([`harvest`]) and the
//! end-to-end driver ([`pipeline`]) with its summaries ([`report`]).

pub mod bench;
pub mod corpus;
pub mod embed;
pub mod generate;
pub mod harvest;
pub mod http;
pub mod index;
pub mod pipeline;
pub mod prompt;
pub mod process;
pub mod report;
pub mod validate;
