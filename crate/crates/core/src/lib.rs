//! Episodic few-shot evaluation over precomputed embeddings.
//!
//! Embeddings are loaded from `.fseb` files ([`store`]), episodes are drawn
//! with a portable deterministic stream ([`sampler`]), classified by nearest
//! prototype ([`simpleshot`]) and summarized with Student-t intervals
//! ([`evaluation`], [`stats`]).

pub mod error;
pub mod evaluation;
pub mod protocols;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod simpleshot;
pub mod stats;
pub mod store;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, ErrorClass, Result};
pub use evaluation::{run_cell, CellData, CellSpec, EpisodeResult, RunSummary};
pub use protocols::{builtin_protocols, LabelMapping, ProtocolGrid};
pub use store::EmbeddingDataset;
pub use tensor::TransformMode;
