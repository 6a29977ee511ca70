//! Synthetic multiple-choice commonsense QA from knowledge-graph triples.
//!
//! The crate covers the whole data path: edge-file ingestion and
//! partitioning ([`kg`]), templated question/answer generation ([`qa`]),
//! rule-constrained distractor sampling ([`distractor`]), adversarial
//! filtering with a linear-classifier ensemble ([`aflite`]), language-model
//! style option scoring ([`scoring`]) and margin-ranking training of a
//! small log-linear scorer ([`mr`]).
//!
//! Nothing here touches the filesystem; readers and writers are passed in.

pub mod aflite;
pub mod data;
pub mod distractor;
pub mod embedding;
pub mod error;
pub mod kg;
pub mod mr;
pub mod qa;
pub mod scoring;
pub mod seed;
pub mod text;

pub use error::{Error, Result};
