//! Train–test leakage auditing for ad-hoc retrieval benchmarks.
//!
//! The crate finds training queries that semantically duplicate test topics
//! ([`leakage_id`]) using exact cosine search ([`embed_index`]), builds
//! training sets with a controlled amount of leakage ([`dataset_builder`]),
//! and measures how leakage shows up in run files ([`eval`],
//! [`memorization`]). All file formats live in [`corpus_io`].

pub mod corpus_io;
pub mod dataset_builder;
pub mod embed_index;
pub mod error;
pub mod eval;
pub mod leakage_id;
pub mod memorization;
pub mod par;
pub mod seed;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
