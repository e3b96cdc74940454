//! Polarization measurement over politician biographies: ingestion and
//! sectioning of member pages, heading annotation, bias-removal cleaning,
//! word and document embeddings, an approximate nearest-neighbor forest,
//! party classifiers, and neighbor-based polarization metrics.

pub mod corpus;
pub mod annotate;
pub mod ingest;
pub mod clean;
pub mod embed;
pub mod ann;
pub mod classify;
pub mod polarize;
pub mod store;
pub mod synth;
