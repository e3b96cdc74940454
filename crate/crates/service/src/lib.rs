//! Pipeline driver and HTTP API for polariscope working directories.

pub mod api;
pub mod pipeline;
pub mod snapshot;
pub mod workdir;

pub use snapshot::Snapshot;
pub use workdir::{Source, Workdir};
