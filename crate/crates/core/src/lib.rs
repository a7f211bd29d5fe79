//! Next-term grade prediction from transcript data.

pub mod encoding;
pub mod error;
pub mod eval;
pub mod importance;
pub mod ingest;
pub mod models;
pub mod pipeline;
pub mod synth;
pub mod transcript;

pub use error::{Error, Result};
