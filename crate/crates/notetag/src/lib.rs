//! Fine-grained tag generation for e-commerce community notes, end to end:
//! handbook-guided multi-step tag extraction, a judge-based evaluation
//! harness, distillation dataset construction, and conversion of tags into
//! features driving a two-tower retrieval model.

pub mod config;
pub mod distill;
pub mod error;
pub mod extraction;
pub mod features;
pub mod gateway;
pub mod judge;
pub mod jsonl;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod tower;

pub use error::{Error, Result};
