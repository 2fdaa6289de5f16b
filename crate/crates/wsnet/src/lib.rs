//! Writer-style conditioned handwritten text line recognition.
//!
//! The crate implements a CTC line recognizer whose normalization layers can be
//! conditioned on learned per-writer style embeddings, a contrastive encoder
//! that pre-trains those embeddings from line images alone, and adaptation
//! procedures (embedding selection, LBFGS embedding optimization, baseline
//! finetuning) for writers unseen during training. A synthetic multi-writer
//! corpus generator with controllable glyph ambiguities drives end-to-end
//! experiments on one machine.
//!
//! Start from [`config::ExperimentConfig`] and the `wsnet` binary, or see the
//! `examples/` directory for one runnable program per capability.

pub mod adaptation;
pub mod charset;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod recognizer;
pub mod report;
pub mod style_encoder;
pub mod training;
pub mod wsb;

pub use error::{Error, Result};
