//! Utterance classification for clinical conversations and filtered
//! concept extraction.
//!
//! The pipeline: [`corpus`] holds conversations (and generates synthetic
//! ones), [`features`] turns utterances into vectors, [`nn`] defines the
//! speaker-gated hierarchical BiLSTM, [`train`] fits it, [`eval`] scores it
//! and [`extract`] uses its probabilities to filter utterances before
//! dictionary-based extraction.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod extract;
pub mod features;
pub mod nn;
pub mod rng;
pub mod text;
pub mod train;

pub use error::{Error, Result};
