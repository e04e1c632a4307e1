//! Semantic-role cross-modal retrieval.
//!
//! Encodes captions as role graphs (event / action / entity nodes joined by
//! typed relations) and video clips as three expert feature streams (2D
//! appearance, 3D motion, RoI objects), embeds both sides into three joint
//! spaces with self- and cross-modal attention, and matches them with
//! averaged cosine similarity under a margin ranking objective.
//!
//! Everything runs on a small f64 tensor engine with reverse-mode autodiff
//! ([`tensor`]); a finite-difference oracle ([`tensor::fd`]) verifies every
//! registered operation. With the default `parallel` feature, batch encoding
//! and score-matrix evaluation fan out over rayon; results are bitwise
//! identical to the sequential fallback.

pub mod attention;
pub mod batch;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod matching;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod text_encoder;
pub mod train;
pub mod visual_encoder;

pub use error::{Result, SrxError};
pub use tensor::{Tape, Tensor, TensorId};
