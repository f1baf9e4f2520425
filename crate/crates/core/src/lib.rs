//! Multi-modal deep clustering at desk scale.
//!
//! Two encoders (one per modality) alternate between k-means clustering of
//! their features and discriminative training on the resulting pseudo-labels.
//! The pseudo-label routing decides which clustering supervises which encoder:
//! single-modality (`SDC`), multi-head (`MDC`), concatenated (`CDC`) or
//! cross-modal (`XDC`).

pub mod clustering;
pub mod config;
pub mod engine;
pub mod error;
pub mod eval;
pub mod nn;
mod regime;
pub mod runner;
pub mod seed;
pub mod synthdata;

pub use error::{Error, Result};
pub use regime::Regime;
