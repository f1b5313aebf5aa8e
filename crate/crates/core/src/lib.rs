//! Desk-scale multi-scenario cold-start recommendation pipeline.
//!
//! The crate covers the full loop: a seeded two-scenario event simulator with
//! a known ground-truth click model ([`synthgen`]), point-in-time behavior
//! tensors ([`feature_store`]), frozen standardization plus equal-frequency
//! binning ([`dense2sparse`]), a small deterministic dense-network kernel
//! ([`nn`]), the scenario-gated multi-task ranking model ([`model`]),
//! tie-corrected AUC / COPC measurement ([`metrics`]), the stability-aware
//! daily checkpoint promotion loop ([`updater`]), and the experiment harness
//! that ties them together ([`harness`]).

pub mod dense2sparse;
pub mod domain;
pub mod error;
pub mod feature_store;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod synthgen;
pub mod updater;

pub use error::{Error, MetricError, Result};
