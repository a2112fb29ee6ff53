//! Spatially directional dual-graph attention networks.
//!
//! The crate builds two graphs over geolocated samples (a radius graph with a
//! Gaussian distance kernel and a feature-space kNN graph), runs two stacks of
//! direction-aware graph attention over them, blends the branches with a
//! learnable weight, and trains with an optional spatial smoothness penalty.
//!
//! Module map:
//! - [`tensor`]: reverse-mode differentiation substrate
//! - [`geometry`]: coordinate standardization, distances, bearings
//! - [`graph`]: spatial and feature graph construction
//! - [`model`]: attention layers, fusion, output heads, checkpoints
//! - [`loss`] and [`metrics`]: objectives and evaluation scores
//! - [`data`]: CSV ingestion, preprocessing, synthetic data, perturbations, splits
//! - [`training`]: initialization, Adam, early stopping, baselines, experiments

pub mod data;
pub mod error;
pub mod geometry;
pub mod graph;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
