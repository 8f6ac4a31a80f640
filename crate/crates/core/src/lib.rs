//! Explainable automated property valuation.
//!
//! The pipeline for one target property:
//!
//! 1. [`neighbors`] filters the corpus by the user's configuration and ranks
//!    the survivors by normalized Minkowski distance.
//! 2. [`imputation`] fills the target's missing features from those
//!    neighbors (mean, modal label, most recent dated value).
//! 3. [`avm`] predicts unit price with a per-type gradient-boosted tree
//!    model that routes any remaining missing values natively.
//! 4. [`explain`] compares the target with each neighbor feature by feature
//!    and renders an explanation, through an LLM when one is configured.
//!
//! [`eval`] runs the imputation ablation, [`service`] exposes the pipeline
//! over HTTP and [`cli`] wires everything to a command line.

pub mod avm;
pub mod cli;
pub mod domain;
pub mod eval;
pub mod explain;
pub mod imputation;
pub mod ingest;
pub mod neighbors;
pub mod service;
pub mod stats;
pub mod synth;

pub use domain::{
    Constraint, FeatureDecl, FeatureKind, FeatureSchema, FeatureValue, GeoPoint, Property,
    PropertyConfiguration, PropertyType,
};
pub use ingest::{DataDir, Dataset};
pub use stats::NormalizationStats;
