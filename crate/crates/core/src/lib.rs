//! Gradient-boosted oblivious decision trees with dual-importance feature
//! selection, built for wide gene-expression matrices.

pub mod boosting;
pub mod cli;
pub mod dataset;
pub mod evaluation;
pub mod importance;
pub mod knn;
pub mod manifest;
pub mod metrics;
pub mod selection;
pub mod synth;
