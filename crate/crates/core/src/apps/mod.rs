//! Pipelines for the simulation study and the three applied analyses.

pub mod baseball;
pub mod classifier;
pub mod glucose;
pub mod metrics;
pub mod simulation;
