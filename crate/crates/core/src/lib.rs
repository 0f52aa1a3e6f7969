//! Structured output prediction with factor-graph margin losses.
//!
//! The crate covers the full experimental loop: factor graphs and feature
//! maps, exact (loss-augmented) inference, the clipped margin loss and its
//! subgradients, SGD and regularized risk minimization, closed-form
//! generalization and stability bounds, β-mixing document sources, and an
//! audit harness that checks each bound against measurements.

pub mod dataset;
pub mod audit;
pub mod bounds;
pub mod datagen;
pub mod error;
pub mod graph;
pub mod inference;
pub mod json;
pub mod loss;
pub mod mixing;
pub mod rng;
pub mod scoring;
pub mod train;

pub use dataset::Dataset;
pub use datagen::{Generator, GeneratorConfig, Scenario};
pub use error::{Error, Result};
pub use graph::{FactorGraph, LabelAssignment, DEFAULT_ENUMERATION_CAP};
pub use inference::{DecodeResult, InferenceMethod, MethodChoice};
pub use loss::{MarginEvaluation, MarginSpec, TaskLoss};
pub use scoring::{FeatureMap, Featurizer, StructuredExample, StructuredInput, WeightVector};
