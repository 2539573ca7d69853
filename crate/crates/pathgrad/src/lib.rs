//! Path-integral feature attribution for token-sequence models.
//!
//! Computes attribution scores by accumulating model gradients along a path
//! from a baseline embedding to the input embedding, with three path
//! strategies (straight line, anchored walk, uniform anchored with monotonic
//! projection), validates them through completeness deltas and faithfulness
//! metrics, and ships a bundled differentiable text classifier to run
//! everything at desk scale.

pub mod attribution;
pub mod config;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod model;
pub mod path;
pub mod report;
pub mod store;

pub use attribution::{attribute, AttributionResult, DeltaPercent};
pub use error::{Error, Result};
pub use metrics::{evaluate_method, MaskingProtocol, MetricReport};
pub use model::{DifferentiableModel, ReferenceModelParams, TargetSelector, TokenSequence};
pub use path::{AnchorStrategy, BaselineKind, InterpolationPath, PathMethod, PathSpec};
pub use store::{EmbeddingStore, NeighborSet};
