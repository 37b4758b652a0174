//! Streaming incremental-PCA layouts.
//!
//! Complete points update a running PCA model in small batches; each new
//! layout is overlapped onto the previous one with a similarity transform so
//! that existing points stay put. Points whose features are still arriving
//! are placed by matching their distance profile from a layout of the
//! features observed so far, and carry an uncertainty that combines the fit
//! residual with the share of loading mass still unobserved.

pub mod alignment;
pub mod bench;
pub mod error;
pub mod estimation;
pub mod ipca;
pub mod layout;
mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod snapshot;
pub mod stream;
pub mod synth;
pub mod uncertainty;

pub use alignment::{fit, PointCorrespondence, SimilarityTransform};
pub use error::{Error, Result};
pub use estimation::{estimate, sub_layout, DistanceProfile, EstimatedPlacement, EstimatorConfig, SubLayout};
pub use ipca::{effective_history, Batch, EffectiveHistory, PcaModel};
pub use layout::{FrameLayout, PointId};
pub use pipeline::{PartialPoint, Pipeline, PipelineConfig, Retention, SubLayoutMethod};
pub use snapshot::{FrameKind, LayoutSnapshot, PartialView, PathPoint, StageTimings};
pub use stream::StreamEvent;
pub use uncertainty::{UncertaintyRecord, UncertaintyState};
