//! Immutable layout frames emitted by the pipeline.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::alignment::SimilarityTransform;
use crate::error::{Error, Result};
use crate::layout::{FrameLayout, GroupLabel, PointId};
use crate::uncertainty::{CompletedPoint, UncertaintyRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    /// Produced by a model update.
    Full,
    /// Produced by a placement of a partial point.
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub position: Vec<f64>,
    pub w: f64,
}

/// A displayed point whose features are not all known yet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialView {
    pub l: usize,
    pub position: Vec<f64>,
    pub alpha: f64,
    pub residual: f64,
    pub underdetermined: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<GroupLabel>,
    pub uncertainty: UncertaintyRecord,
    /// Oldest first, ending at `position`.
    pub path: Vec<PathPoint>,
}

/// Wall-clock milliseconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSnapshot {
    pub seq: u64,
    pub kind: FrameKind,
    /// Full points, aligned frame. Shared with other snapshots of the same
    /// model state.
    pub layout: Arc<FrameLayout>,
    pub partials: BTreeMap<PointId, PartialView>,
    /// Points that joined the full layout in this frame.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub added: Vec<PointId>,
    /// Points dropped from the store in this frame.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub removed: Vec<PointId>,
    /// Maps raw model coordinates of the current model to the aligned frame.
    pub transform: SimilarityTransform,
    pub beta: f64,
    /// Realised errors of points that completed in this frame.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub completed: Vec<CompletedPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<StageTimings>,
}

impl LayoutSnapshot {
    /// Every displayed point: full points first, then partial ones by id.
    pub fn positions(&self) -> impl Iterator<Item = (&PointId, &[f64])> {
        let full = self
            .layout
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id, self.layout.position(i)));
        let partial = self.partials.iter().map(|(id, p)| (id, p.position.as_slice()));
        full.chain(partial)
    }

    pub fn position_of(&self, id: &PointId) -> Option<&[f64]> {
        self.partials
            .get(id)
            .map(|p| p.position.as_slice())
            .or_else(|| self.layout.position_of(id))
    }

    pub fn contains(&self, id: &PointId) -> bool {
        self.position_of(id).is_some()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshots always serialize")
    }

    pub fn from_json(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::Malformed(e.to_string()))
    }
}
