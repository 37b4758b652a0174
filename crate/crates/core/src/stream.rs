//! Line-delimited JSON stream records.
//!
//! One event per line: `{"id": "...", "values": [...], "t": 0.0, "group": "..."}`
//! with `group` optional. A point may appear several times with a growing
//! prefix of its feature vector.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{GroupLabel, PointId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamEvent {
    pub id: PointId,
    pub values: Vec<f64>,
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<GroupLabel>,
}

impl StreamEvent {
    pub fn new(id: impl Into<PointId>, values: Vec<f64>, t: f64) -> Self {
        Self {
            id: id.into(),
            values,
            t,
            group: None,
        }
    }

    pub fn with_group(mut self, group: &str) -> Self {
        self.group = Some(GroupLabel::from(group));
        self
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::Malformed(e.to_string()))
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("stream events always serialize")
    }
}

/// Parses events from a reader, skipping blank lines. Each item carries the
/// 1-based line number for diagnostics.
pub fn read_events<R: BufRead>(reader: R) -> impl Iterator<Item = (usize, Result<StreamEvent>)> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Ok(line) if line.trim().is_empty() => None,
            Ok(line) => Some((i + 1, StreamEvent::parse_line(&line))),
            Err(e) => Some((i + 1, Err(Error::Malformed(e.to_string())))),
        })
}
