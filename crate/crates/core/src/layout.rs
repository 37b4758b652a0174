//! Point identifiers, the stored full-dimension points, and aligned frame
//! layouts shared between snapshots.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Cheap-to-clone point identifier.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointId(Arc<str>);

impl PointId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PointId {
    fn from(s: &str) -> Self {
        PointId(Arc::from(s))
    }
}

impl From<String> for PointId {
    fn from(s: String) -> Self {
        PointId(Arc::from(s))
    }
}

pub type GroupLabel = Arc<str>;

/// Complete points retained by the pipeline, row-major, oldest first.
#[derive(Debug, Clone)]
pub struct PointStore {
    dims: usize,
    ids: VecDeque<PointId>,
    members: HashSet<PointId>,
    groups: VecDeque<Option<GroupLabel>>,
    rows: Vec<f64>,
}

impl PointStore {
    pub fn new(dims: usize) -> Self {
        Self {
            dims,
            ids: VecDeque::new(),
            members: HashSet::new(),
            groups: VecDeque::new(),
            rows: Vec::new(),
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn push(&mut self, id: PointId, group: Option<GroupLabel>, values: &[f64]) {
        debug_assert_eq!(values.len(), self.dims);
        self.members.insert(id.clone());
        self.ids.push_back(id);
        self.groups.push_back(group);
        self.rows.extend(values.iter().copied());
    }

    /// Drops the oldest points until at most `cap` remain; returns their ids.
    pub fn evict_to(&mut self, cap: usize) -> Vec<PointId> {
        let mut evicted = Vec::new();
        while self.ids.len() > cap {
            let id = self.ids.pop_front().expect("non-empty");
            self.members.remove(&id);
            evicted.push(id);
            self.groups.pop_front();
        }
        self.rows.drain(..evicted.len() * self.dims);
        evicted
    }

    pub fn ids(&self) -> impl ExactSizeIterator<Item = &PointId> {
        self.ids.iter()
    }

    pub fn groups(&self) -> impl ExactSizeIterator<Item = &Option<GroupLabel>> {
        self.groups.iter()
    }

    pub fn contains(&self, id: &PointId) -> bool {
        self.members.contains(id)
    }

    /// Contiguous row-major view of every stored point.
    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dims..(i + 1) * self.dims]
    }
}

/// Aligned 2D (or k-D) positions of the full-dimension points in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLayout {
    pub k: usize,
    pub ids: Vec<PointId>,
    pub groups: Vec<Option<GroupLabel>>,
    /// Row-major, `k` values per point.
    pub coords: Vec<f64>,
}

impl FrameLayout {
    pub fn empty(k: usize) -> Self {
        Self {
            k,
            ids: Vec::new(),
            groups: Vec::new(),
            coords: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.coords[i * self.k..(i + 1) * self.k]
    }

    pub fn index(&self) -> HashMap<&PointId, usize> {
        self.ids.iter().enumerate().map(|(i, id)| (id, i)).collect()
    }

    pub fn position_of(&self, id: &PointId) -> Option<&[f64]> {
        self.ids.iter().position(|x| x == id).map(|i| self.position(i))
    }
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
