//! Event routing between the full-dimension path (model update, projection,
//! alignment, `beta` bookkeeping) and the partial path (placement and
//! uncertainty of incomplete points).

use std::collections::{BTreeMap, VecDeque};
use std::hash::{Hash, Hasher};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::{self, PointCorrespondence, SimilarityTransform};
use crate::error::{Error, Result};
use crate::estimation::{estimate, DistanceProfile, EstimatedPlacement, EstimatorConfig, SubLayout};
use crate::ipca::{effective_history, Batch, PcaModel};
use crate::layout::{FrameLayout, GroupLabel, PointId, PointStore};
use crate::snapshot::{FrameKind, LayoutSnapshot, PartialView, PathPoint, StageTimings};
use crate::stream::StreamEvent;
use crate::uncertainty::{
    evaluate_history, loading_uncertainty, CompletedPoint, LevelRecord, UncertaintyRecord,
    UncertaintyState,
};

/// Largest chunk folded into the model in one update during bulk loads.
const BULK_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Retention {
    KeepAll,
    ForgetBeyondEffectiveHistory,
}

/// How the layout of a feature prefix is obtained for partial points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubLayoutMethod {
    /// Fresh decomposition of the stored points' prefix.
    Exact,
    /// Prefix block of the running model's low-rank covariance.
    Model,
    /// `Exact` while `n * l^2` stays within the configured budget.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub dims: usize,
    pub components: usize,
    pub batch: usize,
    pub forgetting: f64,
    pub retention: Retention,
    pub align: bool,
    pub sub_layout: SubLayoutMethod,
    /// `n * l^2` above which `Auto` switches to the model-derived layout.
    pub exact_budget: f64,
    pub estimator: EstimatorConfig,
    pub beta0: f64,
    /// Recent positions kept per partial point.
    pub path_len: usize,
    /// Partial-path snapshots closer than this (in event time) to the last
    /// emitted one are folded into the next snapshot. Zero emits every one.
    pub coalesce_window: f64,
    /// Subsample anchors uniformly beyond this count.
    pub sample_cap: Option<usize>,
    pub seed: u64,
    pub record_timings: bool,
    /// Suggested per-stage animation length for clients.
    pub stage_ms: u64,
}

impl PipelineConfig {
    pub fn new(dims: usize) -> Self {
        Self {
            dims,
            components: 2,
            batch: 2,
            forgetting: 1.0,
            retention: Retention::KeepAll,
            align: true,
            sub_layout: SubLayoutMethod::Auto,
            exact_budget: 5e7,
            estimator: EstimatorConfig::default(),
            beta0: 0.5,
            path_len: 8,
            coalesce_window: 0.0,
            sample_cap: None,
            seed: 0,
            record_timings: false,
            stage_ms: 300,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components == 0 || self.components > self.dims {
            return Err(Error::InvalidConfig(format!(
                "components must be in 1..={}, got {}",
                self.dims, self.components
            )));
        }
        effective_history(self.forgetting, self.batch)?;
        if !(0.0..=1.0).contains(&self.beta0) {
            return Err(Error::InvalidConfig(format!("beta0 {} outside [0, 1]", self.beta0)));
        }
        if self.path_len == 0 {
            return Err(Error::InvalidConfig("path_len must be positive".into()));
        }
        if self.coalesce_window < 0.0 || !self.coalesce_window.is_finite() {
            return Err(Error::InvalidConfig("coalesce_window must be non-negative".into()));
        }
        if self.sample_cap.is_some_and(|c| c < self.components + 1) {
            return Err(Error::InvalidConfig("sample_cap must exceed components".into()));
        }
        Ok(())
    }
}

/// A point with only its first `l` features observed.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialPoint {
    pub id: PointId,
    pub values: Vec<f64>,
    pub group: Option<GroupLabel>,
}

#[derive(Debug, Clone)]
struct PartialState {
    values: Vec<f64>,
    group: Option<GroupLabel>,
    placement: Option<EstimatedPlacement>,
    record: Option<UncertaintyRecord>,
    path: VecDeque<PathPoint>,
}

#[derive(Debug, Clone)]
struct Pending {
    id: PointId,
    values: Vec<f64>,
    group: Option<GroupLabel>,
}

pub struct Pipeline {
    config: PipelineConfig,
    model: PcaModel,
    store: PointStore,
    layout: Arc<FrameLayout>,
    transform: SimilarityTransform,
    buffer: Vec<Pending>,
    partials: BTreeMap<PointId, PartialState>,
    /// Partial events that arrived before the first layout existed.
    parked: BTreeMap<PointId, PartialPoint>,
    uncertainty: UncertaintyState,
    seq: u64,
    last_partial_emit: Option<f64>,
    /// b1/b2 durations of the last placement not yet reported.
    pending_b: Option<(f64, f64)>,
    latest: Option<Arc<LayoutSnapshot>>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let model = PcaModel::new(config.dims, config.components, config.forgetting)?;
        let uncertainty = UncertaintyState::new(
            config.beta0,
            config.estimator.decay,
            config.estimator.epsilon,
        );
        Ok(Self {
            store: PointStore::new(config.dims),
            layout: Arc::new(FrameLayout::empty(config.components)),
            transform: SimilarityTransform::identity(config.components),
            model,
            buffer: Vec::new(),
            partials: BTreeMap::new(),
            parked: BTreeMap::new(),
            uncertainty,
            seq: 0,
            last_partial_emit: None,
            pending_b: None,
            latest: None,
            config,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn model(&self) -> &PcaModel {
        &self.model
    }

    pub fn stored(&self) -> usize {
        self.store.len()
    }

    pub fn beta(&self) -> f64 {
        self.uncertainty.beta()
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn layout(&self) -> &Arc<FrameLayout> {
        &self.layout
    }

    pub fn latest(&self) -> Option<&Arc<LayoutSnapshot>> {
        self.latest.as_ref()
    }

    pub fn uncertainty(&self) -> &UncertaintyState {
        &self.uncertainty
    }

    fn booted(&self) -> bool {
        self.store.len() >= 2 && !self.layout.is_empty()
    }

    fn reject(id: &PointId, reason: impl Into<String>) -> Error {
        Error::Rejected {
            id: id.to_string(),
            reason: reason.into(),
        }
    }

    /// Routes one event. Returns the snapshot it produced, if any.
    pub fn ingest(&mut self, event: StreamEvent) -> Result<Option<Arc<LayoutSnapshot>>> {
        let d = self.config.dims;
        let id = event.id;
        let l = event.values.len();
        if l == 0 || l > d {
            return Err(Self::reject(&id, format!("{l} values for {d} dimensions")));
        }
        if event.values.iter().any(|v| !v.is_finite()) {
            return Err(Self::reject(&id, "non-finite value"));
        }
        if self.store.contains(&id) {
            return Err(Self::reject(&id, "point already absorbed by the model"));
        }
        if let Some(p) = self.buffer.iter().find(|p| p.id == id) {
            return if p.values == event.values {
                Ok(None)
            } else {
                Err(Self::reject(&id, "point already complete"))
            };
        }
        let prior = self
            .partials
            .get(&id)
            .map(|p| (&p.values, &p.group))
            .or_else(|| self.parked.get(&id).map(|p| (&p.values, &p.group)));
        let mut group = event.group;
        if let Some((values, prior_group)) = prior {
            if l < values.len() {
                return Err(Self::reject(
                    &id,
                    format!("observed features shrank from {} to {l}", values.len()),
                ));
            }
            if event.values[..values.len()] != values[..] {
                return Err(Self::reject(&id, "values are not an extension of earlier ones"));
            }
            if l == values.len() {
                return Ok(None);
            }
            if group.is_none() {
                group = prior_group.clone();
            }
        }
        let point = PartialPoint {
            id,
            values: event.values,
            group,
        };

        if l == d {
            let mut partial_frame = false;
            if self.partials.contains_key(&point.id) && self.booted() {
                self.place(&point)?;
                partial_frame = true;
            }
            self.parked.remove(&point.id);
            self.buffer.push(Pending {
                id: point.id.clone(),
                values: point.values,
                group: point.group,
            });
            if self.buffer.len() >= self.config.batch {
                return self.flush().map(Some);
            }
            return Ok(if partial_frame {
                self.emit_partial(event.t)
            } else {
                None
            });
        }

        if !self.booted() {
            self.parked.insert(point.id.clone(), point);
            return Ok(None);
        }
        self.place(&point)?;
        Ok(self.emit_partial(event.t))
    }

    fn flush(&mut self) -> Result<Arc<LayoutSnapshot>> {
        let pending = std::mem::take(&mut self.buffer);
        let ids = pending.iter().map(|p| p.id.clone()).collect();
        let groups = pending.iter().map(|p| p.group.clone()).collect();
        let rows: Vec<f64> = pending.iter().flat_map(|p| p.values.iter().copied()).collect();
        match self.absorb(ids, groups, &rows) {
            Ok(s) => Ok(s),
            Err(e) => {
                self.buffer = pending;
                Err(e)
            }
        }
    }

    /// Full-path update with a batch of complete points.
    pub fn full_update(&mut self, batch: Batch) -> Result<Arc<LayoutSnapshot>> {
        let groups = batch
            .ids()
            .iter()
            .map(|id| self.partials.get(id).and_then(|p| p.group.clone()))
            .collect();
        let rows: Vec<f64> = batch
            .points()
            .row_iter()
            .flat_map(|r| r.iter().copied().collect::<Vec<_>>())
            .collect();
        self.absorb(batch.ids().to_vec(), groups, &rows)
    }

    /// Loads a block of complete points at once, e.g. history preceding a
    /// live stream. Folds them into the model in chunks and emits one frame.
    pub fn bootstrap(&mut self, ids: Vec<PointId>, rows: &[f64]) -> Result<Arc<LayoutSnapshot>> {
        let groups = vec![None; ids.len()];
        self.absorb(ids, groups, rows)
    }

    fn absorb(
        &mut self,
        ids: Vec<PointId>,
        groups: Vec<Option<GroupLabel>>,
        rows: &[f64],
    ) -> Result<Arc<LayoutSnapshot>> {
        let d = self.config.dims;
        let k = self.config.components;
        let m = ids.len();
        if rows.len() != m * d {
            return Err(Error::DimensionMismatch {
                expected: m * d,
                got: rows.len(),
            });
        }
        if m < 2 {
            return Err(Error::BatchTooSmall(m));
        }
        if let Some(id) = ids.iter().find(|id| self.store.contains(id)) {
            return Err(Self::reject(id, "point already absorbed by the model"));
        }
        let t_a1 = Instant::now();

        // a1: model update and projection of every stored point
        let mut model = self.model.clone();
        let chunk = m.max(self.config.batch).min(BULK_CHUNK.max(self.config.batch));
        let mut start = 0;
        while start < m {
            let mut end = (start + chunk).min(m);
            if m - end < 2 {
                end = m;
            }
            let block = DMatrix::from_row_slice(end - start, d, &rows[start * d..end * d]);
            let batch = Batch::new(block, ids[start..end].to_vec())?;
            model = model.update(&batch)?;
            start = end;
        }
        let mut raw = Vec::new();
        model.project_rows(self.store.rows(), &mut raw)?;
        let mut fresh = Vec::new();
        model.project_rows(rows, &mut fresh)?;
        raw.extend_from_slice(&fresh);

        let total = self.store.len() + m;
        let cap = match self.config.retention {
            Retention::KeepAll => None,
            Retention::ForgetBeyondEffectiveHistory => {
                effective_history(self.config.forgetting, self.config.batch)?.capacity()
            }
        };
        let evict = cap.map_or(0, |c| total.saturating_sub(c.max(m)));

        // commit
        self.model = model;
        for (i, id) in ids.iter().enumerate() {
            self.store.push(id.clone(), groups[i].clone(), &rows[i * d..(i + 1) * d]);
        }
        let removed = self.store.evict_to(total - evict);
        let raw = raw.split_off(evict * k);
        let a1 = t_a1.elapsed();

        // a2: overlap onto the previous frame
        let t_a2 = Instant::now();
        let ids_now: Vec<PointId> = self.store.ids().cloned().collect();
        let transform = if self.config.align && !self.layout.is_empty() {
            let prev_index = self.layout.index();
            let mut prev = Vec::new();
            let mut curr = Vec::new();
            for (i, id) in ids_now.iter().enumerate() {
                if let Some(&j) = prev_index.get(id) {
                    prev.extend_from_slice(self.layout.position(j));
                    curr.extend_from_slice(&raw[i * k..(i + 1) * k]);
                }
            }
            let n = prev.len() / k;
            if n == 0 {
                SimilarityTransform::identity(k)
            } else {
                let corr = PointCorrespondence::new(
                    DMatrix::from_row_slice(n, k, &prev),
                    DMatrix::from_row_slice(n, k, &curr),
                )?;
                alignment::fit(&corr).transform
            }
        } else {
            SimilarityTransform::identity(k)
        };
        let aligned = transform.apply_rows(&raw)?;
        let layout = Arc::new(FrameLayout {
            k,
            ids: ids_now,
            groups: self.store.groups().cloned().collect(),
            coords: aligned,
        });
        let a2 = t_a2.elapsed();

        // a3: realised errors of completed points and the beta step
        let t_a3 = Instant::now();
        let mut completed = Vec::new();
        for id in &ids {
            self.partials.remove(id);
            self.parked.remove(id);
            if let Some(history) = self.uncertainty.take_history(id) {
                if let Some(levels) = evaluate_history(id, &history, &layout) {
                    completed.push(CompletedPoint {
                        id: id.clone(),
                        dims: d,
                        levels,
                    });
                }
            }
        }
        self.uncertainty.update_beta(&completed);
        let a3 = t_a3.elapsed();

        self.layout = layout;
        self.transform = transform;

        // points that were waiting for the first layout
        let mut b = (0.0, 0.0);
        if self.booted() && !self.parked.is_empty() {
            let parked = std::mem::take(&mut self.parked);
            for point in parked.into_values() {
                let (b1, b2) = self.place(&point)?;
                b.0 += b1;
                b.1 += b2;
            }
        }

        let added: Vec<PointId> = ids.into_iter().filter(|id| self.store.contains(id)).collect();
        let stats = self.config.record_timings.then(|| StageTimings {
            a1: Some(ms(a1)),
            a2: Some(ms(a2)),
            a3: Some(ms(a3)),
            b1: (b.0 > 0.0).then_some(b.0),
            b2: (b.1 > 0.0).then_some(b.1),
        });
        Ok(self.emit(FrameKind::Full, added, removed, completed, stats))
    }

    /// Partial-path update; returns the resulting snapshot.
    pub fn partial_update(&mut self, point: PartialPoint) -> Result<Arc<LayoutSnapshot>> {
        if point.values.is_empty() || point.values.len() > self.config.dims {
            return Err(Self::reject(&point.id, "bad feature count"));
        }
        if !self.booted() {
            return Err(Error::NotEnoughPoints {
                needed: 2,
                have: self.store.len(),
            });
        }
        self.place(&point)?;
        let stats = self.partial_stats();
        Ok(self.emit(FrameKind::Partial, Vec::new(), Vec::new(), Vec::new(), stats))
    }

    /// Re-places an in-flight point after more of its features arrived.
    /// Unchanged `l` returns the current placement.
    pub fn reestimate_on_growth(&mut self, id: &PointId, values: &[f64]) -> Result<EstimatedPlacement> {
        let state = self
            .partials
            .get(id)
            .ok_or_else(|| Error::UnknownPoint(id.to_string()))?;
        if values.len() == state.values.len() {
            if let Some(p) = &state.placement {
                return Ok(p.clone());
            }
        }
        if values.len() < state.values.len() || values[..state.values.len()] != state.values[..] {
            return Err(Self::reject(id, "values are not an extension of earlier ones"));
        }
        let point = PartialPoint {
            id: id.clone(),
            values: values.to_vec(),
            group: state.group.clone(),
        };
        self.place(&point)?;
        Ok(self.partials[id].placement.clone().expect("just placed"))
    }

    fn sub_layout(&self, l: usize) -> Result<SubLayout> {
        let k = self.config.components;
        let n = self.store.len() as f64;
        let exact = match self.config.sub_layout {
            SubLayoutMethod::Exact => true,
            SubLayoutMethod::Model => false,
            SubLayoutMethod::Auto => n * (l * l) as f64 <= self.config.exact_budget,
        };
        if exact {
            SubLayout::fit_exact(self.store.rows(), self.config.dims, l, k)
        } else {
            SubLayout::from_model(&self.model, l, k)
        }
    }

    fn sample(&self, id: &PointId, l: usize) -> Option<Vec<usize>> {
        let cap = self.config.sample_cap?;
        let n = self.store.len();
        if n <= cap {
            return None;
        }
        let mut h = std::collections::hash_map::DefaultHasher::new();
        id.hash(&mut h);
        l.hash(&mut h);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ h.finish());
        let mut picked = rand::seq::index::sample(&mut rng, n, cap).into_vec();
        picked.sort_unstable();
        tracing::info!(%id, n, cap, "anchor subsampling active");
        Some(picked)
    }

    /// Places one partial point (stages b1 and b2). Returns their durations
    /// in milliseconds.
    fn place(&mut self, point: &PartialPoint) -> Result<(f64, f64)> {
        let d = self.config.dims;
        let k = self.config.components;
        let l = point.values.len();
        let t_b1 = Instant::now();

        let sub = self.sub_layout(l)?;
        let rows = self.store.rows();
        let sampled = self.sample(&point.id, l);
        let (targets, anchors): (Vec<f64>, Option<Vec<f64>>) = match &sampled {
            None => (sub.distances(&point.values, rows, d), None),
            Some(idx) => {
                let mut picked_rows = Vec::with_capacity(idx.len() * d);
                let mut picked_anchors = Vec::with_capacity(idx.len() * k);
                for &i in idx {
                    picked_rows.extend_from_slice(self.store.row(i));
                    picked_anchors.extend_from_slice(self.layout.position(i));
                }
                (sub.distances(&point.values, &picked_rows, d), Some(picked_anchors))
            }
        };
        let anchors = anchors.as_deref().unwrap_or(&self.layout.coords);
        let profile = DistanceProfile::new(&targets, anchors, k)?;
        let warm = self
            .partials
            .get(&point.id)
            .and_then(|s| s.placement.as_ref())
            .filter(|p| p.alpha > 0.0)
            .map(|p| (p.alpha, p.x.clone()));
        let placement = estimate(
            &profile,
            warm.as_ref().map(|(a, x)| (*a, x.as_slice())),
            &self.config.estimator,
        )?;
        let b1 = ms(t_b1.elapsed());

        let t_b2 = Instant::now();
        let loadings = self.model.pc_loadings()?;
        let v = loading_uncertainty(&loadings, l)?;
        let record = UncertaintyRecord::new(
            point.id.clone(),
            l,
            placement.strain,
            v,
            self.uncertainty.beta(),
        );
        self.uncertainty.record(LevelRecord {
            record: record.clone(),
            position: placement.x.clone(),
            anchors: Arc::clone(&self.layout),
        });
        let path_len = self.config.path_len;
        let state = self
            .partials
            .entry(point.id.clone())
            .or_insert_with(|| PartialState {
                values: Vec::new(),
                group: None,
                placement: None,
                record: None,
                path: VecDeque::new(),
            });
        state.values = point.values.clone();
        if point.group.is_some() {
            state.group = point.group.clone();
        }
        state.path.push_back(PathPoint {
            position: placement.x.clone(),
            w: record.w_combined,
        });
        while state.path.len() > path_len {
            state.path.pop_front();
        }
        state.placement = Some(placement);
        state.record = Some(record);
        let b2 = ms(t_b2.elapsed());
        self.pending_b = Some((b1, b2));
        Ok((b1, b2))
    }

    fn emit_partial(&mut self, t: f64) -> Option<Arc<LayoutSnapshot>> {
        let window = self.config.coalesce_window;
        if window > 0.0 {
            if let Some(last) = self.last_partial_emit {
                if t - last < window {
                    return None;
                }
            }
        }
        self.last_partial_emit = Some(t);
        let stats = self.partial_stats();
        Some(self.emit(FrameKind::Partial, Vec::new(), Vec::new(), Vec::new(), stats))
    }

    fn partial_stats(&self) -> Option<StageTimings> {
        self.config.record_timings.then(|| {
            let (b1, b2) = self.pending_b.unwrap_or_default();
            StageTimings {
                b1: Some(b1),
                b2: Some(b2),
                ..Default::default()
            }
        })
    }

    fn emit(
        &mut self,
        kind: FrameKind,
        added: Vec<PointId>,
        removed: Vec<PointId>,
        completed: Vec<CompletedPoint>,
        stats: Option<StageTimings>,
    ) -> Arc<LayoutSnapshot> {
        self.seq += 1;
        self.pending_b = None;
        let partials = self
            .partials
            .iter()
            .filter_map(|(id, s)| {
                let placement = s.placement.as_ref()?;
                let record = s.record.clone()?;
                Some((
                    id.clone(),
                    PartialView {
                        l: s.values.len(),
                        position: placement.x.clone(),
                        alpha: placement.alpha,
                        residual: placement.residual,
                        underdetermined: placement.underdetermined,
                        group: s.group.clone(),
                        uncertainty: record,
                        path: s.path.iter().cloned().collect(),
                    },
                ))
            })
            .collect();
        let snapshot = Arc::new(LayoutSnapshot {
            seq: self.seq,
            kind,
            layout: Arc::clone(&self.layout),
            partials,
            added,
            removed,
            transform: self.transform.clone(),
            beta: self.uncertainty.beta(),
            completed,
            stats,
        });
        self.latest = Some(Arc::clone(&snapshot));
        snapshot
    }
}

fn ms(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1e3
}
