//! Uncertainty of estimated placements and the self-tuning weight `beta`.
//!
//! `U` measures how well the distance profile was matched, `V` how much of
//! the displayed loading mass lies in features not observed yet, and
//! `W = beta U + (1 - beta) V` combines them. Once a point has been placed by
//! the full model, the errors its earlier placements made are used to nudge
//! `beta` towards the balance that best explains those errors.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{distance, FrameLayout, PointId};

/// Normalised residual of the distance-matching fit, in `[0, 1]`.
pub fn strain_uncertainty(residual: f64, targets: &[f64]) -> f64 {
    let energy: f64 = targets.iter().map(|s| s * s).sum();
    if energy == 0.0 {
        return 0.0;
    }
    (residual.max(0.0) / energy).sqrt().min(1.0)
}

/// Share of each component's absolute loading mass carried by features
/// beyond the first `l`, averaged over components.
pub fn loading_uncertainty(loadings: &DMatrix<f64>, l: usize) -> Result<f64> {
    let k = loadings.nrows();
    let dims = loadings.ncols();
    if k == 0 || dims == 0 {
        return Err(Error::EmptyModel);
    }
    if l == 0 || l > dims {
        return Err(Error::DimensionMismatch {
            expected: dims,
            got: l,
        });
    }
    if l == dims {
        return Ok(0.0);
    }
    let covered: f64 = loadings
        .row_iter()
        .map(|row| {
            let total: f64 = row.iter().map(|w| w.abs()).sum();
            if total == 0.0 {
                1.0
            } else {
                row.iter().take(l).map(|w| w.abs()).sum::<f64>() / total
            }
        })
        .sum();
    Ok((1.0 - covered / k as f64).clamp(0.0, 1.0))
}

pub fn combined(strain: f64, loading: f64, beta: f64) -> f64 {
    beta * strain + (1.0 - beta) * loading
}

/// Mean absolute difference between final and estimated distances.
pub fn observed_error(sigma: &[f64], s_prime: &[f64]) -> Result<f64> {
    if sigma.len() != s_prime.len() {
        return Err(Error::LengthMismatch {
            left: sigma.len(),
            right: s_prime.len(),
        });
    }
    if sigma.is_empty() {
        return Err(Error::NotEnoughPoints { needed: 1, have: 0 });
    }
    Ok(sigma
        .iter()
        .zip(s_prime)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / sigma.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyRecord {
    pub id: PointId,
    pub l: usize,
    pub u_strain: f64,
    pub v_loading: f64,
    pub w_combined: f64,
}

impl UncertaintyRecord {
    pub fn new(id: PointId, l: usize, u_strain: f64, v_loading: f64, beta: f64) -> Self {
        Self {
            id,
            l,
            u_strain,
            v_loading,
            w_combined: combined(u_strain, v_loading, beta),
        }
    }
}

/// One placement of an in-flight point, kept until the point completes.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRecord {
    pub record: UncertaintyRecord,
    /// Estimated position in the aligned frame.
    pub position: Vec<f64>,
    /// The full-point layout the estimate was made against.
    pub anchors: Arc<FrameLayout>,
}

/// Realised error of one earlier placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelOutcome {
    pub l: usize,
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletedPoint {
    pub id: PointId,
    pub dims: usize,
    pub levels: Vec<LevelOutcome>,
}

/// Errors of every recorded placement of `id`, measured against its
/// position in `layout` (the first full layout containing it).
///
/// Only anchors present both when the estimate was made and in `layout` are
/// compared. Returns `None` if `id` is not in `layout`.
pub fn evaluate_history(
    id: &PointId,
    levels: &[LevelRecord],
    layout: &FrameLayout,
) -> Option<Vec<LevelOutcome>> {
    let index = layout.index();
    let own = *index.get(id)?;
    let target = layout.position(own);

    // anchor-layout index -> final-layout index, shared across levels that
    // were estimated against the same frame
    let mut mappings: Vec<(*const FrameLayout, Vec<(usize, usize)>)> = Vec::new();
    let mut outcomes = Vec::with_capacity(levels.len());
    for level in levels {
        let key = Arc::as_ptr(&level.anchors);
        let pos = match mappings.iter().position(|(p, _)| *p == key) {
            Some(pos) => pos,
            None => {
                let pairs = level
                    .anchors
                    .ids
                    .iter()
                    .enumerate()
                    .filter_map(|(i, aid)| match index.get(aid) {
                        Some(&j) if j != own => Some((i, j)),
                        _ => None,
                    })
                    .collect();
                mappings.push((key, pairs));
                mappings.len() - 1
            }
        };
        let pairs = &mappings[pos].1;
        if pairs.is_empty() {
            continue;
        }
        let total: f64 = pairs
            .iter()
            .map(|&(i, j)| {
                let sigma = distance(target, layout.position(j));
                let s_prime = distance(&level.position, level.anchors.position(i));
                (sigma - s_prime).abs()
            })
            .sum();
        outcomes.push(LevelOutcome {
            l: level.record.l,
            u: level.record.u_strain,
            v: level.record.v_loading,
            w: level.record.w_combined,
            e: total / pairs.len() as f64,
        });
    }
    Some(outcomes)
}

/// `rho / (rho + phi)` for one completed point, or `None` when it is
/// undefined (no full-dimension placement, zero mean strain, zero loading
/// uncertainty mass, or `rho + phi = 0`).
pub fn beta_target(point: &CompletedPoint) -> Option<f64> {
    let full = point.levels.iter().find(|o| o.l == point.dims)?;
    let mean_strain = point.levels.iter().map(|o| o.u).sum::<f64>() / point.dims as f64;
    let loading_mass: f64 = point.levels.iter().map(|o| o.v).sum();
    if mean_strain <= 0.0 || loading_mass <= 0.0 {
        return None;
    }
    let rho = full.e / mean_strain;
    let excess: f64 = point.levels.iter().map(|o| o.e - full.e).sum();
    let phi = excess.max(0.0) / loading_mass;
    if rho + phi <= 0.0 || !(rho + phi).is_finite() {
        return None;
    }
    Some(rho / (rho + phi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BetaStep {
    Skipped,
    Updated { target: f64, gradient: f64, delta: f64 },
}

/// `beta` with its Adadelta accumulators and the placement histories of
/// in-flight points.
#[derive(Debug, Clone)]
pub struct UncertaintyState {
    beta: f64,
    beta0: f64,
    t: u64,
    decay: f64,
    epsilon: f64,
    /// Decaying mean of squared gradients.
    rms_g: f64,
    /// Decaying mean of squared steps.
    rms_dbeta: f64,
    histories: HashMap<PointId, Vec<LevelRecord>>,
}

impl Default for UncertaintyState {
    fn default() -> Self {
        Self::new(0.5, 0.95, 1e-6)
    }
}

impl UncertaintyState {
    pub fn new(beta0: f64, decay: f64, epsilon: f64) -> Self {
        let beta0 = beta0.clamp(0.0, 1.0);
        Self {
            beta: beta0,
            beta0,
            t: 0,
            decay,
            epsilon,
            rms_g: 0.0,
            rms_dbeta: 0.0,
            histories: HashMap::new(),
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    /// Number of applied `beta` updates.
    pub fn t(&self) -> u64 {
        self.t
    }

    /// Adds a placement; a record for the same `l` replaces the old one.
    pub fn record(&mut self, level: LevelRecord) {
        let entry = self.histories.entry(level.record.id.clone()).or_default();
        entry.retain(|r| r.record.l != level.record.l);
        entry.push(level);
    }

    pub fn history(&self, id: &PointId) -> Option<&[LevelRecord]> {
        self.histories.get(id).map(Vec::as_slice)
    }

    /// Removes and returns the history of `id`.
    pub fn take_history(&mut self, id: &PointId) -> Option<Vec<LevelRecord>> {
        self.histories.remove(id)
    }

    pub fn tracked(&self) -> usize {
        self.histories.len()
    }

    /// One Adadelta step of `beta` towards the mean target of `completed`.
    pub fn update_beta(&mut self, completed: &[CompletedPoint]) -> BetaStep {
        let targets: Vec<f64> = completed.iter().filter_map(beta_target).collect();
        if targets.is_empty() {
            if !completed.is_empty() {
                tracing::debug!(points = completed.len(), "beta update skipped: no defined target");
            }
            return BetaStep::Skipped;
        }
        let target = targets.iter().sum::<f64>() / targets.len() as f64;
        let g = self.beta - target;
        self.rms_g = self.decay * self.rms_g + (1.0 - self.decay) * g * g;
        let delta = -((self.rms_dbeta + self.epsilon).sqrt() / (self.rms_g + self.epsilon).sqrt()) * g;
        self.rms_dbeta = self.decay * self.rms_dbeta + (1.0 - self.decay) * delta * delta;
        self.beta = (self.beta + delta).clamp(0.0, 1.0);
        self.t += 1;
        BetaStep::Updated {
            target,
            gradient: g,
            delta,
        }
    }
}
