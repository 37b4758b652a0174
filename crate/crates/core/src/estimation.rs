//! Placement of points whose feature vectors are only partially observed.
//!
//! A point `u` with `l < D` observed features is projected into a PCA layout
//! built from the first `l` features of the stored points. Its distances
//! `s_i` to every stored point in that layout are then matched in the full
//! layout by minimising `sum_i (s_i - alpha * ||x - q_i||)^2` over the
//! position `x` and scale `alpha` with Adadelta.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ipca::{complete_basis, PcaModel};
use crate::layout::distance;
use crate::linalg::{centred_gram, symmetric_eigen, thin_svd};
use crate::uncertainty::strain_uncertainty;

/// PCA layout of the stored points restricted to their first `l` features.
#[derive(Debug, Clone, PartialEq)]
pub struct SubLayout {
    prefix: usize,
    mean: Vec<f64>,
    /// `l x r` orthonormal columns, `r = min(l, k)`.
    basis: DMatrix<f64>,
}

impl SubLayout {
    /// Fresh decomposition of the feature prefix of the stored points
    /// (`rows` is row-major with `dims` values per point).
    pub fn fit_exact(rows: &[f64], dims: usize, prefix: usize, k: usize) -> Result<Self> {
        check_prefix(prefix, dims)?;
        let n = rows.len() / dims;
        if n < 2 {
            return Err(Error::NotEnoughPoints { needed: 2, have: n });
        }
        let l = prefix;
        let mut mean = vec![0.0; l];
        for row in rows.chunks_exact(dims) {
            for (m, v) in mean.iter_mut().zip(&row[..l]) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let cov = centred_gram(rows, dims, &mean) / (n as f64 - 1.0);
        let (_, vectors) = symmetric_eigen(&cov)?;
        let basis = vectors.columns(0, l.min(k)).into_owned();
        Ok(Self {
            prefix: l,
            mean,
            basis,
        })
    }

    /// Prefix layout read off the running model: the leading `l x l` block
    /// of its low-rank covariance is factored through `B_l S`.
    pub fn from_model(model: &PcaModel, prefix: usize, k: usize) -> Result<Self> {
        check_prefix(prefix, model.dims())?;
        if model.is_empty() {
            return Err(Error::EmptyModel);
        }
        let l = prefix;
        let r = l.min(k);
        let basis = model.basis();
        let s = model.singular_values();
        let factor = DMatrix::from_fn(l, basis.ncols(), |i, j| basis[(i, j)] * s[j]);
        let svd = thin_svd(&factor)?;
        let mut sub = svd.u.columns(0, r.min(svd.u.ncols())).into_owned();
        if sub.ncols() < r {
            sub = complete_basis(sub, r);
        }
        Ok(Self {
            prefix: l,
            mean: model.mean().as_slice()[..l].to_vec(),
            basis: sub,
        })
    }

    pub fn prefix(&self) -> usize {
        self.prefix
    }

    pub fn components(&self) -> usize {
        self.basis.ncols()
    }

    /// Projects the first `l` values of `point` into `out` (`r` values).
    pub fn project(&self, point: &[f64], out: &mut [f64]) {
        let l = self.prefix;
        for (c, o) in out.iter_mut().enumerate() {
            let col = &self.basis.as_slice()[c * l..(c + 1) * l];
            *o = point[..l]
                .iter()
                .zip(&self.mean)
                .zip(col)
                .map(|((x, m), h)| (x - m) * h)
                .sum();
        }
    }

    /// Sub-layout coordinates of every stored row, row-major `n x r`.
    pub fn project_rows(&self, rows: &[f64], dims: usize) -> Vec<f64> {
        let r = self.components();
        let mut out = vec![0.0; rows.len() / dims * r];
        for (row, dst) in rows.chunks_exact(dims).zip(out.chunks_exact_mut(r)) {
            self.project(row, dst);
        }
        out
    }

    /// Distances from `point` to every stored row in this layout.
    pub fn distances(&self, point: &[f64], rows: &[f64], dims: usize) -> Vec<f64> {
        let r = self.components();
        let mut u = vec![0.0; r];
        self.project(point, &mut u);
        let mut buf = vec![0.0; r];
        rows.chunks_exact(dims)
            .map(|row| {
                self.project(row, &mut buf);
                distance(&u, &buf)
            })
            .collect()
    }
}

fn check_prefix(prefix: usize, dims: usize) -> Result<()> {
    if prefix == 0 || prefix > dims {
        return Err(Error::DimensionMismatch {
            expected: dims,
            got: prefix,
        });
    }
    Ok(())
}

/// Layout of `stored` (`n x D`) on its first `l` features with `min(l, k)`
/// components, together with the handle used to place new points.
pub fn sub_layout(stored: &DMatrix<f64>, l: usize, k: usize) -> Result<(DMatrix<f64>, SubLayout)> {
    let dims = stored.ncols();
    let rows: Vec<f64> = stored.transpose().as_slice().to_vec();
    let layout = SubLayout::fit_exact(&rows, dims, l, k)?;
    let coords = layout.project_rows(&rows, dims);
    let r = layout.components();
    Ok((DMatrix::from_row_slice(stored.nrows(), r, &coords), layout))
}

/// Target distances `s` and anchor positions `q` (row-major, `k` per point).
#[derive(Debug, Clone, Copy)]
pub struct DistanceProfile<'a> {
    targets: &'a [f64],
    anchors: &'a [f64],
    k: usize,
}

impl<'a> DistanceProfile<'a> {
    pub fn new(targets: &'a [f64], anchors: &'a [f64], k: usize) -> Result<Self> {
        if k == 0 || anchors.len() != targets.len() * k {
            return Err(Error::LengthMismatch {
                left: targets.len() * k,
                right: anchors.len(),
            });
        }
        if targets.iter().any(|s| !s.is_finite() || *s < 0.0) || anchors.iter().any(|q| !q.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { targets, anchors, k })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn targets(&self) -> &[f64] {
        self.targets
    }

    pub fn anchor(&self, i: usize) -> &[f64] {
        &self.anchors[i * self.k..(i + 1) * self.k]
    }

    pub fn target_energy(&self) -> f64 {
        self.targets.iter().map(|s| s * s).sum()
    }

    /// `sum_i (s_i - alpha ||x - q_i||)^2`.
    pub fn objective(&self, alpha: f64, x: &[f64]) -> f64 {
        self.targets
            .iter()
            .zip(self.anchors.chunks_exact(self.k))
            .map(|(s, q)| {
                let r = s - alpha * distance(x, q);
                r * r
            })
            .sum()
    }

    /// Objective and its gradient; `grad[0]` is d/d alpha, `grad[1..]` is
    /// d/dx. Anchors coinciding with `x` contribute no x-direction.
    pub fn gradient(&self, alpha: f64, x: &[f64], grad: &mut [f64]) -> f64 {
        let k = self.k;
        debug_assert_eq!(grad.len(), k + 1);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut value = 0.0;
        for (s, q) in self.targets.iter().zip(self.anchors.chunks_exact(k)) {
            let mut d2 = 0.0;
            for j in 0..k {
                let diff = x[j] - q[j];
                d2 += diff * diff;
            }
            let d = d2.sqrt();
            let r = s - alpha * d;
            value += r * r;
            grad[0] -= 2.0 * r * d;
            if d > 0.0 {
                let w = -2.0 * r * alpha / d;
                for j in 0..k {
                    grad[j + 1] += w * (x[j] - q[j]);
                }
            }
        }
        value
    }

    /// Inverse-distance-weighted mean of the anchors, with `alpha` the ratio
    /// of the target spread to the anchor spread.
    pub fn initial_guess(&self) -> (f64, Vec<f64>) {
        const EPS: f64 = 1e-9;
        let mut x = vec![0.0; self.k];
        let mut total = 0.0;
        for (s, q) in self.targets.iter().zip(self.anchors.chunks_exact(self.k)) {
            let w = 1.0 / (s + EPS);
            total += w;
            for (xj, qj) in x.iter_mut().zip(q) {
                *xj += w * qj;
            }
        }
        if total > 0.0 {
            x.iter_mut().for_each(|v| *v /= total);
        }
        let frame = Frame::of(self);
        (frame.target_scale / frame.anchor_scale, x)
    }
}

/// Objective and gradient evaluation inside [`estimate`]. Planar profiles
/// keep each coordinate contiguous and accumulate in independent lanes so
/// the loop vectorises.
enum Kernel<'a> {
    Planar { xs: Vec<f64>, ys: Vec<f64>, targets: &'a [f64] },
    General(DistanceProfile<'a>),
}

impl<'a> Kernel<'a> {
    fn new(targets: &'a [f64], anchors: &'a [f64], k: usize) -> Result<Self> {
        let profile = DistanceProfile::new(targets, anchors, k)?;
        if k != 2 {
            return Ok(Kernel::General(profile));
        }
        let (xs, ys) = anchors.chunks_exact(2).map(|q| (q[0], q[1])).unzip();
        Ok(Kernel::Planar { xs, ys, targets })
    }

    fn gradient(&self, alpha: f64, x: &[f64], grad: &mut [f64]) -> f64 {
        const LANES: usize = 4;
        let (xs, ys, targets) = match self {
            Kernel::General(p) => return p.gradient(alpha, x, grad),
            Kernel::Planar { xs, ys, targets } => (xs, ys, targets),
        };
        let mut value = [0.0; LANES];
        let mut g = [[0.0; LANES]; 3];
        let mut term = |lane: usize, qx: f64, qy: f64, s: f64| {
            let dx = x[0] - qx;
            let dy = x[1] - qy;
            let d = (dx * dx + dy * dy).sqrt();
            let r = s - alpha * d;
            value[lane] += r * r;
            g[0][lane] -= 2.0 * r * d;
            let w = if d > 0.0 { -2.0 * r * alpha / d } else { 0.0 };
            g[1][lane] += w * dx;
            g[2][lane] += w * dy;
        };
        let whole = xs.len() / LANES * LANES;
        for ((qx, qy), s) in xs[..whole]
            .chunks_exact(LANES)
            .zip(ys[..whole].chunks_exact(LANES))
            .zip(targets[..whole].chunks_exact(LANES))
        {
            for lane in 0..LANES {
                term(lane, qx[lane], qy[lane], s[lane]);
            }
        }
        for i in whole..xs.len() {
            term(0, xs[i], ys[i], targets[i]);
        }
        for (out, lanes) in grad.iter_mut().zip(&g) {
            *out = lanes.iter().sum();
        }
        value.iter().sum()
    }
}

/// Centring and scaling that brings a profile to unit target RMS and unit
/// RMS anchor spread, where the objective's curvature is close to one in
/// every parameter.
struct Frame {
    centre: Vec<f64>,
    anchor_scale: f64,
    target_scale: f64,
}

impl Frame {
    fn of(profile: &DistanceProfile<'_>) -> Self {
        let k = profile.k;
        let n = profile.len().max(1) as f64;
        let mut centre = vec![0.0; k];
        for q in profile.anchors.chunks_exact(k) {
            for (c, v) in centre.iter_mut().zip(q) {
                *c += v / n;
            }
        }
        let radius2 = profile
            .anchors
            .chunks_exact(k)
            .map(|q| distance(q, &centre).powi(2))
            .sum::<f64>()
            / n;
        // RMS distance between anchor pairs
        let spread = (2.0 * radius2).sqrt();
        let target = (profile.target_energy() / n).sqrt();
        Self {
            centre,
            anchor_scale: if spread > 0.0 { spread } else { 1.0 },
            target_scale: if target > 0.0 { target } else { 1.0 },
        }
    }

    fn targets(&self, profile: &DistanceProfile<'_>) -> Vec<f64> {
        profile.targets.iter().map(|s| s / self.target_scale).collect()
    }

    fn anchors(&self, profile: &DistanceProfile<'_>) -> Vec<f64> {
        profile
            .anchors
            .chunks_exact(profile.k)
            .flat_map(|q| q.iter().zip(&self.centre).map(|(v, c)| (v - c) / self.anchor_scale))
            .collect()
    }

    fn to_local(&self, alpha: f64, x: &[f64], theta: &mut [f64]) {
        theta[0] = alpha * self.anchor_scale / self.target_scale;
        for ((t, v), c) in theta[1..].iter_mut().zip(x).zip(&self.centre) {
            *t = (v - c) / self.anchor_scale;
        }
    }

    fn to_global(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let alpha = theta[0] * self.target_scale / self.anchor_scale;
        let x = theta[1..]
            .iter()
            .zip(&self.centre)
            .map(|(t, c)| c + t * self.anchor_scale)
            .collect();
        (alpha, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub max_iter: usize,
    /// Adadelta decay rate.
    pub decay: f64,
    /// Adadelta conditioning constant.
    pub epsilon: f64,
    /// Stop when the best objective improves by less than this fraction
    /// over `window` iterations.
    pub tolerance: f64,
    pub window: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            decay: 0.95,
            epsilon: 1e-6,
            tolerance: 1e-9,
            window: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedPlacement {
    pub x: Vec<f64>,
    pub alpha: f64,
    /// Final objective value.
    pub residual: f64,
    /// Strain uncertainty of this placement.
    pub strain: f64,
    pub iterations: usize,
    /// Fewer than `k + 1` anchors.
    pub underdetermined: bool,
    /// The optimiser ended above the `alpha = 0` objective and was clamped.
    pub fallback: bool,
}

/// Minimises the distance-matching objective with Adadelta.
///
/// The optimiser runs on the mean objective of the normalised profile, so
/// results do not depend on the units of the layout.
pub fn estimate(
    profile: &DistanceProfile<'_>,
    init: Option<(f64, &[f64])>,
    config: &EstimatorConfig,
) -> Result<EstimatedPlacement> {
    let n = profile.len();
    let k = profile.k();
    if n == 0 {
        return Err(Error::NotEnoughPoints { needed: 1, have: 0 });
    }
    if let Some((_, x)) = init {
        if x.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: x.len(),
            });
        }
    }
    let underdetermined = n < k + 1;
    let energy = profile.target_energy();

    let finish = |alpha: f64, x: Vec<f64>, iterations: usize| {
        let residual = profile.objective(alpha, &x);
        let (alpha, residual, fallback) = if residual > energy {
            (0.0, energy, true)
        } else {
            (alpha, residual, false)
        };
        EstimatedPlacement {
            strain: strain_uncertainty(residual, profile.targets()),
            x,
            alpha,
            residual,
            iterations,
            underdetermined,
            fallback,
        }
    };

    if energy == 0.0 {
        return Ok(finish(1.0, profile.anchor(0).to_vec(), 0));
    }

    let frame = Frame::of(profile);
    let targets = frame.targets(profile);
    let anchors = frame.anchors(profile);
    let local = Kernel::new(&targets, &anchors, k)?;

    let mut theta = vec![0.0; k + 1];
    match init {
        Some((alpha, x)) if alpha.is_finite() && x.iter().all(|v| v.is_finite()) => {
            frame.to_local(alpha.max(0.0), x, &mut theta);
        }
        _ => {
            let (alpha, x) = profile.initial_guess();
            frame.to_local(alpha, &x, &mut theta);
        }
    }

    let rho = config.decay;
    let eps = config.epsilon;
    let inv_n = 1.0 / n as f64;
    let mut grad = vec![0.0; k + 1];
    let mut acc_grad = vec![0.0; k + 1];
    let mut acc_step = vec![0.0; k + 1];
    let mut best = (f64::INFINITY, theta.clone());
    let mut best_history: Vec<f64> = Vec::with_capacity(config.max_iter + 1);
    let mut iterations = 0;

    for iter in 0..=config.max_iter {
        let value = local.gradient(theta[0], &theta[1..], &mut grad) * inv_n;
        if value < best.0 {
            best = (value, theta.clone());
        }
        best_history.push(best.0);
        if iter == config.max_iter || best.0 <= f64::MIN_POSITIVE {
            break;
        }
        if iter >= config.window {
            let earlier = best_history[iter - config.window];
            if earlier - best.0 < config.tolerance * earlier {
                break;
            }
        }
        for p in 0..=k {
            let g = grad[p] * inv_n;
            acc_grad[p] = rho * acc_grad[p] + (1.0 - rho) * g * g;
            let step = -((acc_step[p] + eps).sqrt() / (acc_grad[p] + eps).sqrt()) * g;
            acc_step[p] = rho * acc_step[p] + (1.0 - rho) * step * step;
            theta[p] += step;
        }
        theta[0] = theta[0].max(0.0);
        iterations = iter + 1;
    }

    let (alpha, x) = frame.to_global(&best.1);
    Ok(finish(alpha, x, iterations))
}
