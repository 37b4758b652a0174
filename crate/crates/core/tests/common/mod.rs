#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streampca::estimation::DistanceProfile;

pub struct Iris {
    pub rows: Vec<Vec<f64>>,
    pub species: Vec<String>,
}

pub fn iris() -> Iris {
    let text = include_str!("../data/iris.csv");
    let mut rows = Vec::new();
    let mut species = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        rows.push(fields[..4].iter().map(|v| v.parse().unwrap()).collect());
        species.push(fields[4].to_string());
    }
    Iris { rows, species }
}

pub fn matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

pub struct BatchPca {
    pub mean: DVector<f64>,
    /// `D x k`, columns ordered by decreasing singular value.
    pub basis: DMatrix<f64>,
    pub singular_values: Vec<f64>,
}

/// Reference PCA from an SVD of the centred data matrix.
pub fn batch_pca(x: &DMatrix<f64>, k: usize) -> BatchPca {
    let n = x.nrows();
    let mean = DVector::from_fn(x.ncols(), |j, _| x.column(j).sum() / n as f64);
    let centred = DMatrix::from_fn(n, x.ncols(), |i, j| x[(i, j)] - mean[j]);
    let svd = centred.svd(false, true);
    let vt = svd.v_t.unwrap();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let cols: Vec<DVector<f64>> = order[..k].iter().map(|&i| vt.row(i).transpose()).collect();
    BatchPca {
        mean,
        basis: DMatrix::from_columns(&cols),
        singular_values: order[..k].iter().map(|&i| svd.singular_values[i]).collect(),
    }
}

/// Largest principal angle between the column spaces of two orthonormal
/// bases, computed from the sine to stay accurate near zero.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let residual = b - a * (a.transpose() * b);
    let s = residual.singular_values().max();
    s.clamp(0.0, 1.0).asin()
}

/// Row-major `n x k` coordinates to the upper triangle of their distance
/// matrix.
pub fn pairwise(coords: &DMatrix<f64>) -> Vec<f64> {
    let n = coords.nrows();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push((coords.row(i) - coords.row(j)).norm());
        }
    }
    out
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rotation(rng: &mut impl Rng, reflect: bool) -> DMatrix<f64> {
    let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (s, c) = theta.sin_cos();
    let mut r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    if reflect {
        r.column_mut(1).neg_mut();
    }
    r
}

/// One estimator instance: anchors in the plane and targets taken from a
/// different 2D view of the same 5D cloud, so no exact solution exists.
pub struct Instance {
    pub anchors: Vec<f64>,
    pub targets: Vec<f64>,
}

pub fn estimator_instance(seed: u64, n: usize) -> Instance {
    let mut rng = rng(seed);
    let points: Vec<[f64; 5]> = (0..=n)
        .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
        .collect();
    let anchors: Vec<f64> = points[1..].iter().flat_map(|p| [p[0], p[1]]).collect();
    let u = points[0];
    let w: f64 = rng.random_range(0.0..0.8);
    let targets = points[1..]
        .iter()
        .map(|p| {
            let a = p[0] - u[0];
            let b = (1.0 - w) * (p[1] - u[1]) + w * (p[2] - u[2]);
            (a * a + b * b).sqrt()
        })
        .collect();
    Instance { anchors, targets }
}

pub struct GridResult {
    pub best: f64,
    /// Largest objective increase from the best cell to one of its
    /// neighbours, i.e. the resolution of the grid around its optimum.
    pub cell_tolerance: f64,
}

/// Exhaustive search over `x` in the anchors' bounding box and
/// `alpha in [0, alpha_max]`.
pub fn grid_search(profile: &DistanceProfile<'_>, steps: usize, alpha_steps: usize, alpha_max: f64) -> GridResult {
    let n = profile.len();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for i in 0..n {
        let q = profile.anchor(i);
        for j in 0..2 {
            lo[j] = lo[j].min(q[j]);
            hi[j] = hi[j].max(q[j]);
        }
    }
    let at = |lo: f64, hi: f64, i: usize, m: usize| lo + (hi - lo) * i as f64 / (m - 1) as f64;
    let eval = |i: usize, j: usize, a: usize| {
        profile.objective(
            at(0.0, alpha_max, a, alpha_steps),
            &[at(lo[0], hi[0], i, steps), at(lo[1], hi[1], j, steps)],
        )
    };
    let mut best = (f64::INFINITY, 0, 0, 0);
    for i in 0..steps {
        for j in 0..steps {
            for a in 0..alpha_steps {
                let v = eval(i, j, a);
                if v < best.0 {
                    best = (v, i, j, a);
                }
            }
        }
    }
    let (value, bi, bj, ba) = best;
    let mut tol: f64 = 0.0;
    for di in -1i64..=1 {
        for dj in -1i64..=1 {
            for da in -1i64..=1 {
                let (i, j, a) = (bi as i64 + di, bj as i64 + dj, ba as i64 + da);
                if i < 0 || j < 0 || a < 0 || i >= steps as i64 || j >= steps as i64 || a >= alpha_steps as i64 {
                    continue;
                }
                tol = tol.max(eval(i as usize, j as usize, a as usize) - value);
            }
        }
    }
    GridResult {
        best: value,
        cell_tolerance: tol,
    }
}

/// Central-difference gradient of the objective in `(alpha, x)`.
pub fn numeric_gradient(profile: &DistanceProfile<'_>, alpha: f64, x: &[f64]) -> Vec<f64> {
    let mut theta = vec![alpha];
    theta.extend_from_slice(x);
    (0..theta.len())
        .map(|p| {
            let h = 1e-6 * theta[p].abs().max(1.0);
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[p] += h;
            down[p] -= h;
            (profile.objective(up[0], &up[1..]) - profile.objective(down[0], &down[1..])) / (2.0 * h)
        })
        .collect()
}

/// Relative gradient error, normalised by the larger gradient norm.
pub fn gradient_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale = analytic
        .iter()
        .map(|a| a * a)
        .sum::<f64>()
        .sqrt()
        .max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt())
        .max(1e-12);
    diff / scale
}

/// A point set and its image under a random similarity transform.
pub struct Construction {
    pub prev: DMatrix<f64>,
    pub curr: DMatrix<f64>,
    pub scale: f64,
    pub translation: Vec<f64>,
    pub rotation: DMatrix<f64>,
}

/// `prev = c (curr + tau) R` for random `c`, `tau` and `R` (half of them
/// reflections).
pub fn similarity_construction(rng: &mut impl Rng, n: usize) -> Construction {
    let curr = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-10.0..10.0));
    let scale = 10f64.powf(rng.random_range(-1.0..1.0));
    let translation: Vec<f64> = (0..2).map(|_| rng.random_range(-20.0..20.0)).collect();
    let reflect = rng.random_bool(0.5);
    let rotation = random_rotation(rng, reflect);
    let shifted = DMatrix::from_fn(n, 2, |i, j| curr[(i, j)] + translation[j]);
    let prev = shifted * &rotation * scale;
    Construction {
        prev,
        curr,
        scale,
        translation,
        rotation,
    }
}

/// Iris rows as complete events, one time unit apart.
pub fn iris_events() -> Vec<streampca::StreamEvent> {
    let data = iris();
    data.rows
        .iter()
        .zip(&data.species)
        .enumerate()
        .map(|(i, (row, species))| streampca::StreamEvent::new(format!("iris-{i}"), row.clone(), i as f64).with_group(species))
        .collect()
}

/// Feeds every event, panicking on rejection, and returns the snapshots.
pub fn replay(
    pipeline: &mut streampca::Pipeline,
    events: impl IntoIterator<Item = streampca::StreamEvent>,
) -> Vec<std::sync::Arc<streampca::LayoutSnapshot>> {
    events
        .into_iter()
        .filter_map(|e| pipeline.ingest(e).expect("event accepted"))
        .collect()
}
