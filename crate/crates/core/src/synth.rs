//! Synthetic streams for benchmarks, demos and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::stream::StreamEvent;

/// `n x dims` values drawn uniformly from `[-1, 1]`, row-major.
pub fn uniform_rows<R: Rng>(rng: &mut R, n: usize, dims: usize) -> Vec<f64> {
    (0..n * dims).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Points driven by a 2D latent position drawn from one of three clusters,
/// mixed into `dims` features with random loadings plus isotropic noise.
pub fn latent_points(n: usize, dims: usize, noise: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let loadings: Vec<[f64; 2]> = (0..dims).map(|_| [normal(), normal()]).collect();
    let centres = [[-2.0, 0.0], [2.0, 1.0], [0.0, -2.5]];
    (0..n)
        .map(|i| {
            let c = centres[i % centres.len()];
            let z = [c[0] + 0.6 * normal(), c[1] + 0.6 * normal()];
            loadings
                .iter()
                .map(|w| w[0] * z[0] + w[1] * z[1] + noise * normal())
                .collect()
        })
        .collect()
}

/// Stream in which the first `warmup` points arrive complete and the rest
/// arrive in pairs, both points revealing one more feature per event round.
pub fn progressive_stream(rows: &[Vec<f64>], warmup: usize) -> Vec<StreamEvent> {
    let mut events = Vec::new();
    let mut t = 0.0;
    let mut push = |events: &mut Vec<StreamEvent>, id: usize, values: &[f64]| {
        events.push(StreamEvent::new(format!("p{id}"), values.to_vec(), t));
        t += 1.0;
    };
    for (i, row) in rows.iter().enumerate().take(warmup) {
        push(&mut events, i, row);
    }
    let rest: Vec<usize> = (warmup..rows.len()).collect();
    for pair in rest.chunks(2) {
        let dims = rows[pair[0]].len();
        for l in 1..=dims {
            for &i in pair {
                push(&mut events, i, &rows[i][..l]);
            }
        }
    }
    events
}
