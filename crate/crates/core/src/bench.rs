//! Stage-timing harness.
//!
//! For each `(D, n)` cell a pipeline is preloaded with `n` points drawn
//! uniformly from `[-1, 1]^D`. Each repetition then streams two new points:
//! both are first placed at a random feature count `l < D` (stages b1, b2),
//! then completed, which triggers a model update (stages a1, a2, a3).

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::PointId;
use crate::pipeline::{Pipeline, PipelineConfig};
use crate::stream::StreamEvent;
use crate::synth::uniform_rows;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub dims: Vec<usize>,
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub batch: usize,
    pub components: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dims: vec![10, 100, 1000],
            sizes: vec![100, 1000, 10_000],
            reps: 10,
            batch: 2,
            components: 2,
            max_iter: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub mean: f64,
    pub median: f64,
}

impl StageSummary {
    fn from_samples(samples: &mut [f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        samples.sort_by(f64::total_cmp);
        let n = samples.len();
        let median = if n % 2 == 1 {
            samples[n / 2]
        } else {
            0.5 * (samples[n / 2 - 1] + samples[n / 2])
        };
        Self {
            mean: samples.iter().sum::<f64>() / n as f64,
            median,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub dims: usize,
    pub n: usize,
    pub a1: StageSummary,
    pub a2: StageSummary,
    pub a3: StageSummary,
    pub b1: StageSummary,
    pub b2: StageSummary,
}

impl CellResult {
    /// Mean a1 + a2 + a3.
    pub fn full_path(&self) -> f64 {
        self.a1.mean + self.a2.mean + self.a3.mean
    }

    /// Mean b1 + b2.
    pub fn partial_path(&self) -> f64 {
        self.b1.mean + self.b2.mean
    }
}

pub fn run_cell(config: &BenchConfig, dims: usize, n: usize) -> Result<CellResult> {
    if dims < 2 || n < 2 {
        return Err(Error::InvalidConfig("bench needs D >= 2 and n >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ ((dims as u64) << 32) ^ n as u64);
    let mut pc = PipelineConfig::new(dims);
    pc.components = config.components;
    pc.batch = config.batch;
    pc.estimator.max_iter = config.max_iter;
    pc.record_timings = true;
    pc.seed = config.seed;
    let mut pipeline = Pipeline::new(pc)?;

    let ids = (0..n).map(|i| PointId::from(format!("s{i}"))).collect();
    let rows = uniform_rows(&mut rng, n, dims);
    pipeline.bootstrap(ids, &rows)?;

    let mut samples: [Vec<f64>; 5] = Default::default();
    let mut t = 0.0;
    for rep in 0..config.reps {
        let fresh: Vec<(String, Vec<f64>)> = (0..config.batch)
            .map(|j| (format!("r{rep}-{j}"), uniform_rows(&mut rng, 1, dims)))
            .collect();
        for (id, values) in &fresh {
            let l = rng.random_range(1..dims);
            t += 1.0;
            let snap = pipeline
                .ingest(StreamEvent::new(id.as_str(), values[..l].to_vec(), t))?
                .expect("partial placement emits a frame");
            let stats = snap.stats.unwrap_or_default();
            samples[3].push(stats.b1.unwrap_or(0.0));
            samples[4].push(stats.b2.unwrap_or(0.0));
        }
        let mut full = None;
        for (id, values) in &fresh {
            t += 1.0;
            full = pipeline.ingest(StreamEvent::new(id.as_str(), values.clone(), t))?;
        }
        let stats = full
            .and_then(|s| s.stats)
            .ok_or_else(|| Error::InvalidConfig("completing a batch did not update the model".into()))?;
        samples[0].push(stats.a1.unwrap_or(0.0));
        samples[1].push(stats.a2.unwrap_or(0.0));
        samples[2].push(stats.a3.unwrap_or(0.0));
    }
    let [a1, a2, a3, b1, b2] = samples.map(|mut s| StageSummary::from_samples(&mut s));
    Ok(CellResult {
        dims,
        n,
        a1,
        a2,
        a3,
        b1,
        b2,
    })
}

pub fn run(config: &BenchConfig) -> Result<Vec<CellResult>> {
    let mut out = Vec::new();
    for &d in &config.dims {
        for &n in &config.sizes {
            out.push(run_cell(config, d, n)?);
        }
    }
    Ok(out)
}

/// Milliseconds per stage, mean with the median in parentheses.
pub fn format_table(cells: &[CellResult]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>6} {:>7} | {:>19} {:>19} {:>19} | {:>19} {:>19}",
        "D", "n", "a1", "a2", "a3", "b1", "b2"
    );
    let cell = |x: &StageSummary| format!("{:.3} ({:.3})", x.mean, x.median);
    for c in cells {
        let _ = writeln!(
            s,
            "{:>6} {:>7} | {:>19} {:>19} {:>19} | {:>19} {:>19}",
            c.dims,
            c.n,
            cell(&c.a1),
            cell(&c.a2),
            cell(&c.a3),
            cell(&c.b1),
            cell(&c.b2)
        );
    }
    s
}
