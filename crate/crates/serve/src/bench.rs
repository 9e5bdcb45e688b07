//! Single-image latency benchmark.

use std::fmt;
use std::time::Instant;

use anyhow::{bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use cane_core::model::{count_macs, CostReport};
use cane_core::{ModelGraph, Tensor};

pub const MIN_RUNS: usize = 30;
pub const MIN_WARMUP: usize = 10;

/// Published figures for the ×1.0 shuffle backbone, shown for comparison only.
pub const REFERENCE_LATENCY_MS: f64 = 4.14;
pub const REFERENCE_PARAMS_M: f64 = 2.19;
pub const REFERENCE_MMACS: f64 = 152.43;
pub const REFERENCE_SIZE_MB: f64 = 9.26;

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub warmup_runs: usize,
    pub measured_runs: usize,
    pub samples_ms: Vec<f64>,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub params: u64,
    pub macs: u64,
    pub file_size_bytes: u64,
    pub cost: CostReport,
}

/// Mean, median and nearest-rank 95th percentile.
pub fn summarize(samples: &[f64]) -> (f64, f64, f64) {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let mean = s.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 };
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    (mean, median, s[rank - 1])
}

/// Times `runs` batch-1 forwards on the calling thread after `warmup` untimed ones.
pub fn run_bench(model: &ModelGraph, file_size: u64, runs: usize, warmup: usize) -> anyhow::Result<BenchReport> {
    if runs < MIN_RUNS {
        bail!("need at least {MIN_RUNS} measured runs, got {runs}");
    }
    if warmup < MIN_WARMUP {
        bail!("need at least {MIN_WARMUP} warmup runs, got {warmup}");
    }
    let size = model.config().input_size;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let input = Tensor::from_fn([1, 3, size, size], |_| rng.random_range(-2.0f32..2.0));
    for _ in 0..warmup {
        std::hint::black_box(model.forward(&input)?);
    }
    let mut samples = Vec::with_capacity(runs);
    for _ in 0..runs {
        let t = Instant::now();
        std::hint::black_box(model.forward(&input)?);
        samples.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let (mean_ms, median_ms, p95_ms) = summarize(&samples);
    let mut cost = count_macs(model, size).context("counting MACs")?;
    cost.file_size_bytes = file_size;
    Ok(BenchReport {
        warmup_runs: warmup,
        measured_runs: runs,
        min_ms: samples.iter().copied().fold(f64::INFINITY, f64::min),
        max_ms: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        samples_ms: samples,
        mean_ms,
        median_ms,
        p95_ms,
        params: cost.total_params,
        macs: cost.total_macs,
        file_size_bytes: file_size,
        cost,
    })
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "runs: {} measured, {} warmup (batch 1, one thread)", self.measured_runs, self.warmup_runs)?;
        writeln!(f, "{:<22}{:>14}{:>14}", "", "measured", "published")?;
        writeln!(f, "{:<22}{:>14.3}{:>14.2}", "mean latency (ms)", self.mean_ms, REFERENCE_LATENCY_MS)?;
        writeln!(f, "{:<22}{:>14.3}", "median latency (ms)", self.median_ms)?;
        writeln!(f, "{:<22}{:>14.3}", "p95 latency (ms)", self.p95_ms)?;
        writeln!(f, "{:<22}{:>14.3}{:>14.2}", "params (M)", self.cost.params_millions(), REFERENCE_PARAMS_M)?;
        writeln!(f, "{:<22}{:>14.2}{:>14.2}", "MACs (M)", self.cost.mmacs(), REFERENCE_MMACS)?;
        write!(f, "{:<22}{:>14.2}{:>14.2}", "file size (MB)", self.cost.file_size_mb(), REFERENCE_SIZE_MB)
    }
}
