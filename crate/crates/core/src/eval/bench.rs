use std::time::Instant;

use crate::error::{Error, Result};
use crate::models::DescriptorNet;
use crate::par::Execution;
use crate::preprocess::VoxelizedSegment;

#[derive(Clone, Debug, PartialEq)]
pub struct Throughput {
    /// Median over repetitions of segments per wall-clock second.
    pub segments_per_second: f64,
    pub min: f64,
    pub max: f64,
    /// Median absolute deviation relative to the median.
    pub relative_spread: f64,
    pub repetitions: usize,
    pub batch: usize,
    pub parallel: bool,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Times descriptor extraction of `batch`, after one untimed warm-up pass.
pub fn throughput_bench(
    net: &DescriptorNet,
    batch: &[VoxelizedSegment],
    repetitions: usize,
    exec: Execution,
) -> Result<Throughput> {
    if batch.is_empty() {
        return Err(Error::NoEligibleEntries("throughput batch"));
    }
    let repetitions = repetitions.max(1);
    net.describe_batch(exec, batch)?;
    let mut rates = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let t = Instant::now();
        let out = net.describe_batch(exec, batch)?;
        std::hint::black_box(&out);
        let secs = t.elapsed().as_secs_f64().max(1e-9);
        rates.push(batch.len() as f64 / secs);
    }
    rates.sort_by(f64::total_cmp);
    let med = median(&rates);
    let mut dev: Vec<f64> = rates.iter().map(|r| (r - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    Ok(Throughput {
        segments_per_second: med,
        min: rates[0],
        max: rates[rates.len() - 1],
        relative_spread: median(&dev) / med,
        repetitions,
        batch: batch.len(),
        parallel: exec.is_parallel(),
    })
}
