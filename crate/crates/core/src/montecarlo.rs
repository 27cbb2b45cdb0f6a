//! Seeded Monte-Carlo engine over i.i.d. Nakagami-m gain vectors.
//!
//! Draws are split into fixed-size chunks, each driven by its own ChaCha
//! stream (`seed`, stream id = chunk index). Chunks may run on any number of
//! workers; their single-pass accumulators are merged in chunk order, so
//! the estimate depends only on `(seed, n, k)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{FadingModel, GainSampler};
use crate::error::{Error, Result};

pub const DEFAULT_SAMPLES: usize = 100_000;
pub const DEFAULT_SEED: u64 = 42;
/// Draws at or below this gain are rejected and redrawn.
pub const GAIN_FLOOR: f64 = 1e-10;
/// Largest tolerated fraction of failing realizations.
pub const MAX_FAILURE_RATE: f64 = 1e-3;
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Quadrature,
    MonteCarlo,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Quadrature => "quadrature",
            Method::MonteCarlo => "monte-carlo",
        }
    }
}

/// Average transmission delay with its error estimate.
///
/// For quadrature `std_error` holds the absolute error estimate and
/// `samples` the number of integrand evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayStats {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
    pub failures: usize,
    pub method: Method,
}

impl DelayStats {
    pub fn from_quadrature(value: f64, abs_error: f64, evaluations: usize) -> Self {
        Self {
            mean: value,
            std_error: abs_error,
            samples: evaluations,
            failures: 0,
            method: Method::Quadrature,
        }
    }
}

/// Streaming mean / variance (Welford), mergeable with Chan's update.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let var = self.m2 / (self.count - 1) as f64;
        (var.max(0.0) / self.count as f64).sqrt()
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn chunk_count(n: usize) -> usize {
    n.div_ceil(CHUNK)
}

fn chunk_len(n: usize, chunk: usize) -> usize {
    CHUNK.min(n - chunk * CHUNK)
}

/// Fill `out` with `k` gains per draw for one chunk.
fn draw_chunk(sampler: &GainSampler, seed: u64, chunk: usize, len: usize, k: usize, out: &mut Vec<f64>) {
    let mut rng = chunk_rng(seed, chunk);
    out.clear();
    out.extend((0..len * k).map(|_| sampler.sample_above(&mut rng, GAIN_FLOOR).value()));
}

/// Fixed panel of gain vectors, row-major with `k` gains per row.
#[derive(Debug, Clone, PartialEq)]
pub struct GainPanel {
    pub k: usize,
    pub gains: Vec<f64>,
}

impl GainPanel {
    /// The panel [`estimate`] would stream for the same arguments.
    pub fn draw(fading: &FadingModel, k: usize, n: usize, seed: u64) -> Self {
        let sampler = GainSampler::new(fading);
        let mut gains = Vec::with_capacity(n * k);
        let mut buf = Vec::new();
        for chunk in 0..chunk_count(n) {
            draw_chunk(&sampler, seed, chunk, chunk_len(n, chunk), k, &mut buf);
            gains.extend_from_slice(&buf);
        }
        Self { k, gains }
    }

    pub fn len(&self) -> usize {
        self.gains.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.gains[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.gains.chunks_exact(self.k)
    }
}

struct ChunkOutcome {
    acc: Accumulator,
    failures: usize,
    first_error: Option<Error>,
}

fn finish(outcomes: Vec<ChunkOutcome>, n: usize) -> Result<DelayStats> {
    let mut acc = Accumulator::default();
    let mut failures = 0;
    let mut first = None;
    for o in outcomes {
        acc.merge(&o.acc);
        failures += o.failures;
        if first.is_none() {
            first = o.first_error;
        }
    }
    if failures as f64 > MAX_FAILURE_RATE * n as f64 || acc.count() == 0 {
        return Err(Error::FailureRate {
            failed: failures,
            total: n,
            first: first.map(|e| e.to_string()).unwrap_or_default(),
        });
    }
    Ok(DelayStats {
        mean: acc.mean(),
        std_error: acc.std_error(),
        samples: acc.count(),
        failures,
        method: Method::MonteCarlo,
    })
}

/// Sample mean and standard error of `f` over `n` draws of `k` independent
/// unit-mean gains. Failing realizations are tallied; more than 0.1% of
/// failures aborts the run.
pub fn estimate<F>(f: F, fading: &FadingModel, k_nodes: usize, n: usize, seed: u64) -> Result<DelayStats>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if n < 2 || k_nodes == 0 {
        return Err(Error::InvalidParams(format!(
            "Monte-Carlo needs n >= 2 and k >= 1 (n = {n}, k = {k_nodes})"
        )));
    }
    let sampler = GainSampler::new(fading);
    let outcomes: Vec<ChunkOutcome> = (0..chunk_count(n))
        .into_par_iter()
        .map(|chunk| {
            let mut buf = Vec::new();
            draw_chunk(&sampler, seed, chunk, chunk_len(n, chunk), k_nodes, &mut buf);
            evaluate_rows(&f, buf.chunks_exact(k_nodes))
        })
        .collect();
    finish(outcomes, n)
}

/// Same estimator over a fixed panel (common random numbers).
pub fn estimate_on_panel<F>(f: F, panel: &GainPanel) -> Result<DelayStats>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let n = panel.len();
    let outcomes: Vec<ChunkOutcome> = (0..chunk_count(n))
        .into_par_iter()
        .map(|chunk| {
            let start = chunk * CHUNK * panel.k;
            let end = start + chunk_len(n, chunk) * panel.k;
            evaluate_rows(&f, panel.gains[start..end].chunks_exact(panel.k))
        })
        .collect();
    finish(outcomes, n)
}

fn evaluate_rows<'a, F, I>(f: &F, rows: I) -> ChunkOutcome
where
    F: Fn(&[f64]) -> Result<f64>,
    I: Iterator<Item = &'a [f64]>,
{
    let mut acc = Accumulator::default();
    let mut failures = 0;
    let mut first_error = None;
    for row in rows {
        match f(row) {
            Ok(v) if v.is_finite() => acc.push(v),
            Ok(v) => {
                failures += 1;
                first_error.get_or_insert(Error::Domain(format!("non-finite sample {v}")));
            }
            Err(e) => {
                failures += 1;
                first_error.get_or_insert(e);
            }
        }
    }
    ChunkOutcome {
        acc,
        failures,
        first_error,
    }
}
