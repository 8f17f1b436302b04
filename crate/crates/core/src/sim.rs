//! Monte Carlo engine.
//!
//! One ball per time step lands on a uniformly chosen cell of a periodic
//! ring. An empty cell is filled with probability `nu`; an occupied cell in a
//! cluster of size `i` empties the whole cluster with probability
//! `min(1, mu_i)`. Scattered balls still consume their step.
//!
//! Every step draws exactly one cell index and then one uniform `f64`, in
//! that order, from a ChaCha8 generator seeded with `seed_from_u64(seed)`.
//! Replica `r` of an ensemble uses stream `r` of the same seed, so runs are
//! replayable from `(seed, stream, steps, burn_in, sample_every)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Generator identifier recorded in every [`SimStats`].
pub const RNG_ALGORITHM: &str = "ChaCha8Rng/rand_chacha-0.9/seed_from_u64+stream";

pub const DEFAULT_BATCHES: usize = 32;

pub fn new_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Occupancy of a ring of `N` cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeState {
    cells: Vec<bool>,
    occupied: usize,
}

/// Maximal occupied run: `len` cells starting at `start`, wrapping around.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClusterBounds {
    pub start: usize,
    pub len: usize,
}

impl ClusterBounds {
    pub fn contains(&self, pos: usize, ring: usize) -> bool {
        (pos + ring - self.start) % ring < self.len
    }
}

impl LatticeState {
    pub fn empty(n: usize) -> Self {
        Self { cells: vec![false; n], occupied: 0 }
    }

    pub fn from_cells(cells: Vec<bool>) -> Self {
        let occupied = cells.iter().filter(|&&c| c).count();
        Self { cells, occupied }
    }

    /// Parses `#`/`1` as occupied and `.`/`_`/`0` as empty.
    pub fn from_pattern(pattern: &str) -> Self {
        Self::from_cells(pattern.chars().filter(|c| !c.is_whitespace()).map(|c| matches!(c, '#' | '1')).collect())
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn is_occupied(&self, pos: usize) -> bool {
        self.cells[pos]
    }

    pub fn density(&self) -> f64 {
        self.occupied as f64 / self.cells.len() as f64
    }

    fn fill(&mut self, pos: usize) {
        debug_assert!(!self.cells[pos]);
        self.cells[pos] = true;
        self.occupied += 1;
    }

    fn clear(&mut self, bounds: ClusterBounds) {
        let n = self.cells.len();
        for k in 0..bounds.len {
            self.cells[(bounds.start + k) % n] = false;
        }
        self.occupied -= bounds.len;
        debug_assert_eq!(self.occupied, self.cells.iter().filter(|&&c| c).count());
    }

    /// Maximal occupied run through `pos`; the whole ring when fully occupied.
    pub fn find_cluster(&self, pos: usize) -> Result<ClusterBounds> {
        let n = self.cells.len();
        if !self.cells[pos] {
            return Err(Error::EmptyCell(pos));
        }
        if self.occupied == n {
            return Ok(ClusterBounds { start: 0, len: n });
        }
        let mut left = 0;
        while self.cells[(pos + n - left - 1) % n] {
            left += 1;
        }
        let mut right = 0;
        while self.cells[(pos + right + 1) % n] {
            right += 1;
        }
        Ok(ClusterBounds { start: (pos + n - left) % n, len: left + right + 1 })
    }

    /// Calls `visit(len, occupied)` for every maximal run on the ring.
    pub fn for_each_run(&self, mut visit: impl FnMut(usize, bool)) {
        let n = self.cells.len();
        if self.occupied == 0 || self.occupied == n {
            visit(n, self.occupied == n);
            return;
        }
        // start right after a boundary so no run straddles the scan origin
        let origin = (0..n).find(|&k| self.cells[k] != self.cells[(k + n - 1) % n]).expect("mixed ring has a boundary");
        let mut current = self.cells[origin];
        let mut len = 0;
        for k in 0..n {
            let cell = self.cells[(origin + k) % n];
            if cell == current {
                len += 1;
            } else {
                visit(len, current);
                current = cell;
                len = 1;
            }
        }
        visit(len, current);
    }

    /// Sizes of the occupied clusters.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_run(|len, occupied| {
            if occupied {
                out.push(len);
            }
        });
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepEvent {
    DepositAccepted,
    DepositScattered,
    TriggerScattered { cluster_size: usize },
    Avalanche { size: usize, cluster_size_before: usize },
}

pub fn step<R: Rng + ?Sized>(state: &mut LatticeState, params: &ModelParams, rng: &mut R) -> StepEvent {
    let pos = rng.random_range(0..state.len());
    let u: f64 = rng.random();
    if !state.is_occupied(pos) {
        if u < params.nu() {
            state.fill(pos);
            StepEvent::DepositAccepted
        } else {
            StepEvent::DepositScattered
        }
    } else {
        let bounds = state.find_cluster(pos).expect("cell checked occupied");
        if u < params.mu_of(bounds.len) {
            state.clear(bounds);
            StepEvent::Avalanche { size: bounds.len, cluster_size_before: bounds.len }
        } else {
            StepEvent::TriggerScattered { cluster_size: bounds.len }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Total steps, burn-in included.
    pub steps: u64,
    pub burn_in: u64,
    pub sample_every: u64,
    pub batches: usize,
}

impl SimConfig {
    pub fn new(steps: u64, burn_in: u64, sample_every: u64) -> Self {
        Self { steps, burn_in, sample_every, batches: DEFAULT_BATCHES }
    }

    /// Burn-in of `10 N / nu` steps and sampling every `N / 10` steps.
    pub fn with_defaults(params: &ModelParams, sampled_steps: u64) -> Self {
        let n = params.lattice_size() as f64;
        let burn_in = (10.0 * n / params.nu()).ceil() as u64;
        let sample_every = (params.lattice_size() as u64 / 10).max(1);
        Self::new(burn_in + sampled_steps, burn_in, sample_every)
    }

    pub fn samples(&self) -> u64 {
        self.steps.saturating_sub(self.burn_in) / self.sample_every.max(1)
    }

    fn validate(&self) -> Result<()> {
        if self.steps <= self.burn_in {
            return Err(Error::Domain(format!("steps ({}) must exceed burn_in ({})", self.steps, self.burn_in)));
        }
        if self.sample_every == 0 {
            return Err(Error::Domain("sample_every must be at least 1".into()));
        }
        if self.batches == 0 {
            return Err(Error::Domain("batches must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sums over the samples of one contiguous batch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub samples: u64,
    /// `cluster_hist[i - 1]` = clusters of size `i` summed over samples.
    pub cluster_hist: Vec<u64>,
    pub empty_singletons: u64,
    pub occupied: u64,
}

impl Batch {
    fn merge(&mut self, other: &Batch) {
        self.samples += other.samples;
        add_hist(&mut self.cluster_hist, &other.cluster_hist);
        self.empty_singletons += other.empty_singletons;
        self.occupied += other.occupied;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub deposit_accepted: u64,
    pub deposit_scattered: u64,
    pub trigger_scattered: u64,
    pub avalanches: u64,
}

/// Post-burn-in statistics of one run or a merged ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub params: ModelParams,
    pub config: SimConfig,
    pub rng: String,
    /// Streams merged into these statistics.
    pub streams: Vec<u64>,
    pub samples: u64,
    /// Clusters of size `i` summed over all samples, at index `i - 1`.
    pub cluster_hist: Vec<u64>,
    /// Isolated empty cells summed over all samples.
    pub empty_singletons: u64,
    /// Avalanches of size `i` over all post-burn-in steps, at index `i - 1`.
    pub avalanche_hist: Vec<u64>,
    pub events: EventCounts,
    /// Density at every sample.
    pub density_trace: Vec<f64>,
    pub batches: Vec<Batch>,
}

fn add_hist(into: &mut Vec<u64>, from: &[u64]) {
    if into.len() < from.len() {
        into.resize(from.len(), 0);
    }
    for (a, b) in into.iter_mut().zip(from) {
        *a += b;
    }
}

fn bump(hist: &mut Vec<u64>, size: usize) {
    if hist.len() < size {
        hist.resize(size, 0);
    }
    hist[size - 1] += 1;
}

impl SimStats {
    /// Time-averaged `n_i`, index `i - 1`.
    pub fn n_hat(&self) -> Vec<f64> {
        self.cluster_hist.iter().map(|&c| c as f64 / self.samples as f64).collect()
    }

    pub fn mean_density(&self) -> f64 {
        self.density_trace.iter().sum::<f64>() / self.density_trace.len() as f64
    }

    /// Sums another run into this one. Batches merge pairwise, so both runs
    /// must use the same configuration.
    pub fn merge(&mut self, other: &SimStats) -> Result<()> {
        if self.config != other.config || self.params.with_seed(0) != other.params.with_seed(0) {
            return Err(Error::Incompatible("cannot merge runs with different parameters".into()));
        }
        self.streams.extend(&other.streams);
        self.samples += other.samples;
        add_hist(&mut self.cluster_hist, &other.cluster_hist);
        self.empty_singletons += other.empty_singletons;
        add_hist(&mut self.avalanche_hist, &other.avalanche_hist);
        self.events.deposit_accepted += other.events.deposit_accepted;
        self.events.deposit_scattered += other.events.deposit_scattered;
        self.events.trigger_scattered += other.events.trigger_scattered;
        self.events.avalanches += other.events.avalanches;
        self.density_trace.extend(&other.density_trace);
        for (a, b) in self.batches.iter_mut().zip(&other.batches) {
            a.merge(b);
        }
        Ok(())
    }
}

/// Runs one replica from an empty lattice.
pub fn run(params: &ModelParams, steps: u64, burn_in: u64, sample_every: u64) -> Result<SimStats> {
    run_with(params, &SimConfig::new(steps, burn_in, sample_every), 0)
}

pub fn run_with(params: &ModelParams, config: &SimConfig, stream: u64) -> Result<SimStats> {
    config.validate()?;
    let mut rng = new_rng(params.seed(), stream);
    let mut state = LatticeState::empty(params.lattice_size());
    let n = params.lattice_size();
    let total_samples = config.samples();
    let batch_count = config.batches as u64;

    let mut stats = SimStats {
        params: *params,
        config: *config,
        rng: RNG_ALGORITHM.to_string(),
        streams: vec![stream],
        samples: 0,
        cluster_hist: Vec::new(),
        empty_singletons: 0,
        avalanche_hist: Vec::new(),
        events: EventCounts::default(),
        density_trace: Vec::with_capacity(total_samples as usize),
        batches: vec![Batch::default(); config.batches],
    };

    for _ in 0..config.burn_in {
        step(&mut state, params, &mut rng);
    }
    for t in 1..=(config.steps - config.burn_in) {
        match step(&mut state, params, &mut rng) {
            StepEvent::DepositAccepted => stats.events.deposit_accepted += 1,
            StepEvent::DepositScattered => stats.events.deposit_scattered += 1,
            StepEvent::TriggerScattered { .. } => stats.events.trigger_scattered += 1,
            StepEvent::Avalanche { size, .. } => {
                stats.events.avalanches += 1;
                bump(&mut stats.avalanche_hist, size);
            }
        }
        if t % config.sample_every == 0 {
            let index = stats.samples;
            let batch = &mut stats.batches[(index * batch_count / total_samples) as usize];
            batch.samples += 1;
            batch.occupied += state.occupied_count() as u64;
            state.for_each_run(|len, occupied| {
                if occupied {
                    bump(&mut batch.cluster_hist, len);
                } else if len == 1 {
                    batch.empty_singletons += 1;
                }
            });
            stats.density_trace.push(state.occupied_count() as f64 / n as f64);
            stats.samples += 1;
        }
    }
    for batch in &stats.batches {
        add_hist(&mut stats.cluster_hist, &batch.cluster_hist);
        stats.empty_singletons += batch.empty_singletons;
    }
    Ok(stats)
}

/// Runs `replicas` independent streams in parallel and merges them.
/// `threads` caps the worker count; `None` uses the global pool.
pub fn run_ensemble(
    params: &ModelParams,
    config: &SimConfig,
    replicas: u64,
    threads: Option<usize>,
) -> Result<SimStats> {
    if replicas == 0 {
        return Err(Error::Domain("at least one replica is required".into()));
    }
    let work = || (0..replicas).into_par_iter().map(|r| run_with(params, config, r)).collect::<Result<Vec<_>>>();
    let runs = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::Domain(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let mut iter = runs.into_iter();
    let mut merged = iter.next().expect("replicas >= 1");
    for r in iter {
        merged.merge(&r)?;
    }
    Ok(merged)
}

/// Time-averaged cluster distribution with batch-means standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    #[serde(rename = "N")]
    pub lattice_size: usize,
    pub samples: u64,
    /// `n_hat[i - 1]` estimates `n_i`.
    pub n_hat: Vec<f64>,
    pub stderr: Vec<f64>,
    pub rho_hat: f64,
    pub rho_stderr: f64,
    pub n1_empty_hat: f64,
}

fn batch_stderr(means: &[f64]) -> f64 {
    let b = means.len() as f64;
    let mean = means.iter().sum::<f64>() / b;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

pub fn measure(stats: &SimStats) -> Result<EmpiricalDistribution> {
    if stats.samples < 2 {
        return Err(Error::InsufficientSamples(format!("{} samples, need at least 2", stats.samples)));
    }
    if stats.batches.len() < 2 || stats.batches.iter().any(|b| b.samples == 0) {
        return Err(Error::InsufficientSamples(format!(
            "{} samples cannot fill {} batches",
            stats.samples,
            stats.batches.len()
        )));
    }
    let n = stats.params.lattice_size() as f64;
    let samples = stats.samples as f64;
    let n_hat = stats.n_hat();
    let stderr = (0..n_hat.len())
        .map(|k| {
            let means: Vec<f64> = stats
                .batches
                .iter()
                .map(|b| b.cluster_hist.get(k).copied().unwrap_or(0) as f64 / b.samples as f64)
                .collect();
            batch_stderr(&means)
        })
        .collect();
    let density_means: Vec<f64> = stats.batches.iter().map(|b| b.occupied as f64 / b.samples as f64 / n).collect();
    let occupied: u64 = stats.batches.iter().map(|b| b.occupied).sum();
    Ok(EmpiricalDistribution {
        lattice_size: stats.params.lattice_size(),
        samples: stats.samples,
        n_hat,
        stderr,
        rho_hat: occupied as f64 / samples / n,
        rho_stderr: batch_stderr(&density_means),
        n1_empty_hat: stats.empty_singletons as f64 / samples,
    })
}
