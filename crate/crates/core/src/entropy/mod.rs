//! Metric entropy from itinerary statistics on grid partitions.
//!
//! Sampled orbits are coded by the grid cell they visit at each step. For
//! every depth `n` the empirical distribution of `n`-words gives the block
//! entropy `H_n` (with the Miller–Madow correction). The entropy rate is
//! estimated by the conditional increments `h_n = H_n - H_{n-1}`, which
//! decrease to the same limit as `H_n / n` but much faster; only depths
//! whose word distribution is adequately covered by the sample
//! (Good–Turing coverage) are used.

pub mod pesin;

use std::collections::HashMap;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{flow, Domain, IntegratorOptions, VectorField};
use crate::error::{Error, Result};
use crate::sampling::{par_map_indexed, substream};
use crate::suspension::{BaseMap, SuspensionPoint, SuspensionSystem};

pub use pesin::{pesin_report, PesinConfig, PesinReport};

/// Axis-aligned grid over a box. Points outside the box fall into the
/// outermost cells, so the cells partition all of space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionGrid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: Vec<usize>,
}

impl PartitionGrid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, resolution: Vec<usize>) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() != resolution.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: resolution.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(u > l)) || resolution.contains(&0) {
            return Err(Error::Invalid(
                "grid needs lower < upper and positive resolution".into(),
            ));
        }
        let cells = resolution
            .iter()
            .try_fold(1u64, |acc, &r| acc.checked_mul(r as u64));
        if cells.is_none_or(|c| c > u32::MAX as u64) {
            return Err(Error::Invalid("grid has too many cells".into()));
        }
        Ok(Self {
            lower,
            upper,
            resolution,
        })
    }

    pub fn unit(resolution: Vec<usize>) -> Result<Self> {
        let d = resolution.len();
        Self::new(vec![0.0; d], vec![1.0; d], resolution)
    }

    /// Grid over the bounding box of a domain.
    pub fn over(domain: &Domain, resolution: Vec<usize>) -> Result<Self> {
        if resolution.len() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                got: resolution.len(),
            });
        }
        Self::new(domain.lower.clone(), domain.upper.clone(), resolution)
    }

    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    pub fn cell_count(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn cell(&self, x: &[f64]) -> u32 {
        let mut idx = 0usize;
        for i in 0..self.dim() {
            let r = self.resolution[i];
            let u = (x[i] - self.lower[i]) / (self.upper[i] - self.lower[i]);
            let k = if u.is_nan() {
                0
            } else {
                ((u * r as f64).floor().max(0.0) as usize).min(r - 1)
            };
            idx = idx * r + k;
        }
        idx as u32
    }
}

/// A map with an invariant measure to sample from.
pub trait MapSystem: Send + Sync {
    fn dim(&self) -> usize;

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;

    fn step(&self, x: &mut Vec<f64>) -> Result<()>;
}

/// A base map of the torus acting on its own.
pub struct BaseMapSystem(pub Arc<dyn BaseMap>);

impl MapSystem for BaseMapSystem {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.0.sample_invariant(rng)
    }

    fn step(&self, x: &mut Vec<f64>) -> Result<()> {
        *x = self.0.apply(x);
        Ok(())
    }
}

/// Time-`tau` map of a flow, with normalized volume on the domain box.
pub struct FlowMap<'a> {
    pub field: &'a dyn VectorField,
    pub tau: f64,
    pub opts: IntegratorOptions,
}

impl MapSystem for FlowMap<'_> {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.field.domain().sample_uniform(rng)
    }

    fn step(&self, x: &mut Vec<f64>) -> Result<()> {
        *x = flow(self.field, x, self.tau, &self.opts)?.position;
        Ok(())
    }
}

/// Time-`tau` map of a suspension; states are `(base point, height)`.
pub struct SuspensionMap<'a> {
    pub system: &'a SuspensionSystem,
    pub tau: f64,
}

impl SuspensionMap<'_> {
    fn split(&self, x: &[f64]) -> SuspensionPoint {
        let d = self.system.base.dim();
        SuspensionPoint {
            base_point: x[..d].to_vec(),
            height: x[d],
        }
    }

    /// Unit base box times `[0, max h)`.
    pub fn grid(&self, base_resolution: usize, height_resolution: usize) -> Result<PartitionGrid> {
        let d = self.system.base.dim();
        let mut upper = vec![1.0; d];
        upper.push(self.system.ceiling.max_value());
        let mut res = vec![base_resolution; d];
        res.push(height_resolution);
        PartitionGrid::new(vec![0.0; d + 1], upper, res)
    }
}

impl MapSystem for SuspensionMap<'_> {
    fn dim(&self) -> usize {
        self.system.base.dim() + 1
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let p = self.system.sample_lifted(rng);
        let mut x = p.base_point;
        x.push(p.height);
        x
    }

    fn step(&self, x: &mut Vec<f64>) -> Result<()> {
        let p = self.system.evolve(&self.split(x), self.tau)?;
        x.clear();
        x.extend(p.base_point);
        x.push(p.height);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EntropyOptions {
    pub n_max: usize,
    pub n_orbits: usize,
    pub orbit_length: usize,
    /// Depths whose Good–Turing coverage falls below this are not used.
    pub min_coverage: f64,
    /// Orbit batches used for the standard error.
    pub batches: usize,
}

impl Default for EntropyOptions {
    fn default() -> Self {
        Self {
            n_max: 10,
            n_orbits: 1000,
            orbit_length: 1000,
            min_coverage: 0.95,
            batches: 8,
        }
    }
}

impl EntropyOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 || self.n_orbits == 0 || self.orbit_length < self.n_max {
            return Err(Error::Invalid(
                "need n_max >= 1, n_orbits >= 1 and orbit_length >= n_max".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.min_coverage) {
            return Err(Error::Invalid("min_coverage must lie in [0, 1]".into()));
        }
        if self.batches < 2 || self.batches > self.n_orbits {
            return Err(Error::Invalid("batches must lie in [2, n_orbits]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthDiagnostic {
    pub n: usize,
    /// Miller–Madow corrected block entropy.
    pub h_block: f64,
    pub h_per_symbol: f64,
    pub increment: f64,
    pub occupied_cells: usize,
    pub samples: usize,
    pub coverage: f64,
    pub resolved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMethod {
    PartitionRefinement,
    AbramovTransfer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    /// Nats per map step (per unit time for flow estimates).
    pub value: f64,
    pub stderr: f64,
    /// Size of the still-decreasing part of the increment sequence plus the
    /// Miller–Madow term at the chosen depth.
    pub bias_bound: f64,
    /// Depth at which the minimum increment was attained.
    pub n_depth: usize,
    pub n_resolved: usize,
    pub n_orbits: usize,
    pub orbit_length: usize,
    pub time_step: f64,
    pub resolution: Vec<usize>,
    pub diagnostics: Vec<DepthDiagnostic>,
    pub method: EntropyMethod,
}

/// Interns `(prefix id, symbol)` pairs into dense ids in first-seen order.
struct WordTable {
    ids: HashMap<u64, u32>,
    counts: Vec<Vec<u64>>,
}

impl WordTable {
    fn new(batches: usize) -> Self {
        Self {
            ids: HashMap::new(),
            counts: vec![Vec::new(); batches],
        }
    }

    fn add(&mut self, prefix: u32, symbol: u32, batch: usize) -> u32 {
        let key = ((prefix as u64) << 32) | symbol as u64;
        let next = self.ids.len() as u32;
        let id = *self.ids.entry(key).or_insert(next);
        if id == next {
            for c in &mut self.counts {
                c.push(0);
            }
        }
        self.counts[batch][id as usize] += 1;
        id
    }

    fn totals(&self) -> Vec<u64> {
        let mut t = vec![0u64; self.ids.len()];
        for c in &self.counts {
            for (a, b) in t.iter_mut().zip(c) {
                *a += b;
            }
        }
        t
    }
}

struct BlockStats {
    entropy: f64,
    occupied: usize,
    samples: u64,
    coverage: f64,
}

fn block_stats(counts: &[u64]) -> BlockStats {
    let samples: u64 = counts.iter().sum();
    let occupied = counts.iter().filter(|&&c| c > 0).count();
    let singletons = counts.iter().filter(|&&c| c == 1).count();
    if samples == 0 {
        return BlockStats {
            entropy: 0.0,
            occupied: 0,
            samples: 0,
            coverage: 0.0,
        };
    }
    let n = samples as f64;
    let plug_in: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    BlockStats {
        entropy: plug_in + (occupied as f64 - 1.0) / (2.0 * n),
        occupied,
        samples,
        coverage: 1.0 - singletons as f64 / n,
    }
}

/// Cell itineraries of sampled orbits, orbit `i` from substream `i`.
fn itineraries(
    map: &dyn MapSystem,
    grid: &PartitionGrid,
    opts: &EntropyOptions,
    seed: u64,
) -> Result<Vec<Vec<u32>>> {
    par_map_indexed(opts.n_orbits, |i| {
        let mut rng = substream(seed, i as u64);
        let mut x = map.sample(&mut rng);
        let mut symbols = Vec::with_capacity(opts.orbit_length);
        for k in 0..opts.orbit_length {
            symbols.push(grid.cell(&x));
            if k + 1 < opts.orbit_length {
                map.step(&mut x)?;
            }
        }
        Ok(symbols)
    })
    .into_iter()
    .collect()
}

/// Entropy of `map` with respect to the refinements of `grid`.
pub fn refined_entropy(
    map: &dyn MapSystem,
    grid: &PartitionGrid,
    opts: &EntropyOptions,
    seed: u64,
) -> Result<EntropyEstimate> {
    opts.validate()?;
    if grid.dim() != map.dim() {
        return Err(Error::DimensionMismatch {
            expected: map.dim(),
            got: grid.dim(),
        });
    }
    let orbits = itineraries(map, grid, opts, seed)?;
    let b = opts.batches;
    let mut diagnostics = Vec::with_capacity(opts.n_max);
    let mut batch_blocks: Vec<Vec<f64>> = Vec::with_capacity(opts.n_max);
    // ids[i][k]: id of the word of the current depth starting at step k of orbit i
    let mut ids: Vec<Vec<u32>> = orbits.iter().map(|_| Vec::new()).collect();
    let mut prev_h = 0.0;
    let mut resolved_so_far = true;
    for n in 1..=opts.n_max {
        let mut table = WordTable::new(b);
        for (i, orbit) in orbits.iter().enumerate() {
            let windows = orbit.len() + 1 - n;
            let prefixes = &mut ids[i];
            for k in 0..windows {
                let prefix = if n == 1 { u32::MAX } else { prefixes[k] };
                let id = table.add(prefix, orbit[k + n - 1], i % b);
                if n == 1 {
                    prefixes.push(id);
                } else {
                    prefixes[k] = id;
                }
            }
            prefixes.truncate(windows);
        }
        let total = block_stats(&table.totals());
        if n == 1 && (total.samples as f64) < 10.0 * total.occupied as f64 {
            return Err(Error::InsufficientSamples {
                samples: total.samples as usize,
                occupied: total.occupied,
            });
        }
        batch_blocks.push(
            table
                .counts
                .iter()
                .map(|c| block_stats(c).entropy)
                .collect(),
        );
        resolved_so_far = resolved_so_far && total.coverage >= opts.min_coverage;
        diagnostics.push(DepthDiagnostic {
            n,
            h_block: total.entropy,
            h_per_symbol: total.entropy / n as f64,
            increment: total.entropy - prev_h,
            occupied_cells: total.occupied,
            samples: total.samples as usize,
            coverage: total.coverage,
            resolved: resolved_so_far || n == 1,
        });
        prev_h = total.entropy;
    }

    let resolved: Vec<&DepthDiagnostic> = diagnostics.iter().filter(|d| d.resolved).collect();
    let best = resolved
        .iter()
        .min_by(|a, c| {
            a.increment
                .partial_cmp(&c.increment)
                .unwrap()
                .then(a.n.cmp(&c.n))
        })
        .expect("depth 1 is always used");
    let n_depth = best.n;
    let n_last = resolved.len();
    let half = diagnostics[n_last.div_ceil(2) - 1].increment;
    let mm = (best.occupied_cells as f64 - 1.0) / (2.0 * best.samples as f64);
    let bias_bound = (half - diagnostics[n_last - 1].increment).max(0.0) + mm;

    let batch_increments: Vec<f64> = (0..b)
        .map(|j| {
            let prev = if n_depth > 1 {
                batch_blocks[n_depth - 2][j]
            } else {
                0.0
            };
            batch_blocks[n_depth - 1][j] - prev
        })
        .collect();
    let mean = batch_increments.iter().sum::<f64>() / b as f64;
    let var = batch_increments
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / (b - 1) as f64;

    Ok(EntropyEstimate {
        value: best.increment.max(0.0),
        stderr: (var / b as f64).sqrt(),
        bias_bound,
        n_depth,
        n_resolved: n_last,
        n_orbits: opts.n_orbits,
        orbit_length: opts.orbit_length,
        time_step: 1.0,
        resolution: grid.resolution.clone(),
        diagnostics,
        method: EntropyMethod::PartitionRefinement,
    })
}

fn per_unit_time(mut e: EntropyEstimate, tau: f64) -> EntropyEstimate {
    e.value /= tau;
    e.stderr /= tau;
    e.bias_bound /= tau;
    e.time_step = tau;
    e
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!(
            "time_step must be positive, got {tau}"
        )))
    }
}

/// Entropy per unit time of a flow, from its time-`tau` map.
pub fn flow_entropy(
    field: &dyn VectorField,
    grid: &PartitionGrid,
    tau: f64,
    opts: &EntropyOptions,
    seed: u64,
    integrator: &IntegratorOptions,
) -> Result<EntropyEstimate> {
    check_tau(tau)?;
    let map = FlowMap {
        field,
        tau,
        opts: *integrator,
    };
    Ok(per_unit_time(refined_entropy(&map, grid, opts, seed)?, tau))
}

/// Entropy per unit time of a suspension flow, from its time-`tau` map.
pub fn suspension_entropy(
    system: &SuspensionSystem,
    grid: &PartitionGrid,
    tau: f64,
    opts: &EntropyOptions,
    seed: u64,
) -> Result<EntropyEstimate> {
    check_tau(tau)?;
    let map = SuspensionMap { system, tau };
    Ok(per_unit_time(refined_entropy(&map, grid, opts, seed)?, tau))
}

/// Base entropy transferred through the mean ceiling.
pub fn abramov_estimate(system: &SuspensionSystem, base: &EntropyEstimate) -> EntropyEstimate {
    let mut e = base.clone();
    e.value = system.abramov_check(base.value);
    e.stderr = base.stderr / system.integral;
    e.bias_bound = base.bias_bound / system.integral;
    e.method = EntropyMethod::AbramovTransfer;
    e
}
