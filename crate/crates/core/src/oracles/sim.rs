//! Event-driven simulation of the processor-sharing queue with batch arrivals.
//!
//! Under processor sharing every job receives service at rate `1 / N(t)`.
//! Tracking the attained service of a permanently present job ("virtual
//! time") turns each departure into a fixed threshold, so the jobs sit in a
//! heap keyed by `virtual arrival + work`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1, Geometric};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::BatchDistribution;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimConfig {
    /// Batches recorded over all replications.
    pub batches: usize,
    pub replications: usize,
    /// Fraction of each replication discarded as warm-up.
    pub warmup_fraction: f64,
    /// Groups for the batch-means standard error.
    pub groups: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            batches: 1_000_000,
            replications: 4,
            warmup_fraction: 0.1,
            groups: 100,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationResult {
    pub seed: u64,
    pub recorded: usize,
    pub mean: f64,
    pub mean_se: f64,
    pub xs: Vec<f64>,
    pub survival: Vec<f64>,
    pub survival_se: Vec<f64>,
    /// Fraction of batches finding `n` customers, `n < occupancy.len()`.
    pub occupancy: Vec<f64>,
    pub occupancy_se: Vec<f64>,
}

/// Occupancy levels reported in the arrival histogram.
pub const OCCUPANCY_LEVELS: usize = 16;

#[derive(PartialEq)]
struct Job {
    finish: f64,
    batch: usize,
}

impl Eq for Job {}

impl Ord for Job {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on the finishing virtual time.
        other.finish.total_cmp(&self.finish).then(other.batch.cmp(&self.batch))
    }
}

impl PartialOrd for Job {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

enum BatchSampler {
    Geometric(Geometric),
    Explicit(WeightedIndex<f64>),
}

impl BatchSampler {
    fn new(batch: &BatchDistribution) -> Result<Self> {
        batch.validate(1e-9)?;
        Ok(match batch {
            BatchDistribution::Geometric { q } => BatchSampler::Geometric(
                Geometric::new(1.0 - q).map_err(|e| Error::InvalidDistribution(e.to_string()))?,
            ),
            BatchDistribution::Explicit { probs } => BatchSampler::Explicit(
                WeightedIndex::new(probs.iter().copied()).map_err(|e| Error::InvalidDistribution(e.to_string()))?,
            ),
        })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        match self {
            BatchSampler::Geometric(g) => g.sample(rng) as usize + 1,
            BatchSampler::Explicit(w) => w.sample(rng) + 1,
        }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Processor-sharing system state in virtual time.
struct System {
    t: f64,
    v: f64,
    heap: BinaryHeap<Job>,
}

impl System {
    fn new() -> Self {
        System {
            t: 0.0,
            v: 0.0,
            heap: BinaryHeap::new(),
        }
    }

    fn add(&mut self, work: f64, batch: usize) {
        self.heap.push(Job {
            finish: self.v + work,
            batch,
        });
    }

    /// Real time of the next departure.
    fn next_departure(&self) -> f64 {
        match self.heap.peek() {
            Some(j) => self.t + (j.finish - self.v) * self.heap.len() as f64,
            None => f64::INFINITY,
        }
    }

    fn advance(&mut self, to: f64) {
        let n = self.heap.len();
        if n > 0 {
            self.v += (to - self.t) / n as f64;
        }
        self.t = to;
    }

    fn depart(&mut self) -> usize {
        let j = self.heap.pop().expect("departure from an empty system");
        self.t = self.next_time_of(&j);
        self.v = j.finish;
        j.batch
    }

    fn next_time_of(&self, j: &Job) -> f64 {
        self.t + (j.finish - self.v) * (self.heap.len() + 1) as f64
    }
}

fn run_replication(
    rho: f64,
    sampler: &BatchSampler,
    warmup: usize,
    record: usize,
    seed: u64,
    stream: u64,
) -> Vec<(f64, usize)> {
    let mut rng = rng_for(seed, stream);
    let inter = Exp::new(rho).expect("positive rate");
    let mut sys = System::new();
    let total = warmup + record;
    let mut arrival_time: Vec<f64> = Vec::with_capacity(total);
    let mut remaining: Vec<u32> = Vec::with_capacity(total);
    let mut sojourn = vec![(f64::NAN, 0usize); record];
    let mut pending = record;
    let mut next_arrival = inter.sample(&mut rng);
    while pending > 0 {
        if next_arrival <= sys.next_departure() {
            sys.advance(next_arrival);
            let size = sampler.sample(&mut rng);
            let id = arrival_time.len();
            if id >= warmup && id < total {
                sojourn[id - warmup].1 = sys.heap.len();
            }
            arrival_time.push(next_arrival);
            remaining.push(size as u32);
            for _ in 0..size {
                let w: f64 = Exp1.sample(&mut rng);
                sys.add(w, id);
            }
            next_arrival += inter.sample(&mut rng);
        } else {
            let id = sys.depart();
            remaining[id] -= 1;
            if remaining[id] == 0 && id >= warmup && id < total {
                sojourn[id - warmup].0 = sys.t - arrival_time[id];
                pending -= 1;
            }
        }
    }
    sojourn
}

fn summarise(seed: u64, samples: &[(f64, usize)], xs: &[f64], groups: usize) -> SimulationResult {
    let groups = groups.clamp(2, samples.len().max(2));
    let size = samples.len() / groups;
    let stat = |f: &dyn Fn(&(f64, usize)) -> f64| -> (f64, f64) {
        let means: Vec<f64> = (0..groups)
            .map(|g| samples[g * size..(g + 1) * size].iter().map(f).sum::<f64>() / size as f64)
            .collect();
        let m = means.iter().sum::<f64>() / groups as f64;
        let var = means.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (groups - 1) as f64;
        (m, (var / groups as f64).sqrt())
    };
    let (mean, mean_se) = stat(&|v| v.0);
    let (survival, survival_se) = xs
        .iter()
        .map(|&x| stat(&move |v| if v.0 > x { 1.0 } else { 0.0 }))
        .unzip();
    let (occupancy, occupancy_se) = (0..OCCUPANCY_LEVELS)
        .map(|n| stat(&move |v| if v.1 == n { 1.0 } else { 0.0 }))
        .unzip();
    SimulationResult {
        seed,
        recorded: groups * size,
        mean,
        mean_se,
        xs: xs.to_vec(),
        survival,
        survival_se,
        occupancy,
        occupancy_se,
    }
}

/// Stationary batch sojourn time: mean and survival at `xs`, with
/// batch-means standard errors.
pub fn simulate(rho: f64, batch: &BatchDistribution, xs: &[f64], cfg: &SimConfig) -> Result<SimulationResult> {
    if !(rho > 0.0) || rho * batch.mean() >= 1.0 {
        return Err(Error::InvalidParameter("simulation requires a stable load".into()));
    }
    if cfg.replications == 0 || cfg.batches < cfg.replications * 2 || !(0.0..1.0).contains(&cfg.warmup_fraction) {
        return Err(Error::InvalidParameter("invalid simulation configuration".into()));
    }
    let sampler = BatchSampler::new(batch)?;
    let per = cfg.batches / cfg.replications;
    let warmup = (cfg.warmup_fraction * per as f64 / (1.0 - cfg.warmup_fraction)).round() as usize;
    let runs: Vec<Vec<(f64, usize)>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(rho, &sampler, warmup, per, cfg.seed, r as u64))
        .collect();
    let all = runs.concat();
    Ok(summarise(cfg.seed, &all, xs, cfg.groups))
}

/// Sojourn of a tagged batch of size `b` arriving to find `n` customers.
pub fn simulate_conditional(
    rho: f64,
    batch: &BatchDistribution,
    n: usize,
    b: usize,
    xs: &[f64],
    reps: usize,
    seed: u64,
) -> Result<SimulationResult> {
    if b == 0 || reps < 200 {
        return Err(Error::InvalidParameter("need b >= 1 and at least 200 replications".into()));
    }
    let sampler = BatchSampler::new(batch)?;
    let chunks = 64usize;
    let per = reps / chunks;
    let runs: Vec<Vec<(f64, usize)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_for(seed, c as u64);
            let inter = Exp::new(rho).expect("positive rate");
            (0..per)
                .map(|_| {
                    let mut sys = System::new();
                    for _ in 0..n {
                        sys.add(Exp1.sample(&mut rng), 0);
                    }
                    for _ in 0..b {
                        sys.add(Exp1.sample(&mut rng), 1);
                    }
                    let mut left = b;
                    let mut next_arrival: f64 = inter.sample(&mut rng);
                    loop {
                        if next_arrival <= sys.next_departure() {
                            sys.advance(next_arrival);
                            for _ in 0..sampler.sample(&mut rng) {
                                sys.add(Exp1.sample(&mut rng), 0);
                            }
                            next_arrival += inter.sample(&mut rng);
                        } else if sys.depart() == 1 {
                            left -= 1;
                            if left == 0 {
                                return (sys.t, n);
                            }
                        }
                    }
                })
                .collect()
        })
        .collect();
    Ok(summarise(seed, &runs.concat(), xs, 64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_server_mean() {
        // q = 0: M/M/1-PS with mean sojourn 1 / (1 - rho).
        let cfg = SimConfig {
            batches: 200_000,
            seed: 7,
            ..Default::default()
        };
        let r = simulate(0.5, &BatchDistribution::Geometric { q: 0.0 }, &[1.0], &cfg).unwrap();
        assert!((r.mean - 2.0).abs() < 4.0 * r.mean_se, "{} +- {}", r.mean, r.mean_se);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let cfg = SimConfig {
            batches: 20_000,
            seed: 3,
            ..Default::default()
        };
        let d = BatchDistribution::Geometric { q: 0.2 };
        let a = simulate(0.5, &d, &[1.0, 2.0], &cfg).unwrap();
        let b = simulate(0.5, &d, &[1.0, 2.0], &cfg).unwrap();
        assert_eq!(a.survival, b.survival);
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    }

    #[test]
    fn lone_job_is_exponential() {
        // n = 0, b = 1 and a tiny arrival rate: sojourn close to Exp(1).
        let r = simulate_conditional(1e-9, &BatchDistribution::Geometric { q: 0.0 }, 0, 1, &[1.0], 64_000, 5).unwrap();
        let exact = (-1.0f64).exp();
        assert!((r.survival[0] - exact).abs() < 4.0 * r.survival_se[0]);
    }
}
