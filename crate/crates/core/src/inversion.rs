//! Gaver-Stehfest inversion of the conditional and unconditional transforms.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{stationary_occupancy, BatchDistribution, ModelParams, StationaryOccupancy};
use crate::transform::{Transform, TransformConfig};

/// Stehfest weights `V_k`, `k = 1..=order`, for an even order.
pub fn stehfest_weights(order: usize) -> Vec<f64> {
    assert!(order >= 2 && order % 2 == 0, "Stehfest order must be even");
    let half = order / 2;
    let fact = |n: usize| (1..=n).fold(1.0f64, |a, j| a * j as f64);
    (1..=order)
        .map(|k| {
            let mut sum = 0.0;
            for j in (k + 1) / 2..=k.min(half) {
                sum += (j as f64).powi(half as i32) * fact(2 * j)
                    / (fact(half - j) * fact(j) * fact(j - 1) * fact(k - j) * fact(2 * j - k));
            }
            if (k + half) % 2 == 0 {
                sum
            } else {
                -sum
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct InversionConfig {
    /// Candidate even orders in increasing order.
    pub orders: Vec<usize>,
    /// Adjacent-order spread above which an inversion is rejected.
    pub oscillation_tol: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            orders: vec![14, 16],
            oscillation_tol: 1e-3,
        }
    }
}

impl InversionConfig {
    pub fn fixed(order: usize) -> Self {
        InversionConfig {
            orders: vec![order],
            ..Default::default()
        }
    }

    pub fn max_order(&self) -> usize {
        *self.orders.iter().max().unwrap_or(&12)
    }

    /// Laplace variables needed at `x`.
    pub fn nodes(&self, x: f64) -> Vec<f64> {
        (1..=self.max_order()).map(|k| node(k, x)).collect()
    }
}

// Written as (k / x) ln 2 so that dyadic x values share nodes bit for bit.
fn node(k: usize, x: f64) -> f64 {
    (k as f64 / x) * LN_2
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Inverted {
    pub value: f64,
    /// Spread between the highest order and the next one.
    pub error: f64,
    pub order: usize,
}

/// Inverts from transform values `values[k - 1] = F(k ln2 / x)`.
///
/// Each candidate order uses the leading nodes. The value comes from the
/// highest order and the error estimate is its difference from the next
/// order down.
pub fn invert_values(values: &[f64], x: f64, config: &InversionConfig) -> Result<Inverted> {
    if !(x > 0.0) {
        return Err(Error::InvalidParameter(format!("x = {x} must be positive")));
    }
    let estimates: Vec<(usize, f64)> = config
        .orders
        .iter()
        .map(|&n| {
            let w = stehfest_weights(n);
            let sum: f64 = w.iter().zip(values).map(|(w, v)| w * v).sum();
            (n, LN_2 / x * sum)
        })
        .collect();
    if estimates.len() == 1 {
        return Ok(Inverted {
            value: estimates[0].1,
            error: f64::NAN,
            order: estimates[0].0,
        });
    }
    let mut sorted = estimates;
    sorted.sort_by_key(|e| e.0);
    let best = sorted[sorted.len() - 1];
    let spread = (best.1 - sorted[sorted.len() - 2].1).abs();
    if spread > config.oscillation_tol * best.1.abs().max(1.0) {
        return Err(Error::Oscillation { x, spread });
    }
    Ok(Inverted {
        value: best.1,
        error: spread,
        order: best.0,
    })
}

/// Inverts a transform given as a closure.
pub fn invert<F: FnMut(f64) -> Result<f64>>(mut f: F, x: f64, config: &InversionConfig) -> Result<Inverted> {
    let values = config.nodes(x).into_iter().map(&mut f).collect::<Result<Vec<_>>>()?;
    invert_values(&values, x, config)
}

/// Transforms at a set of Laplace variables, built on demand and reused.
pub struct TransformSet {
    pub params: ModelParams,
    pub b_levels: usize,
    pub config: TransformConfig,
    map: BTreeMap<u64, Transform>,
}

impl TransformSet {
    pub fn new(params: ModelParams, b_levels: usize, config: TransformConfig) -> Self {
        TransformSet {
            params,
            b_levels,
            config,
            map: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Builds any missing transforms, in parallel.
    pub fn ensure(&mut self, s_values: &[f64]) -> Result<()> {
        let mut missing: Vec<f64> = s_values
            .iter()
            .copied()
            .filter(|s| !self.map.contains_key(&s.to_bits()))
            .collect();
        missing.sort_by(f64::total_cmp);
        missing.dedup();
        let built: Vec<Result<Transform>> = missing
            .par_iter()
            .map(|&s| Transform::build(&self.params, s, self.b_levels, &self.config))
            .collect();
        for t in built {
            let t = t?;
            self.map.insert(t.s().to_bits(), t);
        }
        Ok(())
    }

    pub fn get(&mut self, s: f64) -> Result<&Transform> {
        self.ensure(&[s])?;
        Ok(&self.map[&s.to_bits()])
    }

    fn cached(&self, s: f64) -> &Transform {
        &self.map[&s.to_bits()]
    }

    /// `E*_{n,b}(s)`.
    pub fn conditional_transform(&mut self, n: usize, b: usize, s: f64) -> Result<f64> {
        self.check_order(b)?;
        let t = self.get(s)?;
        Ok(t.level(b).coeffs.get(n).copied().unwrap_or(0.0))
    }

    fn check_order(&self, b: usize) -> Result<()> {
        if b == 0 || b > self.b_levels {
            return Err(Error::InvalidParameter(format!(
                "batch size {b} outside the built levels 1..={}",
                self.b_levels
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SurvivalPoint {
    pub x: f64,
    pub survival: f64,
    pub clamped: f64,
    pub error: f64,
    pub order: usize,
}

impl SurvivalPoint {
    fn new(x: f64, inv: Inverted) -> Self {
        SurvivalPoint {
            x,
            survival: inv.value,
            clamped: inv.value.clamp(0.0, 1.0),
            error: inv.error,
            order: inv.order,
        }
    }
}

fn all_nodes(xs: &[f64], config: &InversionConfig) -> Vec<f64> {
    xs.iter().flat_map(|&x| config.nodes(x)).collect()
}

/// `P(Omega_{n,b} > x)` on a grid.
pub fn conditional_survival(
    set: &mut TransformSet,
    n: usize,
    b: usize,
    xs: &[f64],
    config: &InversionConfig,
) -> Result<Vec<SurvivalPoint>> {
    set.check_order(b)?;
    set.ensure(&all_nodes(xs, config))?;
    xs.iter()
        .map(|&x| {
            let values: Vec<f64> = config
                .nodes(x)
                .iter()
                .map(|&s| set.cached(s).level(b).coeffs.get(n).copied().unwrap_or(0.0))
                .collect();
            Ok(SurvivalPoint::new(x, invert_values(&values, x, config)?))
        })
        .collect()
}

/// Conditional survival for every `n <= n_max`, `b <= b_levels` at the grid,
/// `out[i][n][b - 1]`.
pub fn conditional_survival_grid(
    set: &mut TransformSet,
    n_max: usize,
    xs: &[f64],
    config: &InversionConfig,
) -> Result<Vec<Vec<Vec<SurvivalPoint>>>> {
    set.ensure(&all_nodes(xs, config))?;
    let b_levels = set.b_levels;
    xs.iter()
        .map(|&x| {
            let nodes = config.nodes(x);
            (0..=n_max)
                .map(|n| {
                    (1..=b_levels)
                        .map(|b| {
                            let values: Vec<f64> = nodes
                                .iter()
                                .map(|&s| set.cached(s).level(b).coeffs.get(n).copied().unwrap_or(0.0))
                                .collect();
                            Ok(SurvivalPoint::new(x, invert_values(&values, x, config)?))
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct UnconditionalPoint {
    pub x: f64,
    pub survival: f64,
    pub clamped: f64,
    pub error: f64,
    pub order: usize,
    /// The neglected mass adds a value in `[0, remainder]`.
    pub remainder: f64,
}

/// Smallest number of levels whose neglected batch mass `q^B` is below `tol`.
pub fn levels_for_tail(params: &ModelParams, tol: f64) -> usize {
    let batch = params.batch();
    (1..=params.b_max).find(|&b| batch.tail(b) <= tol).unwrap_or(params.b_max)
}

/// `P(Omega > x) = sum_{n, b} pi_n q_b P(Omega_{n,b} > x)` truncated to
/// `n <= n_max`, `b <= b_levels`.
pub fn unconditional_survival(
    set: &mut TransformSet,
    occupancy: &StationaryOccupancy,
    xs: &[f64],
    config: &InversionConfig,
) -> Result<Vec<UnconditionalPoint>> {
    set.ensure(&all_nodes(xs, config))?;
    let batch = set.params.batch();
    let b_levels = set.b_levels;
    let remainder = occupancy.deficit + batch.tail(b_levels);
    let mixed = |t: &Transform| mixed_transform(t, occupancy, &batch);
    xs.iter()
        .map(|&x| {
            let values: Vec<f64> = config.nodes(x).iter().map(|&s| mixed(set.cached(s))).collect();
            let inv = invert_values(&values, x, config)?;
            Ok(UnconditionalPoint {
                x,
                survival: inv.value,
                clamped: inv.value.clamp(0.0, 1.0),
                error: inv.error,
                order: inv.order,
                remainder,
            })
        })
        .collect()
}

/// `sum_{n, b} pi_n q_b E*_{n,b}(s)` over the built levels.
fn mixed_transform(t: &Transform, occupancy: &StationaryOccupancy, batch: &BatchDistribution) -> f64 {
    (1..=t.b_levels())
        .map(|b| {
            let c = &t.level(b).coeffs;
            let inner: f64 = occupancy
                .pi
                .iter()
                .enumerate()
                .map(|(n, p)| p * c.get(n).copied().unwrap_or(0.0))
                .sum();
            batch.pmf(b) * inner
        })
        .sum()
}

/// Stationary mean batch sojourn time by extrapolating the mixed transform to `s = 0`.
pub fn unconditional_mean(set: &mut TransformSet, occupancy: &StationaryOccupancy) -> Result<Moment> {
    set.ensure(&EXTRAPOLATION_NODES)?;
    let batch = set.params.batch();
    let f: Vec<f64> = EXTRAPOLATION_NODES
        .iter()
        .map(|&s| mixed_transform(set.cached(s), occupancy, &batch))
        .collect();
    extrapolated(&f)
}

fn extrapolated(f: &[f64]) -> Result<Moment> {
    let full = extrapolate_to_zero(&EXTRAPOLATION_NODES, f);
    let reduced = extrapolate_to_zero(&EXTRAPOLATION_NODES[1..], &f[1..]);
    let error = (full - reduced).abs();
    if error > 1e-2 * full.abs() {
        return Err(Error::Extrapolation { spread: error });
    }
    Ok(Moment { value: full, error })
}

/// Convenience wrapper building the occupancy and transform set from the scenario.
pub fn unconditional_survival_for(
    params: &ModelParams,
    xs: &[f64],
    config: &InversionConfig,
    transform: TransformConfig,
) -> Result<Vec<UnconditionalPoint>> {
    let occupancy = stationary_occupancy(params)?;
    let levels = levels_for_tail(params, params.tol.max(1e-9));
    let mut set = TransformSet::new(*params, levels, transform);
    unconditional_survival(&mut set, &occupancy, xs, config)
}

/// Laplace variables used to extrapolate the transform to `s = 0`.
pub const EXTRAPOLATION_NODES: [f64; 4] = [0.02, 0.01, 0.005, 0.0025];

/// Polynomial extrapolation to zero through `(s_i, f_i)` (Neville).
pub fn extrapolate_to_zero(s: &[f64], f: &[f64]) -> f64 {
    let mut p = f.to_vec();
    let n = p.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (s[i + m] * p[i] - s[i] * p[i + 1]) / (s[i + m] - s[i]);
        }
    }
    p[0]
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Moment {
    pub value: f64,
    pub error: f64,
}

/// `E[Omega_{n,b}^k]` for `k` in `{1, 2}`.
///
/// The mean is the transform at `s = 0`, reached by extrapolation. The
/// second moment is `2 int_0^inf x P(Omega_{n,b} > x) dx` on the inverted
/// curve, truncated where the survival drops below `1e-9`.
pub fn moment(set: &mut TransformSet, n: usize, b: usize, k: u32, config: &InversionConfig) -> Result<Moment> {
    set.check_order(b)?;
    match k {
        1 => {
            set.ensure(&EXTRAPOLATION_NODES)?;
            let f: Vec<f64> = EXTRAPOLATION_NODES
                .iter()
                .map(|&s| set.cached(s).level(b).coeffs.get(n).copied().unwrap_or(0.0))
                .collect();
            extrapolated(&f)
        }
        2 => {
            // Composite Simpson on [0, X], doubling X until the tail is negligible.
            let mut upper = 8.0;
            loop {
                let tail = conditional_survival(set, n, b, &[upper], config)?[0].survival;
                if tail.abs() < 1e-9 || upper > 4096.0 {
                    break;
                }
                upper *= 2.0;
            }
            let panels = 128usize;
            let h = upper / panels as f64;
            let xs: Vec<f64> = (1..=panels).map(|i| i as f64 * h).collect();
            let curve = conditional_survival(set, n, b, &xs, config)?;
            let mut sum = 0.0;
            let mut err = 0.0;
            for (i, p) in curve.iter().enumerate() {
                let w = if i + 1 == panels {
                    1.0
                } else if i % 2 == 0 {
                    4.0
                } else {
                    2.0
                };
                sum += w * p.x * p.survival;
                err += w * p.x * p.error;
            }
            Ok(Moment {
                value: 2.0 * h / 3.0 * sum,
                error: 2.0 * h / 3.0 * err,
            })
        }
        _ => Err(Error::InvalidParameter(format!("moment order {k} not supported"))),
    }
}
