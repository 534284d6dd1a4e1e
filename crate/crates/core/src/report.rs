//! Acceptance criteria, comparison report and CSV tables.

use std::fmt::Write as _;
use std::time::Instant;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::boundary::{cnc0_residual, solve_triangular};
use crate::error::Result;
use crate::inversion::{
    conditional_survival_grid, invert, levels_for_tail, unconditional_mean, unconditional_survival,
    InversionConfig, TransformSet, UnconditionalPoint,
};
use crate::kernels::{hypergeometric_check, MomentTable, DEFAULT_REL_TOL};
use crate::model::{stationary_occupancy, ModelParams};
use crate::oracles::sim::{self, SimConfig, SimulationResult};
use crate::oracles::{ctmc, laplace, ode, BracketGrid, Chain};
use crate::spectral::SpectralData;
use crate::transform::{pde_points, GeneratingForm, Transform, TransformConfig};

/// One number judged against a tolerance; `tolerance = None` is informational.
#[derive(Debug, Clone, Serialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
    pub tolerance: Option<f64>,
    pub passed: bool,
}

impl Measurement {
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Measurement {
            name: name.into(),
            value,
            tolerance: Some(tolerance),
            passed: value <= tolerance,
        }
    }

    fn info(name: impl Into<String>, value: f64) -> Self {
        Measurement {
            name: name.into(),
            value,
            tolerance: None,
            passed: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    pub measurements: Vec<Measurement>,
    pub seconds: f64,
    pub time_limit: Option<f64>,
    pub error: Option<String>,
}

impl CriterionResult {
    /// One-line summary.
    pub fn line(&self) -> String {
        let mut s = format!(
            "[{}] {:>2} {:<26}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name
        );
        for m in &self.measurements {
            match m.tolerance {
                Some(t) => write!(s, " {}={:.3e}(<={:.0e})", m.name, m.value, t).unwrap(),
                None => write!(s, " {}={:.4}", m.name, m.value).unwrap(),
            }
        }
        match self.time_limit {
            Some(l) => write!(s, " time={:.2}s(<{}s)", self.seconds, l).unwrap(),
            None => write!(s, " time={:.2}s", self.seconds).unwrap(),
        }
        if let Some(e) = &self.error {
            write!(s, " error: {e}").unwrap();
        }
        s
    }
}

fn timed(
    id: usize,
    name: &str,
    time_limit: Option<f64>,
    f: impl FnOnce() -> Result<Vec<Measurement>>,
) -> CriterionResult {
    let start = Instant::now();
    let out = f();
    let seconds = start.elapsed().as_secs_f64();
    let in_time = time_limit.is_none_or(|l| seconds < l);
    match out {
        Ok(measurements) => CriterionResult {
            id,
            name: name.into(),
            passed: in_time && measurements.iter().all(|m| m.passed),
            measurements,
            seconds,
            time_limit,
            error: None,
        },
        Err(e) => CriterionResult {
            id,
            name: name.into(),
            passed: false,
            measurements: Vec::new(),
            seconds,
            time_limit,
            error: Some(e.to_string()),
        },
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReportOptions {
    /// Scenario for the criteria stated at a fixed parameter point.
    pub params: ModelParams,
    pub seed: u64,
    pub sim_batches: usize,
    /// Multiplies `E_1(s, q)` wherever the pipeline uses it.
    pub corrupt_e1: Option<f64>,
}

impl ReportOptions {
    pub fn new(params: ModelParams, seed: u64) -> Self {
        ReportOptions {
            params,
            seed,
            sim_batches: 1_000_000,
            corrupt_e1: None,
        }
    }

    fn transform_config(&self) -> TransformConfig {
        TransformConfig {
            perturb_e1: self.corrupt_e1,
            ..Default::default()
        }
    }
}

const ORACLE_XS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
const ORACLE_N: usize = 4;
const ORACLE_B: usize = 4;
const ORACLE_TRUNC: usize = 400;

/// Roots, weights, kernel composition and derivative on random parameters.
pub fn spectral_identities(opts: &ReportOptions) -> CriterionResult {
    timed(1, "spectral identities", Some(5.0), || {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut sets = vec![(opts.params.rho, opts.params.q, 1000usize)];
        for _ in 0..10 {
            let q: f64 = rng.random_range(0.0..0.8);
            let frac: f64 = rng.random_range(0.02..0.98);
            sets.push((frac * (1.0 - q), q, 100));
        }
        let (mut ordering, mut weights, mut at_q, mut compose, mut deriv) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let c = |x: f64| C64::new(x, 0.0);
        for (rho, q, count) in sets {
            for _ in 0..count {
                let s = 50.0 * (1.0 - rng.random::<f64>());
                let sd = SpectralData::from_rates(rho, q, s)?;
                if !(q < sd.u_minus && sd.u_minus < 1.0 && 1.0 < sd.u_plus) {
                    ordering += 1.0;
                }
                weights = weights.max((sd.c_plus + sd.c_minus - 1.0).abs());
                at_q = at_q.max((sd.poly(c(q)).re - rho * (1.0 - q)).abs());
                let z = rng.random_range(0.0..0.9) * sd.u_minus;
                let zeta = z + rng.random::<f64>() * (sd.u_minus - z) * 0.999;
                let a = sd.kernel(c(0.0), c(z))?;
                let b = sd.kernel(c(z), c(zeta))?;
                let ab = sd.kernel(c(0.0), c(zeta))?;
                if ab.norm() > 0.0 {
                    compose = compose.max((a * b - ab).norm() / ab.norm());
                }
                let u = rng.random_range(0.05..0.9) * sd.u_minus;
                let h = 1e-4 * (sd.u_minus - u).min(u);
                let f = |x: f64| sd.kernel(c(0.0), c(x));
                let fd = (f(u - 2.0 * h)? - 8.0 * f(u - h)? + 8.0 * f(u + h)? - f(u + 2.0 * h)?) / (12.0 * h);
                let fu = f(u)?;
                let exact = fu * sd.kernel_log_derivative(c(u));
                // q - u can vanish; measure against the size of its terms.
                let scale = fu.norm() * (q + u) / sd.poly_real(u).abs();
                deriv = deriv.max((fd - exact).norm() / scale);
            }
        }
        Ok(vec![
            Measurement::at_most("misordered", ordering, 0.0),
            Measurement::at_most("weight_sum", weights, 1e-12),
            Measurement::at_most("P(s,q)", at_q, 1e-12),
            Measurement::at_most("composition", compose, 1e-12),
            Measurement::at_most("derivative", deriv, 1e-6),
        ])
    })
}

/// Moment quadrature against the hypergeometric series.
pub fn hypergeometric(opts: &ReportOptions) -> CriterionResult {
    timed(2, "hypergeometric cross-check", Some(30.0), || {
        let mut worst = 0.0f64;
        for &s in &[0.5, 1.0, 5.0] {
            let sd = SpectralData::new(&opts.params, s)?;
            for b in 1..=10 {
                for l in 0..=b {
                    worst = worst.max(hypergeometric_check(&sd, b, l)?);
                }
            }
        }
        Ok(vec![Measurement::at_most("max_rel", worst, 1e-8)])
    })
}

/// Boundary-condition residuals of the triangular solution, recomputed by
/// independent quadrature.
pub fn cnc_residual(opts: &ReportOptions) -> CriterionResult {
    timed(3, "boundary condition", Some(60.0), || {
        let mut worst = 0.0f64;
        let mut hybrid = 0.0f64;
        for &s in &[0.5, 1.0, 2.0] {
            let sd = SpectralData::new(&opts.params, s)?;
            let table = MomentTable::compute(&sd, 20, DEFAULT_REL_TOL)?;
            let mut coeffs = solve_triangular(&sd, &table, 20)?;
            if let Some(f) = opts.corrupt_e1 {
                coeffs = coeffs.with_scaled(1, f);
            }
            let r = cnc0_residual(&sd, &coeffs, 1e-12)?;
            worst = r.iter().fold(worst, |a, &v| a.max(v));
            let t = Transform::build(&opts.params, s, 20, &opts.transform_config())?;
            let r = cnc0_residual(&sd, &t.boundary, 1e-12)?;
            hybrid = r.iter().fold(hybrid, |a, &v| a.max(v));
        }
        Ok(vec![
            Measurement::at_most("triangular", worst, 1e-8),
            Measurement::at_most("pipeline", hybrid, 1e-8),
        ])
    })
}

fn pde_worst(t: &Transform, form: GeneratingForm) -> Result<(f64, f64)> {
    let pts = pde_points(&t.spectral, 5, 0.15, 0.85, 0.3);
    let r = t.pde_residuals(form, &pts, 1e-3)?;
    Ok(r.iter()
        .fold((0.0f64, 0.0f64), |a, p| (a.0.max(p.direct), a.1.max(p.characteristic))))
}

/// First-order equations for the ordinary generating function and its
/// characteristic form at 25 Chebyshev points.
pub fn pde_residual(opts: &ReportOptions) -> CriterionResult {
    timed(4, "generating-function PDE", Some(60.0), || {
        let t = Transform::build(&opts.params, 1.0, 20, &opts.transform_config())?;
        let (direct, characteristic) = pde_worst(&t, GeneratingForm::Ordinary)?;
        Ok(vec![
            Measurement::at_most("direct", direct, 1e-5),
            Measurement::at_most("characteristic", characteristic, 1e-5),
        ])
    })
}

fn oracle_chain(params: &ModelParams) -> Result<Chain> {
    Chain::new(params.rho, params.batch(), ORACLE_TRUNC, ORACLE_B)
}

/// ODE brackets against CTMC uniformisation.
pub fn oracle_triangle(opts: &ReportOptions) -> CriterionResult {
    timed(5, "ODE vs CTMC", Some(120.0), || {
        let chain = oracle_chain(&opts.params)?;
        let a = ctmc::survival(&chain, &ORACLE_XS)?;
        let b = ode::survival(&chain, &ORACLE_XS, &ode::OdeOptions::default())?;
        let (mut worst, mut tight, mut total) = (0.0f64, 0usize, 0usize);
        for (ga, gb) in a.iter().zip(&b) {
            for n in 0..=ORACLE_N {
                for k in 1..=ORACLE_B {
                    let (p, r) = (ga.get(n, k), gb.get(n, k));
                    total += 1;
                    if p.width() <= 1e-6 && r.width() <= 1e-6 {
                        tight += 1;
                        worst = worst.max((p.mid() - r.mid()).abs());
                    }
                }
            }
        }
        Ok(vec![
            Measurement::at_most("max_abs", worst, 1e-6),
            Measurement::info("tight_fraction", tight as f64 / total as f64),
        ])
    })
}

/// Inverted pipeline transforms against CTMC uniformisation.
pub fn analytic_vs_oracle(opts: &ReportOptions) -> CriterionResult {
    timed(6, "pipeline vs CTMC", Some(300.0), || {
        let chain = oracle_chain(&opts.params)?;
        let reference = ctmc::survival(&chain, &ORACLE_XS)?;
        let mut set = TransformSet::new(opts.params, ORACLE_B, opts.transform_config());
        let grid = conditional_survival_grid(&mut set, ORACLE_N, &ORACLE_XS, &InversionConfig::default())?;
        let mut worst = 0.0f64;
        for (i, g) in reference.iter().enumerate() {
            for (n, row) in grid[i].iter().enumerate() {
                for (k, p) in row.iter().enumerate() {
                    worst = worst.max((p.survival - g.get(n, k + 1).mid()).abs());
                }
            }
        }
        Ok(vec![Measurement::at_most("max_abs", worst, 1e-4)])
    })
}

/// Single-job batches: the mean sojourn is `1 / (1 - rho)`.
pub fn classical_limit(opts: &ReportOptions) -> CriterionResult {
    timed(7, "classical limit", Some(300.0), || {
        let params = ModelParams::new(opts.params.rho, 0.0)?;
        let exact = 1.0 / (1.0 - params.rho);
        let occ = stationary_occupancy(&params)?;
        let mut set = TransformSet::new(params, 1, opts.transform_config());
        let mean = unconditional_mean(&mut set, &occ)?;
        let cfg = SimConfig {
            batches: opts.sim_batches,
            seed: opts.seed,
            ..Default::default()
        };
        let r = sim::simulate(params.rho, &params.batch(), &[], &cfg)?;
        Ok(vec![
            Measurement::at_most("analytic_rel", (mean.value - exact).abs() / exact, 0.01),
            Measurement::at_most("sim_z", (r.mean - exact).abs() / r.mean_se, 3.0),
        ])
    })
}

/// Unconditional survival against simulation.
pub fn simulation_concordance(opts: &ReportOptions) -> CriterionResult {
    timed(8, "simulation concordance", Some(300.0), || {
        let xs = [0.5, 1.0, 2.0, 4.0];
        let curve = unconditional_curve(&opts.params, &xs, opts.transform_config())?;
        let cfg = SimConfig {
            batches: opts.sim_batches,
            seed: opts.seed,
            ..Default::default()
        };
        let r = sim::simulate(opts.params.rho, &opts.params.batch(), &xs, &cfg)?;
        Ok(curve
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let z = (p.survival - r.survival[i]).abs() / r.survival_se[i];
                Measurement::at_most(format!("z(x={})", p.x), z, 3.0)
            })
            .collect())
    })
}

/// Known transform pairs.
pub fn inversion_self_test(_opts: &ReportOptions) -> CriterionResult {
    timed(9, "inversion self-test", Some(1.0), || {
        let cfg = InversionConfig::default();
        let exp = invert(|s| Ok(1.0 / (s + 1.0)), 1.0, &cfg)?.value;
        let unit1 = invert(|s| Ok(1.0 / s), 1.0, &cfg)?.value;
        let unit3 = invert(|s| Ok(1.0 / s), 3.0, &cfg)?.value;
        let erlang = invert(|s| Ok((1.0 - (1.0 + s).powi(-2)) / s), 1.0, &cfg)?.value;
        let e = (-1.0f64).exp();
        Ok(vec![
            Measurement::at_most("exp", (exp - e).abs(), 1e-6),
            Measurement::at_most("unit", (unit1 - 1.0).abs().max((unit3 - 1.0).abs()), 1e-6),
            Measurement::at_most("erlang2", (erlang - 2.0 * e).abs(), 1e-6),
        ])
    })
}

/// Two runs of the same scenario and seed produce identical tables.
pub fn determinism(opts: &ReportOptions) -> CriterionResult {
    timed(10, "determinism", None, || {
        let run = || -> Result<String> {
            let xs = [0.5, 1.0, 2.0];
            let curve = unconditional_curve(&opts.params, &xs, opts.transform_config())?;
            let cfg = SimConfig {
                batches: 50_000,
                seed: opts.seed,
                ..Default::default()
            };
            let r = sim::simulate(opts.params.rho, &opts.params.batch(), &xs, &cfg)?;
            Ok(unconditional_table(&curve, &[]).to_csv() + &simulation_table(&r, &[]).to_csv())
        };
        let (a, b) = (run()?, run()?);
        let differing = a.bytes().zip(b.bytes()).filter(|(x, y)| x != y).count() + a.len().abs_diff(b.len());
        Ok(vec![Measurement::at_most("differing_bytes", differing as f64, 0.0)])
    })
}

fn unconditional_curve(params: &ModelParams, xs: &[f64], config: TransformConfig) -> Result<Vec<UnconditionalPoint>> {
    let occ = stationary_occupancy(params)?;
    let mut set = TransformSet::new(*params, levels_for_tail(params, 1e-9), config);
    unconditional_survival(&mut set, &occ, xs, &InversionConfig::default())
}

/// Consistency checks beyond the numbered criteria. They catch a corrupted
/// boundary coefficient, which the extracted coefficients do not see.
pub fn consistency_checks(opts: &ReportOptions) -> Vec<CriterionResult> {
    let build = || Transform::build(&opts.params, 1.0, 20, &opts.transform_config());
    vec![
        timed(11, "resummation identity", None, || {
            let t = build()?;
            let q = opts.params.q;
            let worst = t.levels.iter().fold(0.0f64, |a, l| {
                let resum = l.coeffs.iter().rev().fold(0.0, |acc, &c| acc * q + c);
                a.max((resum - l.e_q).abs())
            });
            Ok(vec![Measurement::at_most("max_abs", worst, 1e-8)])
        }),
        timed(12, "direct vs Laplace oracle", None, || {
            let t = build()?;
            let chain = Chain::new(opts.params.rho, opts.params.batch(), ORACLE_TRUNC, 3)?;
            let o = laplace::transform(&chain, 1.0)?;
            let mut worst = 0.0f64;
            for b in 1..=3 {
                for &frac in &[0.25, 0.5, 0.75] {
                    let u = frac * t.spectral.u_minus;
                    let series: f64 = (0..ORACLE_TRUNC).rev().fold(0.0, |a, n| a * u + o.get(n, b).mid());
                    let direct = t.eb_star(b, C64::new(u, 0.0))?.re;
                    worst = worst.max((direct - series).abs());
                }
            }
            Ok(vec![Measurement::at_most("max_abs", worst, 1e-5)])
        }),
        timed(13, "exponential-form PDE", None, || {
            let t = build()?;
            let (direct, characteristic) = pde_worst(&t, GeneratingForm::Exponential)?;
            Ok(vec![
                Measurement::at_most("direct", direct, 1e-5),
                Measurement::at_most("characteristic", characteristic, 1e-5),
            ])
        }),
        timed(14, "aliased principal part", None, || {
            let t = build()?;
            let worst = t.levels.iter().fold(0.0f64, |a, l| a.max(l.principal_part));
            Ok(vec![Measurement::at_most("max_rel", worst, 1e-10)])
        }),
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub scenario: ModelParams,
    pub seed: u64,
    pub corrupt_e1: Option<f64>,
    pub criteria: Vec<CriterionResult>,
    pub checks: Vec<CriterionResult>,
    pub passed: bool,
}

/// Every acceptance criterion in order, then the consistency checks.
pub fn compare(opts: &ReportOptions) -> ComparisonReport {
    let criteria: Vec<CriterionResult> = [
        spectral_identities,
        hypergeometric,
        cnc_residual,
        pde_residual,
        oracle_triangle,
        analytic_vs_oracle,
        classical_limit,
        simulation_concordance,
        inversion_self_test,
        determinism,
    ]
    .iter()
    .map(|f| f(opts))
    .collect();
    let checks = consistency_checks(opts);
    let passed = criteria.iter().chain(&checks).all(|c| c.passed);
    ComparisonReport {
        scenario: opts.params,
        seed: opts.seed,
        corrupt_e1: opts.corrupt_e1,
        criteria,
        checks,
        passed,
    }
}

/// A numeric table with `#` comment lines above the header.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str], comments: &[String]) -> Self {
        Table {
            comments: comments.to_vec(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// CSV text; floats use the shortest representation that round-trips.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for c in &self.comments {
            writeln!(s, "# {c}").unwrap();
        }
        writeln!(s, "{}", self.header.join(",")).unwrap();
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
            writeln!(s, "{}", cells.join(",")).unwrap();
        }
        s
    }
}

pub fn unconditional_table(points: &[UnconditionalPoint], comments: &[String]) -> Table {
    let mut t = Table::new(&["x", "survival", "clamped", "error", "remainder", "order"], comments);
    for p in points {
        t.rows
            .push(vec![p.x, p.survival, p.clamped, p.error, p.remainder, p.order as f64]);
    }
    t
}

pub fn simulation_table(r: &SimulationResult, comments: &[String]) -> Table {
    let mut t = Table::new(&["x", "estimate", "stderr"], comments);
    for (i, &x) in r.xs.iter().enumerate() {
        t.rows.push(vec![x, r.survival[i], r.survival_se[i]]);
    }
    t
}

pub fn bracket_table(grids: &[BracketGrid], n_max: usize, b_max: usize, comments: &[String]) -> Table {
    let mut t = Table::new(&["x", "n", "b", "lower", "upper"], comments);
    for g in grids {
        for n in 0..=n_max.min(g.n_trunc) {
            for b in 1..=b_max.min(g.b_trunc) {
                let r = g.get(n, b);
                t.rows.push(vec![g.x, n as f64, b as f64, r.lower, r.upper]);
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_floats() {
        let mut t = Table::new(&["a", "b"], &["seed 1".into()]);
        t.rows.push(vec![0.1, 1.0 / 3.0]);
        let csv = t.to_csv();
        assert!(csv.starts_with("# seed 1\na,b\n"));
        let last = csv.lines().last().unwrap();
        let back: Vec<f64> = last.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(back, vec![0.1, 1.0 / 3.0]);
    }

    #[test]
    fn quick_criteria_pass() {
        let opts = ReportOptions::new(ModelParams::new(0.5, 0.2).unwrap(), 1);
        for c in [inversion_self_test(&opts), spectral_identities(&opts)] {
            assert!(c.passed, "{}", c.line());
        }
    }
}
