use batchps::inversion::{conditional_survival, InversionConfig, TransformSet};
use batchps::model::stationary_occupancy;
use batchps::oracles::{ctmc, laplace, ode, sim, Chain};
use batchps::transform::{Transform, TransformConfig};
use batchps::{BatchDistribution, ModelParams};
use num_complex::Complex64 as C64;

fn geometric(q: f64) -> BatchDistribution {
    BatchDistribution::Geometric { q }
}

#[test]
fn initial_values_and_slope() {
    let chain = Chain::new(0.5, geometric(0.2), 60, 3).unwrap();
    let h = 1e-4;
    let g = ctmc::survival(&chain, &[0.0, h]).unwrap();
    for n in 0..=5 {
        for b in 1..=3 {
            assert_eq!(g[0].get(n, b).lower, 1.0);
            assert_eq!(g[0].get(n, b).upper, 1.0);
        }
    }
    // dE_{0,1}/dx = rho - (1 + rho) at x = 0.
    let slope = (g[1].get(0, 1).mid() - 1.0) / h;
    assert!((slope + 1.0).abs() < 1e-3);
}

#[test]
fn ode_and_ctmc_agree() {
    let xs = [0.5, 1.0, 2.0, 5.0];
    let chain = Chain::new(0.5, geometric(0.2), 400, 4).unwrap();
    let a = ctmc::survival(&chain, &xs).unwrap();
    let b = ode::survival(&chain, &xs, &ode::OdeOptions::default()).unwrap();
    for (ga, gb) in a.iter().zip(&b) {
        for n in 0..=4 {
            for k in 1..=4 {
                let (p, r) = (ga.get(n, k), gb.get(n, k));
                assert!(p.lower <= p.upper && r.lower <= r.upper);
                assert!(p.width() < 1e-6 && r.width() < 1e-6, "x={} n={n} b={k}", ga.x);
                assert!((p.mid() - r.mid()).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn explicit_batch_law_brackets() {
    let d = BatchDistribution::Explicit {
        probs: vec![0.5, 0.3, 0.2],
    };
    let chain = Chain::new(0.4, d, 200, 3).unwrap();
    let a = ctmc::survival(&chain, &[1.0, 3.0]).unwrap();
    let b = ode::survival(&chain, &[1.0, 3.0], &ode::OdeOptions::default()).unwrap();
    for (ga, gb) in a.iter().zip(&b) {
        for n in 0..=3 {
            for k in 1..=3 {
                assert!((ga.get(n, k).mid() - gb.get(n, k).mid()).abs() < 1e-6);
                if n > 0 {
                    assert!(ga.get(n, k).mid() >= ga.get(n - 1, k).mid());
                }
            }
        }
    }
}

#[test]
fn pipeline_grid_matches_laplace_oracle() {
    let p = ModelParams::new(0.5, 0.2).unwrap();
    let chain = Chain::new(0.5, geometric(0.2), 400, 5).unwrap();
    for &s in &[0.25, 1.0, 4.0] {
        let t = Transform::build(&p, s, 5, &TransformConfig::default()).unwrap();
        let o = laplace::transform(&chain, s).unwrap();
        for n in 0..=5 {
            for b in 1..=5 {
                let r = o.get(n, b);
                assert!(r.width() < 1e-8);
                let v = t.level(b).coeffs[n];
                assert!((v - r.mid()).abs() < 1e-5, "s={s} n={n} b={b}: {v} vs {}", r.mid());
            }
        }
        // Direct evaluation at real u against the oracle's generating function.
        for &u in &[0.1, 0.3] {
            let series: f64 = (0..400).rev().fold(0.0, |a, n| a * u + o.get(n, 1).mid());
            let direct = t.eb_star(1, C64::new(u, 0.0)).unwrap().re;
            assert!((direct - series).abs() < 1e-5);
        }
    }
}

#[test]
fn classical_first_level() {
    // q = 0, b = 1: the oracle's empty-system transform equals E_1(s, 0).
    let p = ModelParams::new(0.5, 0.0).unwrap();
    let chain = Chain::new(0.5, geometric(0.0), 300, 1).unwrap();
    for &s in &[0.5, 2.0] {
        let t = Transform::build(&p, s, 1, &TransformConfig::default()).unwrap();
        let o = laplace::transform(&chain, s).unwrap();
        assert!((t.boundary.get(1) - o.get(0, 1).mid()).abs() < 1e-6);
    }
}

#[test]
fn conditional_survival_point_against_ctmc() {
    let p = ModelParams::new(0.5, 0.2).unwrap();
    let mut set = TransformSet::new(p, 3, TransformConfig::default());
    let cfg = InversionConfig::default();
    let chain = Chain::new(0.5, geometric(0.2), 400, 3).unwrap();
    let g = ctmc::survival(&chain, &[2.0]).unwrap();
    let v = conditional_survival(&mut set, 2, 3, &[2.0], &cfg).unwrap()[0];
    assert!((v.survival - g[0].get(2, 3).mid()).abs() < 1e-4);
    // Near zero the survival is 1 - x to first order (slope -1 for n = 0, b = 1).
    let small = conditional_survival(&mut set, 0, 1, &[1e-3], &cfg).unwrap()[0];
    assert!((small.survival - 1.0).abs() < 2e-3);
    assert!((small.survival - (1.0 - 1e-3)).abs() < 1e-5, "{}", small.survival);
}

#[test]
fn simulation_conditional_against_ctmc() {
    let chain = Chain::new(0.5, geometric(0.2), 300, 2).unwrap();
    let g = ctmc::survival(&chain, &[1.0, 2.0]).unwrap();
    let r = sim::simulate_conditional(0.5, &geometric(0.2), 1, 2, &[1.0, 2.0], 64_000, 11).unwrap();
    for i in 0..2 {
        let exact = g[i].get(1, 2).mid();
        assert!((r.survival[i] - exact).abs() < 3.0 * r.survival_se[i], "{} vs {exact}", r.survival[i]);
    }
}

#[test]
fn simulation_occupancy_matches_balance() {
    let p = ModelParams::new(0.5, 0.2).unwrap();
    let occ = stationary_occupancy(&p).unwrap();
    let cfg = sim::SimConfig {
        batches: 400_000,
        seed: 21,
        ..Default::default()
    };
    let r = sim::simulate(0.5, &geometric(0.2), &[], &cfg).unwrap();
    for n in 0..8 {
        let se = r.occupancy_se[n];
        assert!((r.occupancy[n] - occ.pi[n]).abs() < 4.0 * se, "n={n}: {} vs {}", r.occupancy[n], occ.pi[n]);
    }
}
