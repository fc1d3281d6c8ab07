//! Frozen values from independent computations, and closed forms.

#![allow(clippy::excessive_precision)]

use isleforge::cumulant::{nu_integral, solve_cumulant_fossil};
use isleforge::empirical::{replicate_rng, IslandWalker};
use isleforge::isles::pop_col_direct_fossil;
use isleforge::limits::{laplace_pc, LimitParams};
use isleforge::stats::chi_square_gof;
use isleforge::trees::{sample_gw_tree, OffspringLaw};
use isleforge::{Params, TestFunction};

fn standard() -> Vec<TestFunction> {
    vec![
        TestFunction::new(0.05, 0.2, 0.5, 0.8, 1.0).unwrap(),
        TestFunction::new(0.3, 0.6, 1.2, 1.5, 1.0).unwrap(),
        TestFunction::new(0.5, 0.9, 1.1, 2.0, 2.0).unwrap(),
    ]
}

// 30-digit quadrature of the fossil equation with the closed-form Rayleigh
// Laplace transform 1 - t sqrt(pi/2) e^{t^2/2} erfc(t/sqrt 2), root by secant
const FOSSIL_KAPPA: [((f64, f64), [f64; 3]); 3] = [
    ((1.0, 2.0), [1.1325579372526836, 0.68927908368211305, 0.66555455602480934]),
    ((2.0, 1.0), [1.4491415289891058, 0.72916909565273934, 0.70760774372549876]),
    ((1.0, 1.0), [1.6016787950360419, 0.97478782840334378, 0.94123627962948928]),
];

// 30-digit quadrature of the excursion-length series density
const NU_INTEGRAL: [((f64, f64), [f64; 3]); 2] = [
    ((1.0, 1.0), [0.90700835535033333, 0.16731607545352862, 0.082888820204849006]),
    ((2.0, 1.0), [0.97075199353941272, 0.35122721990394446, 0.32739822847907471]),
];

#[test]
fn fossil_cumulant_matches_high_precision_quadrature() {
    for ((c, s2), want) in FOSSIL_KAPPA {
        let p = Params::new(c, s2);
        for (f, w) in standard().iter().zip(want) {
            let k = solve_cumulant_fossil(f, &p, 1e-13).unwrap();
            assert!((k - w).abs() < 1e-9, "c={c} s2={s2}: {k} vs {w}");
        }
    }
}

#[test]
fn excursion_measure_integral_matches_series_quadrature() {
    for ((c, s2), want) in NU_INTEGRAL {
        let p = Params::new(c, s2);
        for (f, w) in standard().iter().zip(want) {
            let got = nu_integral(f, &p);
            assert!((got - w).abs() < 1e-9 * w.max(1.0), "c={c}: {got} vs {w}");
        }
    }
}

#[test]
fn fertile_rate_at_unit_c_and_variance_two() {
    let p = Params::new(1.0, 2.0);
    assert!((p.lambda() - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-15);
    assert!((p.lambda() - 0.5641895835477563).abs() < 1e-15);
}

#[test]
fn criticality_identity() {
    for (c, s2) in [(1.0, 2.0), (0.3, 1.0), (5.0, 0.7)] {
        let p = Params::new(c, s2);
        assert!((p.lambda() * p.theta_mean() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn laplace_pc_closed_forms() {
    let p = Params::new(1.0, 1.0);
    assert_eq!(laplace_pc(0.0, 0.0, &p), 1.0);
    // C alone is exponential with mean c
    for beta in [0.5, 1.0, 3.0] {
        assert!((laplace_pc(0.0, beta, &p) - 1.0 / (1.0 + beta)).abs() < 1e-12);
    }
    // x = 1: (1/sinh 1)^2 / (1 + coth 1) = tanh(1)/sinh(1)^2 ... at beta = 0
    let x: f64 = 1.0;
    let want = (x / x.sinh()).powi(2) / (x / x.tanh());
    assert!((laplace_pc(0.5, 0.0, &p) - want).abs() < 1e-12);
    assert!((want - 0.5514411).abs() < 1e-6);
}

#[test]
fn laplace_pc_single_precision() {
    let p32 = LimitParams::<f32>::new(1.0, 1.0);
    let p64 = Params::new(1.0, 1.0);
    let a = laplace_pc(0.7f32, 0.4, &p32) as f64;
    let b = laplace_pc(0.7, 0.4, &p64);
    assert!((a - b).abs() < 1e-5);
}

#[test]
fn total_progeny_small_sizes() {
    // P(size = n) = Catalan(n-1) / 2^{2n-1} for geometric(1/2)
    let law = OffspringLaw::geometric_half();
    let n = 400_000u64;
    let mut rng = replicate_rng(3, 0);
    // last cell: larger trees
    let mut counts = [0u64; 4];
    for _ in 0..n {
        match sample_gw_tree(&law, &mut rng, 3) {
            Ok(t) => counts[t.size() - 1] += 1,
            Err(_) => counts[3] += 1,
        }
    }
    let r = chi_square_gof(&counts, &[0.5, 0.125, 0.0625], 5.0, 0.001);
    assert!(r.pass, "{r:?}");
}

/// Fossil island at r = 2 under geometric(1/2): P = 1 with probability 1/2
/// (then C = 0), otherwise P = 2 and P(C = m) = (m + 1) 2^{-(m+3)}.
fn fossil_r2_probs(cells: usize) -> Vec<f64> {
    let mut p = vec![0.5];
    p.extend((0..cells).map(|m| (m + 1) as f64 * 0.5f64.powi(m as i32 + 3)));
    p
}

fn fossil_r2_cell(pop: u64, col: u64) -> usize {
    if pop == 1 {
        assert_eq!(col, 0);
        0
    } else {
        1 + col as usize
    }
}

#[test]
fn fossil_island_r2_law_by_enumeration() {
    let law = OffspringLaw::geometric_half();
    let cells = 12;
    let probs = fossil_r2_probs(cells);
    let n = 200_000;

    let mut walker = IslandWalker::new(&law, u64::MAX);
    let mut rng = replicate_rng(4, 0);
    let mut obs = vec![0u64; probs.len() + 1];
    for _ in 0..n {
        let pc = walker.fossil_island(2, &mut rng).unwrap();
        obs[fossil_r2_cell(pc.population, pc.colonies).min(probs.len())] += 1;
    }
    let r = chi_square_gof(&obs, &probs, 5.0, 0.001);
    assert!(r.pass, "walker: {r:?}");

    let mut rng = replicate_rng(4, 1);
    let mut obs = vec![0u64; probs.len() + 1];
    let mut done = 0;
    while done < n {
        let Ok(t) = sample_gw_tree(&law, &mut rng, 100_000) else { continue };
        done += 1;
        let pc = pop_col_direct_fossil(&t, 2);
        obs[fossil_r2_cell(pc.population, pc.colonies).min(probs.len())] += 1;
    }
    let r = chi_square_gof(&obs, &probs, 5.0, 0.001);
    assert!(r.pass, "direct: {r:?}");
}
