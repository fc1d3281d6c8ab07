//! Two-sample and goodness-of-fit tests used to compare simulations with
//! their limits.

use std::collections::{BTreeSet, HashMap};
use std::hash::Hash;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Outcome of a single test.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub test: String,
    pub statistic: f64,
    /// Present for tests with a p-value.
    pub p_value: Option<f64>,
    /// Present for tests against a target value.
    pub z_score: Option<f64>,
    pub n_a: usize,
    pub n_b: usize,
    pub pass: bool,
}

impl ComparisonReport {
    /// p-value, or 1 when the test has none.
    pub fn p(&self) -> f64 {
        self.p_value.unwrap_or(1.0)
    }
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample KS statistic of already sorted samples.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// KS statistic of a labelling of the pooled sorted sample; `ends` marks the
/// last index of each run of tied values.
fn ks_labelled(labels: &[bool], ends: &[bool], na: usize, nb: usize) -> f64 {
    let (mut ca, mut cb) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    for (&in_a, &end) in labels.iter().zip(ends) {
        if in_a {
            ca += 1;
        } else {
            cb += 1;
        }
        if end {
            d = d.max((ca as f64 / na as f64 - cb as f64 / nb as f64).abs());
        }
    }
    d
}

/// Two-sample Kolmogorov-Smirnov test with a permutation p-value
/// `(1 + #{D* ≥ D}) / (1 + permutations)`; passes when `p > alpha`.
pub fn ks_two_sample(a: &[f64], b: &[f64], permutations: usize, alpha: f64, seed: u64) -> ComparisonReport {
    assert!(!a.is_empty() && !b.is_empty(), "samples must be nonempty");
    assert!(permutations >= 999, "at least 999 permutations");
    let (sa, sb) = (sorted(a), sorted(b));
    let d = ks_statistic(&sa, &sb);
    let mut pooled: Vec<(f64, bool)> = a.iter().map(|&x| (x, true)).chain(b.iter().map(|&x| (x, false))).collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let ends: Vec<bool> = (0..pooled.len())
        .map(|i| i + 1 == pooled.len() || pooled[i + 1].0 != pooled[i].0)
        .collect();
    let mut labels: Vec<bool> = pooled.iter().map(|e| e.1).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = 1e-12;
    let mut exceed = 0usize;
    for _ in 0..permutations {
        labels.shuffle(&mut rng);
        if ks_labelled(&labels, &ends, a.len(), b.len()) >= d - tol {
            exceed += 1;
        }
    }
    let p = (1 + exceed) as f64 / (1 + permutations) as f64;
    ComparisonReport {
        test: "ks_two_sample".into(),
        statistic: d,
        p_value: Some(p),
        z_score: None,
        n_a: a.len(),
        n_b: b.len(),
        pass: p > alpha,
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn target_report(test: &str, xs: &[f64], target: f64, tolerance_rel: f64) -> ComparisonReport {
    assert!(!xs.is_empty(), "samples must be nonempty");
    let (m, se) = mean_and_se(xs);
    let diff = (m - target).abs();
    let allowed = 3.0 * se + tolerance_rel * target.abs() + 1e-12 * target.abs().max(1.0);
    ComparisonReport {
        test: test.into(),
        statistic: m,
        p_value: None,
        z_score: Some(if se > 0.0 { (m - target) / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY }),
        n_a: xs.len(),
        n_b: 0,
        pass: diff <= allowed,
    }
}

/// Sample mean against `target`: passes when within `3 SE + tolerance_rel·|target|`.
pub fn mean_test(samples: &[f64], target: f64, tolerance_rel: f64) -> ComparisonReport {
    target_report("mean_test", samples, target, tolerance_rel)
}

/// Empirical `E e^{−αP−βC}` at each grid point against `target(α, β)`.
pub fn laplace_grid_compare<F: Fn(f64, f64) -> f64>(
    samples: &[(f64, f64)],
    grid: &[(f64, f64)],
    target: F,
    allowance: f64,
) -> Vec<ComparisonReport> {
    grid.iter()
        .map(|&(alpha, beta)| {
            assert!(alpha >= 0.0 && beta >= 0.0);
            let xs: Vec<f64> = samples.iter().map(|&(p, c)| (-alpha * p - beta * c).exp()).collect();
            let mut r = target_report("laplace_grid", &xs, target(alpha, beta), allowance);
            r.test = format!("laplace_grid({alpha},{beta})");
            r
        })
        .collect()
}

/// Coordinate-wise KS between two collections of prefix coordinate vectors,
/// Bonferroni-adjusted. Coordinates constant in both samples are skipped.
pub fn fdd_compare(a: &[Vec<(f64, f64)>], b: &[Vec<(f64, f64)>], permutations: usize, alpha: f64, seed: u64) -> ComparisonReport {
    assert!(!a.is_empty() && !b.is_empty());
    let width = a[0].len();
    assert!(a.iter().chain(b).all(|v| v.len() == width), "prefixes must share a shape");
    let column = |xs: &[Vec<(f64, f64)>], i: usize, second: bool| -> Vec<f64> {
        xs.iter().map(|v| if second { v[i].1 } else { v[i].0 }).collect()
    };
    let mut reports = Vec::new();
    for i in 0..width {
        for second in [false, true] {
            let (ca, cb) = (column(a, i, second), column(b, i, second));
            let constant = ca.iter().chain(&cb).all(|&x| x == ca[0]);
            if !constant {
                reports.push(ks_two_sample(&ca, &cb, permutations, alpha, seed.wrapping_add(reports.len() as u64)));
            }
        }
    }
    let m = reports.len().max(1) as f64;
    let p_min = reports.iter().map(|r| r.p()).fold(1.0, f64::min);
    let adjusted = (p_min * m).min(1.0);
    ComparisonReport {
        test: "fdd_compare".into(),
        statistic: reports.iter().map(|r| r.statistic).fold(0.0, f64::max),
        p_value: Some(adjusted),
        z_score: None,
        n_a: a.len(),
        n_b: b.len(),
        pass: adjusted > alpha,
    }
}

fn chi_square_p(stat: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    let d = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    (1.0 - d.cdf(stat)).clamp(0.0, 1.0)
}

/// Groups consecutive cells until each group's smallest expected count
/// reaches `min_expected`; a short last group joins the previous one.
fn merge_cells(cells: &[Vec<f64>], expected: &[f64], min_expected: f64) -> Vec<Vec<f64>> {
    let width = cells.first().map_or(0, Vec::len);
    let mut out: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut cur = (vec![0.0; width], 0.0);
    for (cell, &e) in cells.iter().zip(expected) {
        for (x, y) in cur.0.iter_mut().zip(cell) {
            *x += y;
        }
        cur.1 += e;
        if cur.1 >= min_expected {
            out.push(std::mem::replace(&mut cur, (vec![0.0; width], 0.0)));
        }
    }
    if cur.0.iter().any(|&x| x > 0.0) || cur.1 > 0.0 {
        match out.last_mut() {
            Some(last) => {
                for (x, y) in last.0.iter_mut().zip(&cur.0) {
                    *x += y;
                }
            }
            None => out.push(cur),
        }
    }
    out.into_iter().map(|g| g.0).collect()
}

/// Chi-square test that two count tables over the same categories come from
/// one distribution. Cells with small expected counts are pooled.
pub fn chi_square_homogeneity<K: Hash + Eq + Ord + Clone>(
    a: &HashMap<K, u64>,
    b: &HashMap<K, u64>,
    min_expected: u32,
) -> ComparisonReport {
    let keys: BTreeSet<K> = a.keys().chain(b.keys()).cloned().collect();
    let (na, nb) = (a.values().sum::<u64>() as f64, b.values().sum::<u64>() as f64);
    assert!(na > 0.0 && nb > 0.0, "count tables must be nonempty");
    let total = na + nb;
    let cells: Vec<Vec<f64>> = keys
        .iter()
        .map(|k| vec![*a.get(k).unwrap_or(&0) as f64, *b.get(k).unwrap_or(&0) as f64])
        .collect();
    // smallest expected count of the cell across the two rows
    let expected: Vec<f64> = cells.iter().map(|c| (c[0] + c[1]) * na.min(nb) / total).collect();
    let groups = merge_cells(&cells, &expected, min_expected as f64);
    let mut stat = 0.0;
    for g in &groups {
        let col = g[0] + g[1];
        for (obs, n) in [(g[0], na), (g[1], nb)] {
            let e = col * n / total;
            if e > 0.0 {
                stat += (obs - e) * (obs - e) / e;
            }
        }
    }
    let p = chi_square_p(stat, groups.len().saturating_sub(1));
    ComparisonReport {
        test: "chi_square_homogeneity".into(),
        statistic: stat,
        p_value: Some(p),
        z_score: None,
        n_a: na as usize,
        n_b: nb as usize,
        pass: p > 0.01,
    }
}

/// Chi-square goodness of fit of `observed[k]` against probabilities
/// `probs[k]`; the mass left over (`1 − Σ probs`) and any observations past
/// the table form a final cell.
pub fn chi_square_gof(observed: &[u64], probs: &[f64], min_expected: f64, alpha: f64) -> ComparisonReport {
    let n: u64 = observed.iter().sum();
    assert!(n > 0, "no observations");
    let nf = n as f64;
    let mut cells: Vec<Vec<f64>> = Vec::new();
    let mut expected = Vec::new();
    let mut seen = 0u64;
    for (k, &p) in probs.iter().enumerate() {
        let o = observed.get(k).copied().unwrap_or(0);
        seen += o;
        cells.push(vec![o as f64, p * nf]);
        expected.push(p * nf);
    }
    let rest_p = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    cells.push(vec![(n - seen) as f64, rest_p * nf]);
    expected.push(rest_p * nf);
    let groups = merge_cells(&cells, &expected, min_expected);
    let mut stat = 0.0;
    for g in &groups {
        if g[1] > 0.0 {
            stat += (g[0] - g[1]) * (g[0] - g[1]) / g[1];
        } else if g[0] > 0.0 {
            stat = f64::INFINITY;
        }
    }
    let p = chi_square_p(stat, groups.len().saturating_sub(1));
    ComparisonReport {
        test: "chi_square_gof".into(),
        statistic: stat,
        p_value: Some(p),
        z_score: None,
        n_a: n as usize,
        n_b: 0,
        pass: p > alpha,
    }
}

/// Goodness of fit of counts to Poisson(`mean`).
pub fn poisson_count_test(counts: &[u64], mean: f64, alpha: f64) -> ComparisonReport {
    let max = counts.iter().copied().max().unwrap_or(0) as usize;
    let mut observed = vec![0u64; max + 1];
    for &k in counts {
        observed[k as usize] += 1;
    }
    let mut probs = Vec::with_capacity(max + 1);
    let mut p = (-mean).exp();
    for k in 0..=max {
        probs.push(p);
        p *= mean / (k + 1) as f64;
    }
    let mut r = chi_square_gof(&observed, &probs, 5.0, alpha);
    r.test = "poisson_count".into();
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn ks_identical_samples() {
        let a: Vec<f64> = (0..100).map(|i| (i % 7) as f64).collect();
        let r = ks_two_sample(&a, &a, 999, 0.01, 1);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, Some(1.0));
        assert!(r.pass);
    }

    #[test]
    fn ks_separated_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>() + 0.5).collect();
        let r = ks_two_sample(&a, &b, 1999, 0.01, 3);
        assert!(r.p() < 0.001);
        assert!((r.statistic - 0.5).abs() < 0.03);
    }

    #[test]
    fn ks_statistic_with_ties() {
        let a = [1.0, 1.0, 2.0];
        let b = [1.0, 2.0, 2.0];
        assert!((ks_statistic(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
        let pooled = [(1.0, true), (1.0, true), (1.0, false), (2.0, true), (2.0, false), (2.0, false)];
        let labels: Vec<bool> = pooled.iter().map(|e| e.1).collect();
        let ends = [false, false, true, false, false, true];
        assert!((ks_labelled(&labels, &ends, 3, 3) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mean_test_cases() {
        assert!(mean_test(&[2.0; 10], 2.0, 0.0).pass);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..1_000_000).map(|_| 1.5 * (rng.gen::<f64>() * 2.0)).collect();
        assert!(!mean_test(&xs, 1.0, 0.05).pass);
        assert!(mean_test(&xs, 1.5, 0.0).pass);
    }

    #[test]
    fn laplace_grid_origin() {
        let samples = vec![(1.0, 2.0), (0.5, 0.1)];
        let r = laplace_grid_compare(&samples, &[(0.0, 0.0)], |_, _| 1.0, 0.0);
        assert_eq!(r[0].statistic, 1.0);
        assert!(r[0].pass);
    }

    #[test]
    fn chi_square_gof_fair_die() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut obs = [0u64; 6];
        for _ in 0..60_000 {
            obs[rng.gen_range(0..6)] += 1;
        }
        assert!(chi_square_gof(&obs, &[1.0 / 6.0; 6], 5.0, 0.001).pass);
        let loaded = [12_000, 10_000, 10_000, 10_000, 10_000, 8_000];
        assert!(!chi_square_gof(&loaded, &[1.0 / 6.0; 6], 5.0, 0.001).pass);
    }

    #[test]
    fn homogeneity_detects_shift() {
        let a: HashMap<u32, u64> = [(0, 500), (1, 300), (2, 200), (3, 2)].into_iter().collect();
        let same: HashMap<u32, u64> = [(0, 1000), (1, 600), (2, 400), (4, 1)].into_iter().collect();
        assert!(chi_square_homogeneity(&a, &same, 5).p() > 0.5);
        let other: HashMap<u32, u64> = [(0, 300), (1, 300), (2, 400)].into_iter().collect();
        assert!(chi_square_homogeneity(&a, &other, 5).p() < 1e-6);
    }

    #[test]
    fn null_calibration() {
        // rejection rate at level 0.01 over 300 null trials stays within [0, 0.03]
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut ks_rejections = 0;
        let mut chi_rejections = 0;
        let mut mean_rejections = 0;
        let mut poisson_rejections = 0;
        let trials = 300;
        for t in 0..trials {
            let a: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
            let b: Vec<f64> = (0..300).map(|_| rng.gen::<f64>()).collect();
            ks_rejections += (ks_two_sample(&a, &b, 999, 0.01, t).p() <= 0.01) as usize;
            let mut ha = HashMap::new();
            let mut hb = HashMap::new();
            for _ in 0..500 {
                *ha.entry(rng.gen_range(0..5u8)).or_insert(0) += 1;
                *hb.entry(rng.gen_range(0..5u8)).or_insert(0) += 1;
            }
            chi_rejections += (chi_square_homogeneity(&ha, &hb, 5).p() <= 0.01) as usize;
            // mean test at zero tolerance rejects only beyond 3 SE
            mean_rejections += !mean_test(&a, 0.5, 0.0).pass as usize;
            let counts: Vec<u64> = (0..500).map(|_| crate::limits::poisson(2.0, &mut rng)).collect();
            poisson_rejections += (poisson_count_test(&counts, 2.0, 0.01).p() <= 0.01) as usize;
        }
        for (name, r) in [("ks", ks_rejections), ("chi", chi_rejections), ("mean", mean_rejections), ("poisson", poisson_rejections)] {
            assert!(r as f64 / trials as f64 <= 0.03, "{name}: {r}");
        }
    }
}
