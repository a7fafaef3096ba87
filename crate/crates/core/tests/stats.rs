use std::time::Instant;

use cvnn_core::rng;
use cvnn_core::stats::{exact_p, spearman, t_approx_p, PMethod, EXACT_STATE_BUDGET};
use rand::seq::SliceRandom;
use rand::Rng;

fn oracle_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&u| u < v).count() as f64;
            let eq = x.iter().filter(|&&u| u == v).count() as f64;
            1.0 + less + (eq - 1.0) / 2.0
        })
        .collect()
}

fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn enumerated_p(x: &[f64], y: &[f64]) -> f64 {
    let rx = oracle_ranks(x);
    let ry = oracle_ranks(y);
    let obs = oracle_pearson(&rx, &ry).abs();
    let perms = permutations(x.len());
    let hits = perms
        .iter()
        .filter(|p| {
            let yp: Vec<f64> = p.iter().map(|&i| ry[i]).collect();
            oracle_pearson(&rx, &yp).abs() >= obs - 1e-12
        })
        .count();
    hits as f64 / perms.len() as f64
}

fn tied_sequence(n: usize, levels: u32, rng: &mut rng::Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.5).collect()
}

#[test]
fn scc_matches_oracle_on_tied_data() {
    let mut rng = rng::seeded(11);
    let mut checked = 0;
    while checked < 100 {
        let n = rng.random_range(3..30);
        let x = tied_sequence(n, 5, &mut rng);
        let y = tied_sequence(n, 4, &mut rng);
        let Ok(c) = spearman(&x, &y) else { continue };
        let want = oracle_pearson(&oracle_ranks(&x), &oracle_ranks(&y));
        assert!((c.scc - want).abs() <= 1e-12, "{} vs {want}", c.scc);
        checked += 1;
    }
}

#[test]
fn exact_p_matches_enumeration() {
    let mut rng = rng::seeded(12);
    for n in 3..=7 {
        for trial in 0..20 {
            let (x, y) = if trial % 2 == 0 {
                (tied_sequence(n, 3, &mut rng), tied_sequence(n, 4, &mut rng))
            } else {
                let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                (x, y)
            };
            let Ok(c) = spearman(&x, &y) else { continue };
            assert_eq!(c.method, PMethod::Exact);
            let want = enumerated_p(&x, &y);
            assert!((c.p - want).abs() <= 1e-12, "n={n}: {} vs {want}", c.p);
        }
    }
}

#[test]
fn exact_and_t_agree_at_fifteen() {
    let mut rng = rng::seeded(13);
    for _ in 0..20 {
        let x: Vec<f64> = (0..15).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..15).map(|_| rng.random::<f64>()).collect();
        let c = spearman(&x, &y).unwrap();
        assert_eq!(c.method, PMethod::Exact);
        let t = t_approx_p(c.scc, 15);
        assert!((c.p - t).abs() <= 0.02, "exact {} vs t {t} at r = {}", c.p, c.scc);
    }
}

#[test]
fn rank_invariance_and_symmetry() {
    let mut rng = rng::seeded(14);
    for _ in 0..50 {
        let n = rng.random_range(5..40);
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let base = spearman(&x, &y).unwrap();
        let fx: Vec<f64> = x.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
        let fy: Vec<f64> = y.iter().map(|v| v.powi(3) + 2.0 * v).collect();
        assert_eq!(spearman(&fx, &fy).unwrap().scc, base.scc);
        let swapped = spearman(&y, &x).unwrap();
        assert_eq!(swapped.scc, base.scc);
        assert_eq!(swapped.p, base.p);
    }
}

#[test]
fn shuffled_null_is_near_zero() {
    let mut rng = rng::seeded(15);
    let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
    let mut total = 0.0;
    for _ in 0..100 {
        let mut y = x.clone();
        y.shuffle(&mut rng);
        total += spearman(&x, &y).unwrap().scc.abs();
    }
    assert!(total / 100.0 < 0.3);
}

#[test]
fn p_falls_with_n_at_fixed_pattern() {
    // Pattern: identity with adjacent pairs swapped keeps r high.
    let pattern = |n: usize| -> (Vec<f64>, Vec<f64>) {
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mut y = x.clone();
        for k in (0..n - 1).step_by(4) {
            y.swap(k, k + 1);
        }
        (x, y)
    };
    let mut last = 1.0;
    for n in [6, 10, 14, 18, 30, 60] {
        let (x, y) = pattern(n);
        let c = spearman(&x, &y).unwrap();
        assert!(c.scc > 0.8);
        assert!(c.p < last, "n={n}: p {} not below {last}", c.p);
        last = c.p;
    }
}

#[test]
fn exact_p_at_nineteen() {
    let mut rng = rng::seeded(16);
    let x: Vec<f64> = (0..19).map(|i| i as f64).collect();
    let strong: Vec<f64> = x.iter().map(|v| v + 4.0 * rng.random::<f64>()).collect();
    let start = Instant::now();
    let c = spearman(&x, &strong).unwrap();
    eprintln!("n=19 strong: r={} p={} method={} in {:?}", c.scc, c.p, c.method, start.elapsed());
    assert_eq!(c.method, PMethod::Exact);
    let t = t_approx_p(c.scc, 19);
    assert!(c.p > 0.0 && (c.p - t).abs() < 0.02);
    let mut weak = x.clone();
    weak.shuffle(&mut rng);
    let start = Instant::now();
    let rx: Vec<f64> = x.iter().map(|v| v + 1.0).collect();
    let ry = cvnn_core::stats::midranks(&weak).unwrap();
    let p = exact_p(&rx, &ry, EXACT_STATE_BUDGET);
    eprintln!("n=19 weak: p={p:?} in {:?}", start.elapsed());
}
