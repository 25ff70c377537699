//! Stored benchmark minima against brute-force oracles.

use mipbo::benchmarks::{self, BenchmarkFn};

/// All points of a regular grid with `per_axis` points per coordinate.
fn grid(lo: &[f64], hi: &[f64], per_axis: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![Vec::new()];
    for d in 0..lo.len() {
        pts = pts
            .into_iter()
            .flat_map(|p: Vec<f64>| {
                (0..per_axis).map(move |i| {
                    let mut q = p.clone();
                    q.push(lo[d] + (hi[d] - lo[d]) * i as f64 / (per_axis - 1) as f64);
                    q
                })
            })
            .collect();
    }
    pts
}

/// Coarse grid followed by rounds of finer grids around the best cells,
/// over points accepted by `keep`.
fn zoom_min(f: impl Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], per_axis: usize, keep: impl Fn(&[f64]) -> bool) -> f64 {
    let mut scored: Vec<(f64, Vec<f64>)> =
        grid(lo, hi, per_axis).into_iter().filter(|p| keep(p)).map(|p| (f(&p), p)).collect();
    let mut best = scored.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let mut h: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| (b - a) / (per_axis - 1) as f64).collect();
    for _ in 0..6 {
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        let centers: Vec<Vec<f64>> = scored.iter().take(10).map(|s| s.1.clone()).collect();
        scored = Vec::new();
        for c in &centers {
            let clo: Vec<f64> = c.iter().zip(&h).zip(lo).map(|((v, s), l)| (v - s).max(*l)).collect();
            let chi: Vec<f64> = c.iter().zip(&h).zip(hi).map(|((v, s), u)| (v + s).min(*u)).collect();
            scored.extend(grid(&clo, &chi, 11).into_iter().filter(|p| keep(p)).map(|p| (f(&p), p)));
        }
        best = scored.iter().map(|s| s.0).fold(best, f64::min);
        h.iter_mut().for_each(|s| *s /= 5.0);
    }
    best
}

fn check(b: &BenchmarkFn, oracle: f64, tol: f64) {
    let (min, arg) = b.reference_min.clone().unwrap();
    assert!((b.eval(&arg).unwrap() - min).abs() <= 1e-12, "{}: stored argmin does not attain the stored value", b.name);
    assert!((oracle - min).abs() <= tol, "{}: oracle {oracle} vs stored {min}", b.name);
    assert!(min <= oracle + 1e-9, "{}: oracle found a lower value {oracle}", b.name);
}

fn plain_oracle(b: &BenchmarkFn, per_axis: usize) -> f64 {
    zoom_min(|x| b.eval(x).unwrap(), b.bounds.lower(), b.bounds.upper(), per_axis, |_| true)
}

#[test]
fn one_dimensional_minima() {
    for name in ["bumpy", "multimodal"] {
        let b = benchmarks::get(name).unwrap();
        check(&b, plain_oracle(&b, 200_001), 1e-9);
    }
}

#[test]
fn two_dimensional_minima() {
    for name in ["ackley", "branin", "rosenbrock"] {
        let b = benchmarks::get(name).unwrap();
        check(&b, plain_oracle(&b, 481), 1e-8);
    }
}

#[test]
fn branin_has_three_global_minimizers() {
    let b = benchmarks::get("branin").unwrap();
    let min = 5.0 / (4.0 * std::f64::consts::PI);
    for x in [[-std::f64::consts::PI, 12.275], [std::f64::consts::PI, 2.275], [9.42478, 2.475]] {
        assert!((b.eval(&x).unwrap() - min).abs() < 1e-5);
    }
}

#[test]
fn hartmann_minimum() {
    let b = benchmarks::get("hartmann3").unwrap();
    check(&b, plain_oracle(&b, 61), 1e-8);
}

#[test]
fn michalewicz_minimum_is_a_sum_of_coordinate_minima() {
    let b = benchmarks::get("michalewicz5").unwrap();
    let pi = std::f64::consts::PI;
    let oracle: f64 = (0..5)
        .map(|i| {
            let term = |v: f64| -v.sin() * ((i as f64 + 1.0) * v * v / pi).sin().powi(20);
            zoom_min(|x| term(x[0]), &[0.0], &[pi], 100_001, |_| true)
        })
        .sum();
    check(&b, oracle, 1e-8);
}

#[test]
fn ks224_minimum_on_the_feasible_set() {
    let b = benchmarks::get("ks224").unwrap();
    let feasible = |x: &[f64]| b.constraints.iter().all(|c| c.violation(x) <= 0.0);
    let oracle = zoom_min(|x| b.eval(x).unwrap(), b.bounds.lower(), b.bounds.upper(), 601, feasible);
    check(&b, oracle, 1e-6);
    // Stationarity at (4, 4) with the multiplier of x1 + x2 <= 8.
    let grad = [4.0 * 4.0 - 48.0, 2.0 * 4.0 - 40.0];
    assert_eq!(grad, [-32.0, -32.0]);
}
