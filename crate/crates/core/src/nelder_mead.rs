//! Derivative-free simplex search with box projection.

use crate::bounds::Bounds;

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadConfig {
    /// Both the simplex-size and the value-spread tolerance.
    pub tol: f64,
    pub max_iterations: usize,
    /// Start point; `None` starts at the origin projected onto the box.
    pub x0: Option<Vec<f64>>,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self { tol: 1e-6, max_iterations: 1000, x0: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

const RHO: f64 = 1.0;
const CHI: f64 = 2.0;
const PSI: f64 = 0.5;
const SIGMA: f64 = 0.5;

fn combine(a: f64, xbar: &[f64], b: f64, worst: &[f64], bounds: &Bounds) -> Vec<f64> {
    let mut y: Vec<f64> = xbar.iter().zip(worst).map(|(m, w)| a * m + b * w).collect();
    bounds.clamp(&mut y);
    y
}

/// Minimizes `f` with reflection, expansion, contraction and shrink steps;
/// every trial point is projected onto `bounds`. Returns the best point found.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, bounds: &Bounds, config: &NelderMeadConfig) -> NelderMeadResult {
    let n = bounds.dim();
    let mut x0 = config.x0.clone().unwrap_or_else(|| vec![0.0; n]);
    bounds.clamp(&mut x0);
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut sim = vec![x0.clone()];
    for k in 0..n {
        let mut y = x0.clone();
        y[k] = if y[k] != 0.0 { 1.05 * y[k] } else { 0.00025 };
        if y[k] > bounds.upper()[k] {
            y[k] = 2.0 * bounds.upper()[k] - y[k];
        }
        bounds.clamp(&mut y);
        sim.push(y);
    }
    let mut fsim: Vec<f64> = sim.iter().map(|x| eval(x)).collect();
    let sort = |sim: &mut Vec<Vec<f64>>, fsim: &mut Vec<f64>| {
        let mut idx: Vec<usize> = (0..fsim.len()).collect();
        idx.sort_by(|&a, &b| fsim[a].total_cmp(&fsim[b]));
        *sim = idx.iter().map(|&i| sim[i].clone()).collect();
        *fsim = idx.iter().map(|&i| fsim[i]).collect();
    };
    sort(&mut sim, &mut fsim);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        let size = sim[1..]
            .iter()
            .flat_map(|x| x.iter().zip(&sim[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let spread = fsim[1..].iter().map(|v| (v - fsim[0]).abs()).fold(0.0, f64::max);
        if size <= config.tol && spread <= config.tol {
            converged = true;
            break;
        }
        let mut xbar = vec![0.0; n];
        for x in &sim[..n] {
            for (m, v) in xbar.iter_mut().zip(x) {
                *m += v / n as f64;
            }
        }
        let worst = sim[n].clone();
        let xr = combine(1.0 + RHO, &xbar, -RHO, &worst, bounds);
        let fxr = eval(&xr);
        let mut shrink = false;
        if fxr < fsim[0] {
            let xe = combine(1.0 + RHO * CHI, &xbar, -RHO * CHI, &worst, bounds);
            let fxe = eval(&xe);
            if fxe < fxr {
                sim[n] = xe;
                fsim[n] = fxe;
            } else {
                sim[n] = xr;
                fsim[n] = fxr;
            }
        } else if fxr < fsim[n - 1] {
            sim[n] = xr;
            fsim[n] = fxr;
        } else if fxr < fsim[n] {
            let xc = combine(1.0 + PSI * RHO, &xbar, -PSI * RHO, &worst, bounds);
            let fxc = eval(&xc);
            if fxc <= fxr {
                sim[n] = xc;
                fsim[n] = fxc;
            } else {
                shrink = true;
            }
        } else {
            let xcc = combine(1.0 - PSI, &xbar, PSI, &worst, bounds);
            let fxcc = eval(&xcc);
            if fxcc < fsim[n] {
                sim[n] = xcc;
                fsim[n] = fxcc;
            } else {
                shrink = true;
            }
        }
        if shrink {
            for j in 1..=n {
                let best = sim[0].clone();
                let y = combine(1.0 - SIGMA, &best, SIGMA, &sim[j], bounds);
                fsim[j] = eval(&y);
                sim[j] = y;
            }
        }
        iterations += 1;
        sort(&mut sim, &mut fsim);
    }
    NelderMeadResult { x: sim[0].clone(), value: fsim[0], iterations, evaluations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convex_1d() {
        let b = Bounds::new(vec![0.0], vec![10.0]).unwrap();
        let r = nelder_mead(|x| (x[0] - 3.0).powi(2), &b, &NelderMeadConfig::default());
        assert!((r.x[0] - 3.0).abs() < 1e-3);
        assert!(r.converged);
    }

    #[test]
    fn rosenbrock_from_the_canonical_start() {
        let b = Bounds::new(vec![-2.0, -1.0], vec![2.0, 3.0]).unwrap();
        let cfg = NelderMeadConfig { x0: Some(vec![-1.0, 1.0]), ..NelderMeadConfig::default() };
        let r = nelder_mead(|x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2), &b, &cfg);
        assert!(r.value < 1e-3, "{r:?}");
        assert!(r.iterations <= 1000);
    }

    #[test]
    fn stays_in_the_box() {
        let b = Bounds::new(vec![1.0, 1.0], vec![2.0, 2.0]).unwrap();
        let r = nelder_mead(|x| x[0] + x[1], &b, &NelderMeadConfig::default());
        assert!(b.contains(&r.x, 0.0));
        assert!((r.value - 2.0).abs() < 1e-5);
    }

    #[test]
    fn deterministic() {
        let b = Bounds::unit(3);
        let f = |x: &[f64]| x.iter().map(|v| (v - 0.3).powi(2) + (7.0 * v).sin()).sum::<f64>();
        let a = nelder_mead(f, &b, &NelderMeadConfig::default());
        let c = nelder_mead(f, &b, &NelderMeadConfig::default());
        assert_eq!(a, c);
    }
}
