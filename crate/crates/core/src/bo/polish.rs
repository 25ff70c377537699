//! Projected finite-difference descent used to polish solver output on the
//! exact acquisition function.

use crate::bounds::Bounds;
use crate::gp::GpModel;

/// Step of the central differences.
pub const FD_STEP: f64 = 1e-6;
const MAX_HALVINGS: usize = 20;

fn gradient(f: &impl Fn(&[f64]) -> f64, x: &[f64], bounds: &Bounds) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for d in 0..x.len() {
        let hi = (x[d] + FD_STEP).min(bounds.upper()[d]);
        let lo = (x[d] - FD_STEP).max(bounds.lower()[d]);
        if hi <= lo {
            continue;
        }
        probe[d] = hi;
        let fh = f(&probe);
        probe[d] = lo;
        let fl = f(&probe);
        probe[d] = x[d];
        g[d] = (fh - fl) / (hi - lo);
    }
    g
}

/// Minimizes `f` from `x0` by projected gradient steps, halving the step
/// until a feasible improvement appears. The result never scores worse than
/// `x0`.
pub fn polish_with(
    x0: &[f64],
    f: impl Fn(&[f64]) -> f64,
    steps: usize,
    step_size: f64,
    bounds: &Bounds,
    feasible: impl Fn(&[f64]) -> bool,
) -> Vec<f64> {
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return x;
    }
    for _ in 0..steps {
        let g = gradient(&f, &x, bounds);
        if g.iter().all(|v| v.abs() < 1e-12) {
            break;
        }
        let mut eta = step_size;
        let mut moved = false;
        for _ in 0..=MAX_HALVINGS {
            let mut y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - eta * b).collect();
            bounds.clamp(&mut y);
            if feasible(&y) {
                let fy = f(&y);
                if fy < fx {
                    x = y;
                    fx = fy;
                    moved = true;
                    break;
                }
            }
            eta *= 0.5;
        }
        if !moved {
            break;
        }
    }
    x
}

/// Polishes on the exact LCB `mu - sqrt(beta) sigma` of `gp`.
pub fn polish(x0: &[f64], gp: &GpModel, beta: f64, steps: usize, step_size: f64, bounds: &Bounds) -> Vec<f64> {
    polish_with(x0, |x| exact_lcb(gp, x, beta), steps, step_size, bounds, |_| true)
}

/// Exact LCB; infinite where the posterior cannot be evaluated.
pub fn exact_lcb(gp: &GpModel, x: &[f64], beta: f64) -> f64 {
    match gp.posterior(x) {
        Ok((m, v)) => super::lcb(m, v.sqrt(), beta),
        Err(_) => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{Dataset, KernelParams};

    fn bowl() -> GpModel {
        let x: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64 / 6.0]).collect();
        let y = x.iter().map(|v| (v[0] - 0.37).powi(2)).collect();
        GpModel::new(Dataset::new(x, y).unwrap(), KernelParams::new(0.5, 0.4)).unwrap()
    }

    #[test]
    fn reaches_the_bowl_minimum() {
        let gp = bowl();
        let b = Bounds::unit(1);
        let grid = (0..=100_000)
            .map(|i| i as f64 / 100_000.0)
            .map(|x| (exact_lcb(&gp, &[x], 0.0), x))
            .min_by(|a, c| a.0.total_cmp(&c.0))
            .unwrap();
        let x = polish(&[0.98], &gp, 0.0, 200, 0.5, &b);
        assert!((x[0] - grid.1).abs() < 1e-3, "{} vs {}", x[0], grid.1);
    }

    #[test]
    fn never_worse_and_stays_near_stationary_points() {
        let gp = bowl();
        let b = Bounds::unit(1);
        for s in 0..20 {
            let x0 = [s as f64 / 19.0];
            let x = polish(&x0, &gp, 2.0, 50, 0.2, &b);
            assert!(exact_lcb(&gp, &x, 2.0) <= exact_lcb(&gp, &x0, 2.0));
            assert!(b.contains(&x, 0.0));
        }
        let star = polish(&[0.98], &gp, 0.0, 500, 0.5, &b);
        let again = polish(&star, &gp, 0.0, 50, 0.5, &b);
        assert!((again[0] - star[0]).abs() < 1e-4);
    }

    #[test]
    fn infeasible_steps_are_refused() {
        let b = Bounds::unit(2);
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + (x[1] - 1.0).powi(2);
        let x = polish_with(&[0.1, 0.1], f, 100, 0.5, &b, |x| x[0] + x[1] <= 1.0);
        assert!(x[0] + x[1] <= 1.0);
        assert!(f(&x) < f(&[0.1, 0.1]));
    }
}
