//! Latin hypercube designs and uniform feasible sampling.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::model::{known_violation, KnownConstraint};

/// `n` points, one per stratum along every axis, with uniform jitter inside
/// strata and independent random pairings across axes.
pub fn latin_hypercube(n: usize, dim: usize, bounds: &Bounds, seed: u64) -> Result<Vec<Vec<f64>>> {
    if bounds.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: bounds.dim() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(latin_hypercube_with(n, bounds, &mut rng))
}

pub(crate) fn latin_hypercube_with(n: usize, bounds: &Bounds, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let dim = bounds.dim();
    let mut points = vec![vec![0.0; dim]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for d in 0..dim {
        strata.shuffle(rng);
        let (lo, w) = (bounds.lower()[d], bounds.width(d));
        for (p, &s) in points.iter_mut().zip(&strata) {
            let u: f64 = rng.random();
            p[d] = (lo + w * (s as f64 + u) / n as f64).min(bounds.upper()[d]);
        }
    }
    points
}

/// Attempts per point before rejection sampling gives up.
pub const REJECTION_ATTEMPTS: usize = 10_000;

/// Uniform point of the box satisfying `known` (within `1e-9`), or `None`
/// after [`REJECTION_ATTEMPTS`] draws.
pub fn sample_feasible(bounds: &Bounds, known: &[KnownConstraint], rng: &mut impl Rng) -> Option<Vec<f64>> {
    for _ in 0..REJECTION_ATTEMPTS {
        let x: Vec<f64> = (0..bounds.dim())
            .map(|d| bounds.lower()[d] + bounds.width(d) * rng.random::<f64>())
            .collect();
        if known_violation(known, &x) <= 1e-9 {
            return Some(x);
        }
    }
    None
}
