use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// Diagonal jitters tried, in order, when a Gram matrix fails to factor.
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Cholesky factor of `m + delta I` for the smallest `delta` on the ladder
/// that succeeds. Returns the factor and the jitter used.
pub fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    for &delta in &JITTER_LADDER {
        let mut a = m.clone();
        if delta > 0.0 {
            for i in 0..a.nrows() {
                a[(i, i)] += delta;
            }
        }
        if let Some(chol) = Cholesky::new(a) {
            if chol.l_dirty().diagonal().iter().all(|v| v.is_finite() && *v > 0.0) {
                return Ok((chol, delta));
            }
        }
    }
    Err(Error::NotPositiveDefinite { tried: JITTER_LADDER.to_vec() })
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_rescues_semidefinite_matrix() {
        // rank one: needs jitter
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (chol, delta) = cholesky_with_jitter(&m).unwrap();
        assert!(delta > 0.0);
        let rebuilt = chol.l() * chol.l().transpose();
        assert!((rebuilt[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn indefinite_matrix_fails() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match cholesky_with_jitter(&m) {
            Err(Error::NotPositiveDefinite { tried }) => assert_eq!(tried.len(), JITTER_LADDER.len()),
            other => panic!("unexpected {other:?}"),
        }
    }
}
