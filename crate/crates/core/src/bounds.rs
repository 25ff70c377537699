use crate::error::{Error, Result};

/// Axis-aligned box `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidInput("bounds need at least one dimension".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        for (d, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidInput(format!("bound {d} is not finite")));
            }
            if hi <= lo {
                return Err(Error::InvalidInput(format!(
                    "degenerate bound in dimension {d}: [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        Self { lower: vec![0.0; dim], upper: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, d: usize) -> f64 {
        self.upper[d] - self.lower[d]
    }

    /// Euclidean length of the box diagonal.
    pub fn diagonal(&self) -> f64 {
        (0..self.dim()).map(|d| self.width(d).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= lo - tol && *v <= hi + tol)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (lo, hi)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*lo, *hi);
        }
    }

    /// Sub-box on the given coordinates, in the given order.
    pub fn select(&self, dims: &[usize]) -> Self {
        Self {
            lower: dims.iter().map(|&d| self.lower[d]).collect(),
            upper: dims.iter().map(|&d| self.upper[d]).collect(),
        }
    }

    /// Largest Euclidean distance from `c` to any point of the box.
    pub fn max_distance_from(&self, c: &[f64]) -> f64 {
        c.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(ci, (lo, hi))| (ci - lo).abs().max((hi - ci).abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Smallest Euclidean distance from `c` to the box.
    pub fn min_distance_from(&self, c: &[f64]) -> f64 {
        c.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(ci, (lo, hi))| (ci - ci.clamp(*lo, *hi)).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}
