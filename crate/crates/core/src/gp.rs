//! Exact Gaussian-process regression with the Matérn-3/2 kernel.
//!
//! Inputs are expected in scaled units (see [`standardize`]); the kernel is a
//! function of the scaled distance `r = |x - x'| / l`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::{cholesky_with_jitter, distance, squared_distance};

pub const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Search box for the kernel variance during fitting.
pub const VARIANCE_BOUNDS: (f64, f64) = (0.05, 20.0);
/// Search box for the lengthscale during fitting.
pub const LENGTHSCALE_BOUNDS: (f64, f64) = (0.005, 20.0);
pub const DEFAULT_NOISE: f64 = 1e-6;
pub const DEFAULT_RESTARTS: usize = 10;

/// Matérn-3/2 kernel value `variance (1 + sqrt(3) r) exp(-sqrt(3) r)`.
pub fn matern32(r: f64, variance: f64) -> Result<f64> {
    if r < 0.0 || r.is_nan() {
        return Err(Error::NegativeDistance(r));
    }
    Ok(k32(r, variance))
}

/// Analytic second derivative of [`matern32`] with respect to `r`.
pub fn kernel_second_derivative(r: f64, variance: f64) -> Result<f64> {
    if r < 0.0 || r.is_nan() {
        return Err(Error::NegativeDistance(r));
    }
    Ok(3.0 * variance * (SQRT3 * r - 1.0) * (-SQRT3 * r).exp())
}

#[inline]
pub(crate) fn k32(r: f64, variance: f64) -> f64 {
    let s = SQRT3 * r;
    variance * (1.0 + s) * (-s).exp()
}

/// `d k / d log(l)` at scaled distance `r`.
#[inline]
fn k32_dlog_lengthscale(r: f64, variance: f64) -> f64 {
    3.0 * variance * r * r * (-SQRT3 * r).exp()
}

/// Observed samples: `x` rows of dimension `dim` and outputs `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

/// Rows closer than this are treated as duplicates.
pub const DUPLICATE_TOL: f64 = 1e-12;

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidInput("dataset needs at least one sample".into()));
        }
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
        }
        let dim = x[0].len();
        if dim == 0 {
            return Err(Error::InvalidInput("samples need at least one coordinate".into()));
        }
        for row in &x {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite input coordinate".into()));
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite output value".into()));
        }
        for i in 0..x.len() {
            for j in 0..i {
                if distance(&x[i], &x[j]) <= DUPLICATE_TOL {
                    return Err(Error::DuplicatePoint(j, i));
                }
            }
        }
        Ok(Self { x, y })
    }

    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Appends a sample, refusing near-duplicates.
    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if let Some(j) = self.x.iter().position(|row| distance(row, &x) <= DUPLICATE_TOL) {
            return Err(Error::DuplicatePoint(j, self.len()));
        }
        self.x.push(x);
        self.y.push(y);
        Ok(())
    }

    /// Dataset restricted to the given input coordinates.
    pub fn select_dims(&self, dims: &[usize]) -> Vec<Vec<f64>> {
        self.x.iter().map(|row| dims.iter().map(|&d| row[d]).collect()).collect()
    }
}

/// Affine maps between original units and the unit box / unit output range.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingTransform {
    pub input_lb: Vec<f64>,
    pub input_ub: Vec<f64>,
    pub output_min: f64,
    pub output_max: f64,
}

impl ScalingTransform {
    pub fn scale_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(d, v)| (v - self.input_lb[d]) / (self.input_ub[d] - self.input_lb[d]))
            .collect()
    }

    pub fn unscale_x(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(d, v)| self.input_lb[d] + v * (self.input_ub[d] - self.input_lb[d]))
            .collect()
    }

    pub fn scale_y(&self, y: f64) -> f64 {
        let span = self.output_max - self.output_min;
        if span > 0.0 {
            (y - self.output_min) / span
        } else {
            0.5
        }
    }

    pub fn unscale_y(&self, s: f64) -> f64 {
        let span = self.output_max - self.output_min;
        if span > 0.0 {
            self.output_min + s * span
        } else {
            self.output_min
        }
    }
}

/// Maps inputs affinely onto `[0,1]^D` and outputs onto `[0,1]` (a constant
/// output column maps to 0.5).
pub fn standardize(dataset: &Dataset, bounds: &Bounds) -> Result<(Dataset, ScalingTransform)> {
    if bounds.dim() != dataset.dim() {
        return Err(Error::DimensionMismatch { expected: dataset.dim(), got: bounds.dim() });
    }
    for (i, row) in dataset.x().iter().enumerate() {
        for (d, v) in row.iter().enumerate() {
            let slack = 1e-12 * (1.0 + bounds.width(d));
            if *v < bounds.lower()[d] - slack || *v > bounds.upper()[d] + slack {
                return Err(Error::OutOfBounds { index: i, coord: d });
            }
        }
    }
    let output_min = dataset.y().iter().copied().fold(f64::INFINITY, f64::min);
    let output_max = dataset.y().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let transform = ScalingTransform {
        input_lb: bounds.lower().to_vec(),
        input_ub: bounds.upper().to_vec(),
        output_min,
        output_max,
    };
    let x = dataset
        .x()
        .iter()
        .map(|row| {
            let mut z = transform.scale_x(row);
            for v in &mut z {
                *v = v.clamp(0.0, 1.0);
            }
            z
        })
        .collect();
    let y = dataset.y().iter().map(|v| transform.scale_y(*v)).collect();
    Ok((Dataset::new(x, y)?, transform))
}

/// Kernel hyperparameters: variance `sigma_f^2`, lengthscale `l` (scaled
/// units), and the fixed noise variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub variance: f64,
    pub lengthscale: f64,
    pub noise: f64,
}

impl KernelParams {
    pub fn new(variance: f64, lengthscale: f64) -> Self {
        Self { variance, lengthscale, noise: DEFAULT_NOISE }
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        k32(distance(a, b) / self.lengthscale, self.variance)
    }

    fn validate(&self) -> Result<()> {
        if !(self.variance > 0.0 && self.lengthscale > 0.0 && self.noise >= 0.0) {
            return Err(Error::InvalidInput(format!("invalid kernel parameters {self:?}")));
        }
        Ok(())
    }
}

fn gram(points: &[Vec<f64>], params: &KernelParams) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = params.variance + params.noise;
        for j in 0..i {
            let v = params.kernel(&points[i], &points[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Fitted GP: immutable, safe to query from many threads.
#[derive(Debug, Clone)]
pub struct GpModel {
    params: KernelParams,
    dataset: Dataset,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpModel {
    pub fn new(dataset: Dataset, params: KernelParams) -> Result<Self> {
        params.validate()?;
        let k = gram(dataset.x(), &params);
        let (chol, jitter) = cholesky_with_jitter(&k)?;
        let alpha = chol.solve(&DVector::from_column_slice(dataset.y()));
        Ok(Self { params, dataset, chol, alpha, jitter })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    /// Lower-triangular factor of `K_XX + (noise + jitter) I`.
    pub fn chol_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `(K_XX + noise I)^-1 y`.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Extra diagonal jitter the factorization needed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn cross_kernel(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.dataset.len(),
            self.dataset.x().iter().map(|xi| self.params.kernel(x, xi)),
        )
    }

    /// Posterior mean and variance at `x`; the variance is clamped at zero.
    pub fn posterior(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.dataset.dim() {
            return Err(Error::DimensionMismatch { expected: self.dataset.dim(), got: x.len() });
        }
        let kx = self.cross_kernel(x);
        let mean = kx.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kx)
            .expect("cholesky factor has a positive diagonal");
        // l_dirty's strict upper triangle is garbage, but solve_lower_triangular only reads the lower part.
        let var = (self.params.variance - v.norm_squared()).max(0.0);
        Ok((mean, var))
    }

    pub fn posterior_batch(&self, xs: &[Vec<f64>], exec: Execution) -> Result<Vec<(f64, f64)>> {
        exec.map(xs, |x| self.posterior(x)).into_iter().collect()
    }
}

/// Pairwise scaled-free distances, computed once per fit.
struct DistanceTable {
    d: DMatrix<f64>,
}

impl DistanceTable {
    fn new(points: &[Vec<f64>]) -> Self {
        let n = points.len();
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                let v = squared_distance(&points[i], &points[j]).sqrt();
                d[(i, j)] = v;
                d[(j, i)] = v;
            }
        }
        Self { d }
    }
}

struct LmlEval {
    value: f64,
    /// Gradient with respect to (log variance, log lengthscale).
    grad: [f64; 2],
}

fn lml_from_table(
    table: &DistanceTable,
    y: &DVector<f64>,
    params: &KernelParams,
    with_grad: bool,
) -> Result<LmlEval> {
    let n = y.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = params.variance + params.noise;
        for j in 0..i {
            let v = k32(table.d[(i, j)] / params.lengthscale, params.variance);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let (chol, _) = cholesky_with_jitter(&k)?;
    let alpha = chol.solve(y);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let value = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    let mut grad = [0.0; 2];
    if with_grad {
        let kinv = chol.inverse();
        for i in 0..n {
            for j in 0..n {
                let w = alpha[i] * alpha[j] - kinv[(i, j)];
                let r = table.d[(i, j)] / params.lengthscale;
                // d K / d log variance is the noise-free kernel matrix.
                grad[0] += w * k32(r, params.variance);
                if i != j {
                    grad[1] += w * k32_dlog_lengthscale(r, params.variance);
                }
            }
        }
        grad[0] *= 0.5;
        grad[1] *= 0.5;
    }
    Ok(LmlEval { value, grad })
}

/// Log marginal likelihood of the (standardized) dataset under `params`.
pub fn log_marginal_likelihood(dataset: &Dataset, params: &KernelParams) -> Result<f64> {
    params.validate()?;
    let table = DistanceTable::new(dataset.x());
    let y = DVector::from_column_slice(dataset.y());
    Ok(lml_from_table(&table, &y, params, false)?.value)
}

/// Log marginal likelihood and its gradient with respect to
/// `(log variance, log lengthscale)`.
pub fn log_marginal_likelihood_with_gradient(
    dataset: &Dataset,
    params: &KernelParams,
) -> Result<(f64, [f64; 2])> {
    params.validate()?;
    let table = DistanceTable::new(dataset.x());
    let y = DVector::from_column_slice(dataset.y());
    let e = lml_from_table(&table, &y, params, true)?;
    Ok((e.value, e.grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub restarts: usize,
    pub noise: f64,
    pub max_iterations: usize,
    pub execution: Execution,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: DEFAULT_RESTARTS,
            noise: DEFAULT_NOISE,
            max_iterations: 100,
            execution: Execution::Sequential,
        }
    }
}

/// Multi-start maximization of the log marginal likelihood over the fitting
/// box, searched in log-parameter space.
pub fn fit_hyperparameters(dataset: &Dataset, restarts: usize, seed: u64) -> Result<KernelParams> {
    fit_hyperparameters_with(dataset, seed, &FitOptions { restarts, ..FitOptions::default() })
}

pub fn fit_hyperparameters_with(dataset: &Dataset, seed: u64, opts: &FitOptions) -> Result<KernelParams> {
    let restarts = opts.restarts.max(1);
    let table = DistanceTable::new(dataset.x());
    let y = DVector::from_column_slice(dataset.y());
    let lo = [VARIANCE_BOUNDS.0.ln(), LENGTHSCALE_BOUNDS.0.ln()];
    let hi = [VARIANCE_BOUNDS.1.ln(), LENGTHSCALE_BOUNDS.1.ln()];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<[f64; 2]> = (0..restarts)
        .map(|_| [rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])])
        .collect();

    let results = opts.execution.map(&starts, |start| {
        local_ascent(*start, lo, hi, opts.max_iterations, |theta, g| {
            let params = KernelParams {
                variance: theta[0].exp(),
                lengthscale: theta[1].exp(),
                noise: opts.noise,
            };
            lml_from_table(&table, &y, &params, g).ok().map(|e| (e.value, e.grad))
        })
    });

    let mut best: Option<([f64; 2], f64)> = None;
    for (theta, value) in results.into_iter().flatten() {
        if best.is_none_or(|(_, b)| value > b) {
            best = Some((theta, value));
        }
    }
    let (theta, _) = best.ok_or(Error::NotPositiveDefinite {
        tried: crate::linalg::JITTER_LADDER.to_vec(),
    })?;
    Ok(KernelParams { variance: theta[0].exp(), lengthscale: theta[1].exp(), noise: opts.noise })
}

/// Projected BFGS ascent on a two-parameter box. `eval(theta, want_grad)`
/// returns `(value, gradient)` or `None` where the objective is undefined.
fn local_ascent(
    start: [f64; 2],
    lo: [f64; 2],
    hi: [f64; 2],
    max_iterations: usize,
    eval: impl Fn(&[f64; 2], bool) -> Option<(f64, [f64; 2])>,
) -> Option<([f64; 2], f64)> {
    let project = |t: [f64; 2]| [t[0].clamp(lo[0], hi[0]), t[1].clamp(lo[1], hi[1])];
    let mut theta = project(start);
    let (mut f, mut g) = eval(&theta, true)?;
    // inverse Hessian of -f
    let mut h = [[1.0, 0.0], [0.0, 1.0]];
    for _ in 0..max_iterations {
        // projected gradient of -f
        let mut pg = [-g[0], -g[1]];
        for k in 0..2 {
            let at_lo = theta[k] <= lo[k] + 1e-12 && pg[k] > 0.0;
            let at_hi = theta[k] >= hi[k] - 1e-12 && pg[k] < 0.0;
            if at_lo || at_hi {
                pg[k] = 0.0;
            }
        }
        if pg[0].abs().max(pg[1].abs()) < 1e-7 {
            break;
        }
        let mut dir = [
            -(h[0][0] * pg[0] + h[0][1] * pg[1]),
            -(h[1][0] * pg[0] + h[1][1] * pg[1]),
        ];
        if dir[0] * pg[0] + dir[1] * pg[1] >= 0.0 {
            dir = [-pg[0], -pg[1]];
            h = [[1.0, 0.0], [0.0, 1.0]];
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = project([theta[0] + step * dir[0], theta[1] + step * dir[1]]);
            let moved = [cand[0] - theta[0], cand[1] - theta[1]];
            if moved[0].abs().max(moved[1].abs()) < 1e-14 {
                break;
            }
            if let Some((fc, gc)) = eval(&cand, true) {
                let ascent = g[0] * moved[0] + g[1] * moved[1];
                if fc > f + 1e-4 * ascent.max(0.0) {
                    accepted = Some((cand, fc, gc, moved));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, fc, gc, s)) = accepted else { break };
        let yv = [-(gc[0] - g[0]), -(gc[1] - g[1])];
        let sy = s[0] * yv[0] + s[1] * yv[1];
        if sy > 1e-12 {
            let hy = [h[0][0] * yv[0] + h[0][1] * yv[1], h[1][0] * yv[0] + h[1][1] * yv[1]];
            let yhy = yv[0] * hy[0] + yv[1] * hy[1];
            let rho = 1.0 / sy;
            for a in 0..2 {
                for b in 0..2 {
                    h[a][b] += (1.0 + rho * yhy) * rho * s[a] * s[b] - rho * (hy[a] * s[b] + s[a] * hy[b]);
                }
            }
        }
        let improvement = fc - f;
        theta = cand;
        f = fc;
        g = gc;
        if improvement.abs() < 1e-11 * (1.0 + f.abs()) {
            break;
        }
    }
    Some((theta, f))
}

/// GP with an additive kernel over disjoint groups of input coordinates,
/// each group carrying its own variance and lengthscale.
#[derive(Debug, Clone)]
pub struct AdditiveGp {
    groups: Vec<Vec<usize>>,
    params: Vec<KernelParams>,
    dataset: Dataset,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    noise: f64,
}

/// Checks that `groups` partition `0..dim` into nonempty disjoint sets.
pub fn validate_groups(groups: &[Vec<usize>], dim: usize) -> Result<()> {
    let mut seen = vec![false; dim];
    for g in groups {
        if g.is_empty() {
            return Err(Error::Config("empty dimension group".into()));
        }
        for &d in g {
            if d >= dim {
                return Err(Error::Config(format!("group references missing dimension {d}")));
            }
            if seen[d] {
                return Err(Error::Config(format!("dimension {d} appears in two groups")));
            }
            seen[d] = true;
        }
    }
    if let Some(d) = seen.iter().position(|s| !s) {
        return Err(Error::Config(format!("dimension {d} is not covered by any group")));
    }
    Ok(())
}

impl AdditiveGp {
    pub fn new(dataset: Dataset, groups: Vec<Vec<usize>>, params: Vec<KernelParams>) -> Result<Self> {
        validate_groups(&groups, dataset.dim())?;
        if params.len() != groups.len() {
            return Err(Error::DimensionMismatch { expected: groups.len(), got: params.len() });
        }
        for p in &params {
            p.validate()?;
        }
        let noise = params[0].noise;
        let n = dataset.len();
        let mut k = DMatrix::zeros(n, n);
        for (g, p) in groups.iter().zip(&params) {
            let pts = dataset.select_dims(g);
            for i in 0..n {
                k[(i, i)] += p.variance;
                for j in 0..i {
                    let v = p.kernel(&pts[i], &pts[j]);
                    k[(i, j)] += v;
                    k[(j, i)] += v;
                }
            }
        }
        for i in 0..n {
            k[(i, i)] += noise;
        }
        let (chol, _) = cholesky_with_jitter(&k)?;
        let alpha = chol.solve(&DVector::from_column_slice(dataset.y()));
        Ok(Self { groups, params, dataset, chol, alpha, noise })
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn params(&self) -> &[KernelParams] {
        &self.params
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    fn group_cross(&self, g: usize, xg: &[f64]) -> DVector<f64> {
        let dims = &self.groups[g];
        let p = &self.params[g];
        DVector::from_iterator(
            self.dataset.len(),
            self.dataset.x().iter().map(|row| {
                let d2: f64 = dims.iter().zip(xg).map(|(&d, v)| (row[d] - v).powi(2)).sum();
                k32(d2.sqrt() / p.lengthscale, p.variance)
            }),
        )
    }

    /// Posterior of the group-`g` component at group coordinates `xg`.
    pub fn component_posterior(&self, g: usize, xg: &[f64]) -> Result<(f64, f64)> {
        if xg.len() != self.groups[g].len() {
            return Err(Error::DimensionMismatch { expected: self.groups[g].len(), got: xg.len() });
        }
        let kx = self.group_cross(g, xg);
        let mean = kx.dot(&self.alpha);
        let v = self.chol.l_dirty().solve_lower_triangular(&kx).expect("positive diagonal");
        Ok((mean, (self.params[g].variance - v.norm_squared()).max(0.0)))
    }

    /// Posterior of the full additive function at `x`.
    pub fn posterior(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.dataset.dim() {
            return Err(Error::DimensionMismatch { expected: self.dataset.dim(), got: x.len() });
        }
        let mut kx = DVector::zeros(self.dataset.len());
        let mut prior = 0.0;
        for (g, dims) in self.groups.iter().enumerate() {
            let xg: Vec<f64> = dims.iter().map(|&d| x[d]).collect();
            kx += self.group_cross(g, &xg);
            prior += self.params[g].variance;
        }
        let mean = kx.dot(&self.alpha);
        let v = self.chol.l_dirty().solve_lower_triangular(&kx).expect("positive diagonal");
        Ok((mean, (prior - v.norm_squared()).max(0.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn kernel_values() {
        assert_eq!(matern32(0.0, 1.0).unwrap(), 1.0);
        assert!(matern32(50.0, 1.0).unwrap() < 1e-30);
        assert!(matches!(matern32(-0.1, 1.0), Err(Error::NegativeDistance(_))));
        assert!(close(kernel_second_derivative(0.0, 1.0).unwrap(), -3.0, 1e-15));
        assert!(close(kernel_second_derivative(1.0 / SQRT3, 1.0).unwrap(), 0.0, 1e-15));
        let peak = kernel_second_derivative(2.0 / SQRT3, 1.0).unwrap();
        assert!(close(peak, 3.0 * (-2.0f64).exp(), 1e-14));
        assert!(close(peak, 0.40601, 1e-5));
    }

    #[test]
    fn second_derivative_matches_finite_differences() {
        let h = 1e-4;
        for i in 0..40 {
            let r = 0.05 + i as f64 * 0.1;
            let fd = (k32(r + h, 1.7) - 2.0 * k32(r, 1.7) + k32(r - h, 1.7)) / (h * h);
            let an = kernel_second_derivative(r, 1.7).unwrap();
            assert!(close(fd, an, 1e-6), "r={r} fd={fd} an={an}");
        }
        // maximum of k'' sits at 2/sqrt(3)
        let at = kernel_second_derivative(2.0 / SQRT3, 1.0).unwrap();
        for i in 0..200 {
            let r = i as f64 * 0.03;
            assert!(kernel_second_derivative(r, 1.0).unwrap() <= at + 1e-15);
        }
    }

    #[test]
    fn duplicate_rows_rejected() {
        let err = Dataset::new(vec![vec![0.1, 0.2], vec![0.1, 0.2]], vec![1.0, 2.0]);
        assert!(matches!(err, Err(Error::DuplicatePoint(0, 1))));
        let err = Dataset::new(vec![vec![0.1], vec![0.1, 0.2]], vec![1.0, 2.0]);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn standardize_endpoints_and_round_trip() {
        let bounds = Bounds::new(vec![-2.0, 10.0], vec![2.0, 20.0]).unwrap();
        let ds = Dataset::new(vec![vec![-2.0, 10.0], vec![2.0, 20.0]], vec![3.0, 7.0]).unwrap();
        let (s, t) = standardize(&ds, &bounds).unwrap();
        assert_eq!(s.x()[0], vec![0.0, 0.0]);
        assert_eq!(s.x()[1], vec![1.0, 1.0]);
        assert_eq!(s.y(), &[0.0, 1.0]);
        let x = vec![0.3, 17.25];
        let back = t.unscale_x(&t.scale_x(&x));
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        assert!((t.unscale_y(t.scale_y(5.5)) - 5.5).abs() < 1e-12);

        let constant = Dataset::new(vec![vec![0.0, 11.0], vec![1.0, 12.0]], vec![4.0, 4.0]).unwrap();
        let (s, _) = standardize(&constant, &bounds).unwrap();
        assert_eq!(s.y(), &[0.5, 0.5]);

        let outside = Dataset::new(vec![vec![3.0, 11.0]], vec![1.0]).unwrap();
        assert!(matches!(standardize(&outside, &bounds), Err(Error::OutOfBounds { index: 0, coord: 0 })));
    }

    #[test]
    fn single_point_posterior() {
        let ds = Dataset::new(vec![vec![0.0]], vec![1.0]).unwrap();
        let gp = GpModel::new(ds, KernelParams::new(1.0, 1.0).with_noise(0.0)).unwrap();
        for r in [0.0, 0.3, 1.0, 2.5] {
            let (m, v) = gp.posterior(&[r]).unwrap();
            let k = k32(r, 1.0);
            assert!(close(m, k, 1e-12));
            assert!(close(v, 1.0 - k * k, 1e-12));
        }
        let (m, v) = gp.posterior(&[1e4]).unwrap();
        assert!(m.abs() < 1e-12 && close(v, 1.0, 1e-12));
        assert!(gp.posterior(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn interpolates_noiseless_training_points() {
        let ds = Dataset::new(
            vec![vec![0.1, 0.2], vec![0.7, 0.4], vec![0.3, 0.9]],
            vec![0.5, -1.0, 2.0],
        )
        .unwrap();
        let gp = GpModel::new(ds.clone(), KernelParams::new(1.3, 0.4).with_noise(0.0)).unwrap();
        for (x, y) in ds.x().iter().zip(ds.y()) {
            let (m, v) = gp.posterior(x).unwrap();
            assert!(close(m, *y, 1e-6));
            assert!(v.abs() <= 1e-6);
        }
        let l = gp.chol_factor();
        let rebuilt = &l * l.transpose();
        let k = gram(ds.x(), gp.params());
        assert!((rebuilt - k).abs().max() < 1e-8);
    }

    #[test]
    fn lml_single_point_and_zero_targets() {
        let ds = Dataset::new(vec![vec![0.0]], vec![0.0]).unwrap();
        let p = KernelParams::new(1.0, 1.0).with_noise(0.0);
        let v = log_marginal_likelihood(&ds, &p).unwrap();
        assert!(close(v, -0.5 * (2.0 * std::f64::consts::PI).ln(), 1e-12));

        let ds = Dataset::new(vec![vec![0.0], vec![0.4], vec![0.9]], vec![0.0; 3]).unwrap();
        let p = KernelParams::new(1.5, 0.3);
        let k = gram(ds.x(), &p);
        let log_det = k.clone().cholesky().unwrap().l().diagonal().iter().map(|v| 2.0 * v.ln()).sum::<f64>();
        let expected = -0.5 * log_det - 1.5 * (2.0 * std::f64::consts::PI).ln();
        assert!(close(log_marginal_likelihood(&ds, &p).unwrap(), expected, 1e-10));
    }

    #[test]
    fn lml_gradient_matches_central_differences() {
        let ds = Dataset::new(
            vec![vec![0.05], vec![0.3], vec![0.42], vec![0.77], vec![0.9]],
            vec![0.1, 0.8, 0.5, 0.0, 1.0],
        )
        .unwrap();
        for (var, len) in [(0.7, 0.2), (2.0, 0.05), (0.3, 1.5)] {
            let p = KernelParams::new(var, len);
            let (_, g) = log_marginal_likelihood_with_gradient(&ds, &p).unwrap();
            let h = 1e-5;
            let f = |lv: f64, ll: f64| {
                log_marginal_likelihood(&ds, &KernelParams::new(lv.exp(), ll.exp())).unwrap()
            };
            let fd0 = (f(var.ln() + h, len.ln()) - f(var.ln() - h, len.ln())) / (2.0 * h);
            let fd1 = (f(var.ln(), len.ln() + h) - f(var.ln(), len.ln() - h)) / (2.0 * h);
            assert!((g[0] - fd0).abs() <= 1e-4 * fd0.abs().max(1e-3), "{g:?} vs {fd0}");
            assert!((g[1] - fd1).abs() <= 1e-4 * fd1.abs().max(1e-3), "{g:?} vs {fd1}");
        }
    }

    #[test]
    fn fit_is_deterministic_and_in_bounds() {
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 / 11.0]).collect();
        let y: Vec<f64> = x.iter().map(|v| (6.0 * v[0]).sin() * 0.5 + 0.5).collect();
        let ds = Dataset::new(x, y).unwrap();
        let a = fit_hyperparameters(&ds, 10, 7).unwrap();
        let b = fit_hyperparameters(&ds, 10, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.variance >= VARIANCE_BOUNDS.0 && a.variance <= VARIANCE_BOUNDS.1);
        assert!(a.lengthscale >= LENGTHSCALE_BOUNDS.0 && a.lengthscale <= LENGTHSCALE_BOUNDS.1);
        assert_eq!(a.noise, DEFAULT_NOISE);
        let par = fit_hyperparameters_with(
            &ds,
            7,
            &FitOptions { execution: Execution::Parallel, ..FitOptions::default() },
        )
        .unwrap();
        assert_eq!(a, par);
    }

    #[test]
    fn additive_single_group_matches_plain_gp() {
        let ds = Dataset::new(
            vec![vec![0.1, 0.2], vec![0.7, 0.4], vec![0.3, 0.9], vec![0.5, 0.5]],
            vec![0.5, 0.0, 1.0, 0.25],
        )
        .unwrap();
        let p = KernelParams::new(0.8, 0.35);
        let gp = GpModel::new(ds.clone(), p).unwrap();
        let add = AdditiveGp::new(ds, vec![vec![0, 1]], vec![p]).unwrap();
        for x in [[0.2, 0.2], [0.9, 0.1], [0.45, 0.6]] {
            let (m1, v1) = gp.posterior(&x).unwrap();
            let (m2, v2) = add.posterior(&x).unwrap();
            let (m3, v3) = add.component_posterior(0, &x).unwrap();
            assert!(close(m1, m2, 1e-12) && close(v1, v2, 1e-12));
            assert!(close(m1, m3, 1e-12) && close(v1, v3, 1e-12));
        }
        assert!(validate_groups(&[vec![0], vec![0, 1]], 2).is_err());
        assert!(validate_groups(&[vec![0], vec![2]], 2).is_err());
        assert!(validate_groups(&[vec![1], vec![0]], 2).is_ok());
    }
}
