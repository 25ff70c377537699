//! Piecewise-linear approximation of the Matérn-3/2 kernel and the
//! approximated posterior it induces.
//!
//! Knots are placed region by region: densely where the kernel bends
//! sharply (`|k''|` above half its positive peak), sparsely on the nearly
//! straight stretch between, and evenly on the tail up to the largest
//! distance the box allows.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::gp::{k32, kernel_second_derivative, Dataset, KernelParams, SQRT3};
use crate::linalg::{cholesky_with_jitter, distance};

/// Curvature threshold relative to the kernel variance.
pub fn curvature_threshold() -> f64 {
    0.5 * 3.0 * (-2.0f64).exp()
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The three scaled distances where `|k''(r)|` crosses the curvature
/// threshold, for unit variance (the roots do not depend on the variance).
pub fn curvature_breakpoints() -> (f64, f64, f64) {
    let eps = curvature_threshold();
    let g = |r: f64| kernel_second_derivative(r, 1.0).expect("nonnegative r").abs() - eps;
    let inflection = 1.0 / SQRT3;
    let peak = 2.0 / SQRT3;
    (
        bisect(g, 0.0, inflection, 1e-12),
        bisect(g, inflection, peak, 1e-12),
        bisect(g, peak, 20.0, 1e-12),
    )
}

/// Which part of the kernel a segment approximates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// High curvature near the origin or around the curvature peak.
    Nonlinear,
    /// Low curvature between the first two breakpoints.
    Linear,
    /// Beyond the last breakpoint.
    Tail,
}

/// Segment counts per region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentPlan {
    pub near: usize,
    pub linear: usize,
    pub middle: usize,
    pub tail: usize,
}

impl SegmentPlan {
    /// `2D, D, 2D, 2D` segments, i.e. `7D` in total.
    pub fn default_for(dim: usize) -> Self {
        Self::scaled(dim, 1)
    }

    /// The default plan with every count multiplied by `factor`.
    pub fn scaled(dim: usize, factor: usize) -> Self {
        let f = factor.max(1);
        Self { near: 2 * dim * f, linear: dim * f, middle: 2 * dim * f, tail: 2 * dim * f }
    }

    pub fn total(&self) -> usize {
        self.near + self.linear + self.middle + self.tail
    }
}

/// Ordered knots `R_0 = 0 < R_1 < ... < R_M` with a region mark per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct BreakpointSet {
    knots: Vec<f64>,
    regions: Vec<Region>,
}

impl BreakpointSet {
    /// Builds knots on `[0, r_max]` following `plan`. Regions lying beyond
    /// `r_max` are dropped; a region cut short by `r_max` keeps its count.
    pub fn from_plan(plan: &SegmentPlan, r_max: f64) -> Result<Self> {
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(Error::InvalidInput(format!("maximal scaled distance must be positive, got {r_max}")));
        }
        let (r1, r2, r3) = curvature_breakpoints();
        let regions = [
            (0.0, r1, plan.near, Region::Nonlinear),
            (r1, r2, plan.linear, Region::Linear),
            (r2, r3, plan.middle, Region::Nonlinear),
            (r3, f64::INFINITY, plan.tail, Region::Tail),
        ];
        let mut knots = vec![0.0];
        let mut marks = Vec::new();
        for (start, end, count, mark) in regions {
            if start >= r_max * (1.0 - 1e-12) {
                break;
            }
            let stop = end.min(r_max);
            let n = count.max(1);
            for s in 1..=n {
                knots.push(start + (stop - start) * s as f64 / n as f64);
                marks.push(mark);
            }
            if stop >= r_max {
                break;
            }
        }
        *knots.last_mut().expect("at least two knots") = r_max;
        Ok(Self { knots, regions: marks })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    /// Number of segments `M`.
    pub fn segments(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn r_max(&self) -> f64 {
        *self.knots.last().expect("nonempty")
    }

    /// Index `j` of the segment `[R_j, R_{j+1}]` containing `r` (clamped).
    pub fn segment_of(&self, r: f64) -> usize {
        let m = self.segments();
        match self.knots.partition_point(|k| *k <= r) {
            0 => 0,
            p => (p - 1).min(m - 1),
        }
    }
}

/// Default knots for dimension `dim` over `bounds` at lengthscale `l`; the
/// last knot is the box diagonal in scaled units.
pub fn build_breakpoints(dim: usize, bounds: &Bounds, lengthscale: f64) -> Result<BreakpointSet> {
    build_breakpoints_with(&SegmentPlan::default_for(dim), bounds, lengthscale)
}

pub fn build_breakpoints_with(plan: &SegmentPlan, bounds: &Bounds, lengthscale: f64) -> Result<BreakpointSet> {
    if plan.total() == 0 {
        return Err(Error::InvalidInput("segment plan is empty".into()));
    }
    if !(lengthscale > 0.0 && lengthscale.is_finite()) {
        return Err(Error::InvalidInput(format!("lengthscale must be positive, got {lengthscale}")));
    }
    BreakpointSet::from_plan(plan, bounds.diagonal() / lengthscale)
}

/// Secant interpolation of the kernel through its values at the knots.
#[derive(Debug, Clone, PartialEq)]
pub struct PwlKernel {
    breakpoints: BreakpointSet,
    values: Vec<f64>,
    params: KernelParams,
}

impl PwlKernel {
    pub fn new(breakpoints: BreakpointSet, params: KernelParams) -> Self {
        let values = breakpoints.knots().iter().map(|r| k32(*r, params.variance)).collect();
        Self { breakpoints, values, params }
    }

    /// Default-plan linearization for `params` over `bounds`.
    pub fn build(params: KernelParams, bounds: &Bounds) -> Result<Self> {
        Ok(Self::new(build_breakpoints(bounds.dim(), bounds, params.lengthscale)?, params))
    }

    pub fn breakpoints(&self) -> &BreakpointSet {
        &self.breakpoints
    }

    pub fn knots(&self) -> &[f64] {
        self.breakpoints.knots()
    }

    /// Kernel values `k(R_j)` at the knots.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn segments(&self) -> usize {
        self.breakpoints.segments()
    }

    pub fn r_max(&self) -> f64 {
        self.breakpoints.r_max()
    }

    /// `k~(r)`; distances beyond the last knot are clamped to it.
    pub fn eval(&self, r: f64) -> f64 {
        self.eval_flagged(r).0
    }

    /// `k~(r)` together with a flag telling whether `r` had to be clamped.
    pub fn eval_flagged(&self, r: f64) -> (f64, bool) {
        let knots = self.knots();
        let last = knots.len() - 1;
        if r >= knots[last] {
            return (self.values[last], r > knots[last]);
        }
        let r = r.max(0.0);
        let j = self.breakpoints.segment_of(r);
        let t = (r - knots[j]) / (knots[j + 1] - knots[j]);
        (self.values[j] + t * (self.values[j + 1] - self.values[j]), false)
    }

    /// Slope of segment `j`.
    pub fn slope(&self, j: usize) -> f64 {
        let k = self.knots();
        (self.values[j + 1] - self.values[j]) / (k[j + 1] - k[j])
    }

    /// Approximated kernel between two points in scaled input units.
    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        self.eval(distance(a, b) / self.params.lengthscale)
    }

    /// Dense-grid estimate of the maximal absolute error `|k - k~|`.
    pub fn max_error(&self, samples_per_segment: usize) -> ApproxErrorReport {
        let n = samples_per_segment.max(10);
        let knots = self.knots();
        let per_segment: Vec<f64> = (0..self.segments())
            .map(|j| {
                let (a, b) = (knots[j], knots[j + 1]);
                (0..=n)
                    .map(|s| {
                        let r = a + (b - a) * s as f64 / n as f64;
                        (k32(r, self.params.variance) - self.eval(r)).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        let eps_m = per_segment.iter().copied().fold(0.0, f64::max);
        ApproxErrorReport { eps_m, per_segment }
    }

    /// Writes the knot table as two delimited columns `r,k`.
    pub fn write_knots<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "k"])?;
        for (r, k) in self.knots().iter().zip(&self.values) {
            w.write_record([format!("{r:?}"), format!("{k:?}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxErrorReport {
    pub eps_m: f64,
    pub per_segment: Vec<f64>,
}

/// Matrix of approximated kernel values between `points` (no noise term).
pub fn approx_gram(pwl: &PwlKernel, points: &[Vec<f64>]) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = pwl.params().variance;
        for j in 0..i {
            let v = pwl.kernel(&points[i], &points[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Factor of an approximated Gram matrix plus noise, repaired with the
/// jitter ladder when needed, and the solves the posterior needs.
#[derive(Debug, Clone)]
pub struct ApproxFactor {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
    weights: DVector<f64>,
    inverse: DMatrix<f64>,
}

impl ApproxFactor {
    pub fn new(gram: &DMatrix<f64>, noise: f64, y: &[f64]) -> Result<Self> {
        let mut m = gram.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += noise;
        }
        let (chol, jitter) = cholesky_with_jitter(&m)?;
        let weights = chol.solve(&DVector::from_column_slice(y));
        let mut inverse = chol.inverse();
        // symmetrize against round-off so the quadratic form is exact
        for i in 0..inverse.nrows() {
            for j in 0..i {
                let v = 0.5 * (inverse[(i, j)] + inverse[(j, i)]);
                inverse[(i, j)] = v;
                inverse[(j, i)] = v;
            }
        }
        Ok(Self { chol, jitter, weights, inverse })
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `K~^-1 y`.
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// `K~^-1`.
    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn chol(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }
}

/// Approximated posterior of one kernel component: the component's PWL
/// kernel, its training centers, and the shared `K~^-1 y` and `K~^-1`.
#[derive(Debug, Clone)]
pub struct ApproxPosterior {
    pwl: PwlKernel,
    centers: Vec<Vec<f64>>,
    factor: ApproxFactor,
}

impl ApproxPosterior {
    pub fn new(pwl: PwlKernel, dataset: &Dataset) -> Result<Self> {
        let gram = approx_gram(&pwl, dataset.x());
        let factor = ApproxFactor::new(&gram, pwl.params().noise, dataset.y())?;
        Ok(Self { pwl, centers: dataset.x().to_vec(), factor })
    }

    /// One component per group of an additive kernel. The Gram matrix is the
    /// sum of the groups' approximated Gram matrices.
    pub fn additive(pwls: Vec<PwlKernel>, groups: &[Vec<usize>], dataset: &Dataset) -> Result<Vec<Self>> {
        if pwls.len() != groups.len() || pwls.is_empty() {
            return Err(Error::DimensionMismatch { expected: groups.len(), got: pwls.len() });
        }
        let n = dataset.len();
        let mut gram = DMatrix::zeros(n, n);
        let slices: Vec<Vec<Vec<f64>>> = groups.iter().map(|g| dataset.select_dims(g)).collect();
        for (pwl, pts) in pwls.iter().zip(&slices) {
            gram += approx_gram(pwl, pts);
        }
        let factor = ApproxFactor::new(&gram, pwls[0].params().noise, dataset.y())?;
        Ok(pwls
            .into_iter()
            .zip(slices)
            .map(|(pwl, centers)| Self { pwl, centers, factor: factor.clone() })
            .collect())
    }

    pub fn pwl(&self) -> &PwlKernel {
        &self.pwl
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn factor(&self) -> &ApproxFactor {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn variance(&self) -> f64 {
        self.pwl.params().variance
    }

    pub fn lengthscale(&self) -> f64 {
        self.pwl.params().lengthscale
    }

    /// Approximated kernel values between `x` and every center.
    pub fn kernel_vector(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.centers.len(), self.centers.iter().map(|c| self.pwl.kernel(x, c)))
    }

    /// `sigma_f^2 - k~^T K~^-1 k~` before clamping; negative values mean the
    /// approximation lost positive-definiteness at `x`.
    pub fn raw_variance_from(&self, kx: &DVector<f64>) -> f64 {
        self.variance() - kx.dot(&(self.factor.inverse() * kx))
    }

    /// Approximated posterior mean and variance (clamped at zero).
    pub fn at(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let kx = self.kernel_vector(x);
        Ok((kx.dot(self.factor.weights()), self.raw_variance_from(&kx).max(0.0)))
    }

    /// Approximated lower confidence bound.
    pub fn lcb(&self, x: &[f64], beta: f64) -> Result<f64> {
        let (m, v) = self.at(x)?;
        Ok(m - beta.max(0.0).sqrt() * v.sqrt())
    }
}

/// Approximated posterior mean and variance at `x`.
pub fn approx_posterior(pwl: &PwlKernel, dataset: &Dataset, x: &[f64]) -> Result<(f64, f64)> {
    ApproxPosterior::new(pwl.clone(), dataset)?.at(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn breakpoints_match_published_values() {
        let (r1, r2, r3) = curvature_breakpoints();
        assert!((r1 - 0.4866).abs() < 1e-3, "{r1}");
        assert!((r2 - 0.7113).abs() < 1e-3, "{r2}");
        assert!((r3 - 2.1237).abs() < 1e-3, "{r3}");
        let eps = curvature_threshold();
        let kpp = |r: f64| kernel_second_derivative(r, 1.0).unwrap().abs();
        for i in 1..200 {
            let t = i as f64 / 200.0;
            assert!(kpp(r1 * t) > eps);
            assert!(kpp(r1 + (r2 - r1) * t) < eps);
            assert!(kpp(r2 + (r3 - r2) * t) > eps);
        }
    }

    #[test]
    fn default_counts() {
        for dim in 1..=4 {
            let b = Bounds::unit(dim);
            let set = build_breakpoints(dim, &b, 0.1).unwrap();
            assert_eq!(set.segments(), 7 * dim);
            assert_eq!(set.knots()[0], 0.0);
            assert!((set.r_max() - (dim as f64).sqrt() / 0.1).abs() < 1e-12);
            assert!(set.knots().windows(2).all(|w| w[0] < w[1]));
            assert_eq!(set.regions().len(), set.segments());
        }
    }

    #[test]
    fn truncated_when_box_is_small() {
        // r_max = 1 / 2 sits inside the linear region
        let set = build_breakpoints(1, &Bounds::unit(1), 2.0).unwrap();
        assert_eq!(set.segments(), 3);
        assert_eq!(set.regions(), &[Region::Nonlinear, Region::Nonlinear, Region::Linear]);
        assert_eq!(set.r_max(), 0.5);
        // r_max below the first breakpoint keeps a single region
        let set = build_breakpoints(1, &Bounds::unit(1), 10.0).unwrap();
        assert_eq!(set.segments(), 2);
        assert!(set.regions().iter().all(|r| *r == Region::Nonlinear));
        assert!(build_breakpoints(1, &Bounds::unit(1), 0.0).is_err());
    }

    #[test]
    fn exact_at_knots_and_continuous() {
        let params = KernelParams::new(1.7, 0.2);
        let pwl = PwlKernel::build(params, &Bounds::unit(2)).unwrap();
        for (r, v) in pwl.knots().iter().zip(pwl.values()) {
            assert_eq!(pwl.eval(*r), *v);
            assert_eq!(*v, k32(*r, 1.7));
        }
        assert_eq!(pwl.eval(0.0), 1.7);
        assert!(pwl.values().windows(2).all(|w| w[0] > w[1]));
        let (v, flagged) = pwl.eval_flagged(pwl.r_max() + 1.0);
        assert!(flagged);
        assert_eq!(v, *pwl.values().last().unwrap());
        // constant finite differences inside each segment
        for j in 0..pwl.segments() {
            let (a, b) = (pwl.knots()[j], pwl.knots()[j + 1]);
            let h = (b - a) / 10.0;
            for s in 1..9 {
                let r = a + s as f64 * h;
                let d = (pwl.eval(r + h * 0.5) - pwl.eval(r - h * 0.5)) / h;
                assert!((d - pwl.slope(j)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn secant_sides() {
        let pwl = PwlKernel::build(KernelParams::new(1.0, 0.15), &Bounds::unit(1)).unwrap();
        for j in 0..pwl.segments() {
            let (a, b) = (pwl.knots()[j], pwl.knots()[j + 1]);
            let mut signs = Vec::new();
            for s in 1..100 {
                let r = a + (b - a) * s as f64 / 100.0;
                let e = pwl.eval(r) - k32(r, 1.0);
                if e.abs() > 1e-14 {
                    let sign = e > 0.0;
                    if signs.last() != Some(&sign) {
                        signs.push(sign);
                    }
                }
            }
            assert!(signs.len() <= 2, "segment {j} changes sign more than once");
        }
    }

    #[test]
    fn error_reports() {
        let params = KernelParams::new(1.0, 0.3);
        let b = Bounds::unit(2);
        let base = PwlKernel::build(params, &b).unwrap();
        let report = base.max_error(1000);
        assert!(report.eps_m <= 0.03, "{}", report.eps_m);
        assert_eq!(report.eps_m, report.per_segment.iter().copied().fold(0.0, f64::max));
        let fine = PwlKernel::new(
            build_breakpoints_with(&SegmentPlan::scaled(2, 2), &b, 0.3).unwrap(),
            params,
        );
        assert!(fine.max_error(1000).eps_m < report.eps_m);
    }

    #[test]
    fn linear_region_error_bound() {
        let (r1, r2, _) = curvature_breakpoints();
        let pwl = PwlKernel::build(KernelParams::new(1.0, 0.1), &Bounds::unit(1)).unwrap();
        let n = 100_000;
        let worst = (0..=n)
            .map(|s| r1 + (r2 - r1) * s as f64 / n as f64)
            .map(|r| (k32(r, 1.0) - pwl.eval(r)).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 0.025, "{worst}");
    }

    #[test]
    fn one_point_posterior() {
        let params = KernelParams::new(1.3, 0.25).with_noise(0.0);
        let pwl = PwlKernel::build(params, &Bounds::unit(1)).unwrap();
        let ds = Dataset::new(vec![vec![0.2]], vec![0.8]).unwrap();
        let gram = approx_gram(&pwl, ds.x());
        assert_eq!(gram.shape(), (1, 1));
        assert_eq!(gram[(0, 0)], 1.3);
        for x in [0.2, 0.25, 0.6, 1.0] {
            let (m, v) = approx_posterior(&pwl, &ds, &[x]).unwrap();
            let kt = pwl.eval((x - 0.2f64).abs() / 0.25);
            assert!((m - kt * 0.8 / 1.3).abs() < 1e-12);
            assert!((v - (1.3 - kt * kt / 1.3).max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn gram_entries_within_eps() {
        let params = KernelParams::new(1.0, 0.3);
        let pwl = PwlKernel::build(params, &Bounds::unit(2)).unwrap();
        let eps = pwl.max_error(1000).eps_m;
        let pts: Vec<Vec<f64>> = (0..8).map(|i| vec![(i as f64 * 0.37) % 1.0, (i as f64 * 0.61) % 1.0]).collect();
        let g = approx_gram(&pwl, &pts);
        assert_eq!(g, g.transpose());
        for i in 0..8 {
            for j in 0..8 {
                assert!((g[(i, j)] - params.kernel(&pts[i], &pts[j])).abs() <= eps + 1e-12);
            }
        }
    }
}
