//! Mixed-integer encoding of the approximated LCB.
//!
//! Variable layout for `D` inputs, `N` training points and `M` segments:
//! `x` (D), `r` (N), `kx` (N), `w` (N * (M+1)), `lam` (N * M), `mu`, and
//! `sigma` when the variance term is present.

mod lp_format;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::gp::{k32, Dataset};
use crate::pwl::{ApproxPosterior, PwlKernel};

pub use lp_format::{export_lp_text, parse_lp_text, ParsedLp};

pub type VarId = usize;

/// Tolerance used when accepting candidates and pool members.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableDef {
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    /// Signed violation of `lhs (sense) rhs`.
    pub fn violation(self, lhs: f64, rhs: f64) -> f64 {
        match self {
            Sense::Le => (lhs - rhs).max(0.0),
            Sense::Ge => (rhs - lhs).max(0.0),
            Sense::Eq => (lhs - rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub name: String,
    pub coefs: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(name: impl Into<String>, coefs: Vec<(VarId, f64)>, sense: Sense, rhs: f64) -> Self {
        Self { name: name.into(), coefs, sense, rhs }
    }

    pub fn lhs(&self, values: &[f64]) -> f64 {
        self.coefs.iter().map(|&(v, c)| c * values[v]).sum()
    }

    pub fn violation(&self, values: &[f64]) -> f64 {
        self.sense.violation(self.lhs(values), self.rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadTag {
    Convex,
    NonconvexEquality,
}

/// `sum q_ab v_a v_b + sum c_v v (sense) rhs`, with keys `(a, b)`, `a <= b`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadConstraint {
    pub name: String,
    pub quad: BTreeMap<(VarId, VarId), f64>,
    pub linear: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub tag: QuadTag,
}

impl QuadConstraint {
    pub fn new(
        name: impl Into<String>,
        terms: impl IntoIterator<Item = ((VarId, VarId), f64)>,
        linear: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
        tag: QuadTag,
    ) -> Self {
        let mut quad = BTreeMap::new();
        for ((a, b), c) in terms {
            *quad.entry((a.min(b), a.max(b))).or_insert(0.0) += c;
        }
        Self { name: name.into(), quad, linear, sense, rhs, tag }
    }

    pub fn lhs(&self, values: &[f64]) -> f64 {
        let q: f64 = self.quad.iter().map(|(&(a, b), c)| c * values[a] * values[b]).sum();
        q + self.linear.iter().map(|&(v, c)| c * values[v]).sum::<f64>()
    }

    pub fn violation(&self, values: &[f64]) -> f64 {
        self.sense.violation(self.lhs(values), self.rhs)
    }

    fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.quad.keys().flat_map(|&(a, b)| [a, b]).chain(self.linear.iter().map(|p| p.0))
    }
}

/// A constraint known in closed form, over input coordinates only.
#[derive(Debug, Clone, PartialEq)]
pub enum KnownConstraint {
    Linear(LinearConstraint),
    Quadratic(QuadConstraint),
}

impl KnownConstraint {
    pub fn name(&self) -> &str {
        match self {
            KnownConstraint::Linear(c) => &c.name,
            KnownConstraint::Quadratic(c) => &c.name,
        }
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            KnownConstraint::Linear(c) => c.violation(x),
            KnownConstraint::Quadratic(c) => c.violation(x),
        }
    }

    fn vars(&self) -> Vec<VarId> {
        match self {
            KnownConstraint::Linear(c) => c.coefs.iter().map(|p| p.0).collect(),
            KnownConstraint::Quadratic(c) => c.vars().collect(),
        }
    }

    /// Re-expresses the constraint for `x = offset + scale * z` (per coordinate).
    pub fn affine_substitute(&self, offset: &[f64], scale: &[f64]) -> Self {
        match self {
            KnownConstraint::Linear(c) => {
                let mut rhs = c.rhs;
                let coefs = c
                    .coefs
                    .iter()
                    .map(|&(v, a)| {
                        rhs -= a * offset[v];
                        (v, a * scale[v])
                    })
                    .collect();
                KnownConstraint::Linear(LinearConstraint::new(c.name.clone(), coefs, c.sense, rhs))
            }
            KnownConstraint::Quadratic(c) => {
                let mut rhs = c.rhs;
                let mut lin: BTreeMap<VarId, f64> = BTreeMap::new();
                let mut quad = Vec::new();
                for (&(a, b), &q) in &c.quad {
                    // q (o_a + s_a z_a)(o_b + s_b z_b)
                    quad.push(((a, b), q * scale[a] * scale[b]));
                    *lin.entry(a).or_default() += q * offset[b] * scale[a];
                    *lin.entry(b).or_default() += q * offset[a] * scale[b];
                    rhs -= q * offset[a] * offset[b];
                }
                for &(v, a) in &c.linear {
                    *lin.entry(v).or_default() += a * scale[v];
                    rhs -= a * offset[v];
                }
                KnownConstraint::Quadratic(QuadConstraint::new(
                    c.name.clone(),
                    quad,
                    lin.into_iter().collect(),
                    c.sense,
                    rhs,
                    c.tag,
                ))
            }
        }
    }

    /// Restricts the constraint to the coordinates in `dims` (renumbered in
    /// order). Returns `None` unless every referenced coordinate is in `dims`.
    pub fn restrict(&self, dims: &[usize]) -> Option<Self> {
        let map = |v: VarId| dims.iter().position(|&d| d == v);
        match self {
            KnownConstraint::Linear(c) => {
                let coefs: Option<Vec<_>> = c.coefs.iter().map(|&(v, a)| map(v).map(|i| (i, a))).collect();
                Some(KnownConstraint::Linear(LinearConstraint::new(c.name.clone(), coefs?, c.sense, c.rhs)))
            }
            KnownConstraint::Quadratic(c) => {
                let quad: Option<Vec<_>> =
                    c.quad.iter().map(|(&(a, b), &q)| Some(((map(a)?, map(b)?), q))).collect();
                let lin: Option<Vec<_>> = c.linear.iter().map(|&(v, a)| map(v).map(|i| (i, a))).collect();
                Some(KnownConstraint::Quadratic(QuadConstraint::new(
                    c.name.clone(),
                    quad?,
                    lin?,
                    c.sense,
                    c.rhs,
                    c.tag,
                )))
            }
        }
    }
}

/// Maximal violation of a list of known constraints at `x`.
pub fn known_violation(constraints: &[KnownConstraint], x: &[f64]) -> f64 {
    constraints.iter().map(|c| c.violation(x)).fold(0.0, f64::max)
}

/// Index arithmetic for the variable layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub dim: usize,
    pub n: usize,
    pub m: usize,
    pub has_sigma: bool,
}

impl Layout {
    pub fn x(&self, d: usize) -> VarId {
        d
    }
    pub fn r(&self, i: usize) -> VarId {
        self.dim + i
    }
    pub fn kx(&self, i: usize) -> VarId {
        self.dim + self.n + i
    }
    pub fn w(&self, i: usize, j: usize) -> VarId {
        self.dim + 2 * self.n + i * (self.m + 1) + j
    }
    /// Binary of segment `j` in `1..=M`.
    pub fn lam(&self, i: usize, j: usize) -> VarId {
        self.dim + 2 * self.n + self.n * (self.m + 1) + i * self.m + (j - 1)
    }
    pub fn mu(&self) -> VarId {
        self.dim + 2 * self.n + self.n * (self.m + 1) + self.n * self.m
    }
    pub fn sigma(&self) -> Option<VarId> {
        self.has_sigma.then(|| self.mu() + 1)
    }
    pub fn num_vars(&self) -> usize {
        self.mu() + 1 + usize::from(self.has_sigma)
    }
}

/// Data the encoded problem was built from.
#[derive(Debug, Clone)]
pub struct AcquisitionData {
    pub posterior: ApproxPosterior,
    pub beta: f64,
    pub bounds: Bounds,
    pub known: Vec<KnownConstraint>,
}

impl AcquisitionData {
    pub fn pwl(&self) -> &PwlKernel {
        self.posterior.pwl()
    }

    /// `K~^-1 y`.
    pub fn weights(&self) -> &DVector<f64> {
        self.posterior.factor().weights()
    }

    /// `K~^-1`.
    pub fn inverse(&self) -> &DMatrix<f64> {
        self.posterior.factor().inverse()
    }
}

#[derive(Debug, Clone)]
pub struct MiqpModel {
    pub variables: Vec<VariableDef>,
    pub linear: Vec<LinearConstraint>,
    pub quadratic: Vec<QuadConstraint>,
    pub objective: Vec<(VarId, f64)>,
    pub layout: Layout,
    pub data: AcquisitionData,
}

/// A complete assignment produced from an input point.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    pub objective: f64,
}

fn continuous(name: String, lower: f64, upper: f64) -> VariableDef {
    VariableDef { kind: VarKind::Continuous, lower, upper, name }
}

impl MiqpModel {
    /// Encodes `min mu - sqrt(beta) sigma` (or `min mu` when `with_variance`
    /// is false) for one approximated posterior component.
    pub fn from_posterior(
        posterior: &ApproxPosterior,
        beta: f64,
        bounds: &Bounds,
        known: &[KnownConstraint],
        with_variance: bool,
    ) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidInput(format!("beta must be nonnegative, got {beta}")));
        }
        let dim = posterior.dim();
        if bounds.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: bounds.dim() });
        }
        let pwl = posterior.pwl();
        let n = posterior.len();
        let m = pwl.segments();
        let layout = Layout { dim, n, m, has_sigma: with_variance };
        let var = pwl.params().variance;
        let l = pwl.params().lengthscale;
        let knots = pwl.knots();
        let kvals = pwl.values();
        let k_min = k32(pwl.r_max(), var);
        let weights = posterior.factor().weights();
        let inverse = posterior.factor().inverse();

        let mut variables = Vec::with_capacity(layout.num_vars());
        for d in 0..dim {
            variables.push(continuous(format!("x_{d}"), bounds.lower()[d], bounds.upper()[d]));
        }
        for (i, c) in posterior.centers().iter().enumerate() {
            let reach = (bounds.max_distance_from(c) / l).min(pwl.r_max());
            variables.push(continuous(format!("r_{i}"), 0.0, reach));
        }
        for i in 0..n {
            variables.push(continuous(format!("kx_{i}"), k_min, var));
        }
        for i in 0..n {
            for j in 0..=m {
                variables.push(continuous(format!("w_{i}_{j}"), 0.0, 1.0));
            }
        }
        for i in 0..n {
            for j in 1..=m {
                variables.push(VariableDef {
                    kind: VarKind::Binary,
                    lower: 0.0,
                    upper: 1.0,
                    name: format!("lam_{i}_{j}"),
                });
            }
        }
        let (mut mu_lo, mut mu_hi) = (0.0, 0.0);
        for a in weights.iter() {
            mu_lo += (a * k_min).min(a * var);
            mu_hi += (a * k_min).max(a * var);
        }
        variables.push(continuous("mu".into(), mu_lo, mu_hi));
        if with_variance {
            variables.push(continuous("sigma".into(), 0.0, var.sqrt()));
        }

        let mut linear = Vec::new();
        let mut quadratic = Vec::new();
        let mut mean: Vec<(VarId, f64)> = vec![(layout.mu(), 1.0)];
        mean.extend((0..n).map(|i| (layout.kx(i), -weights[i])));
        linear.push(LinearConstraint::new("mean", mean, Sense::Eq, 0.0));

        if let Some(s) = layout.sigma() {
            let mut terms = vec![((s, s), 1.0)];
            for i in 0..n {
                terms.push(((layout.kx(i), layout.kx(i)), inverse[(i, i)]));
                for j in 0..i {
                    terms.push(((layout.kx(j), layout.kx(i)), 2.0 * inverse[(i, j)]));
                }
            }
            quadratic.push(QuadConstraint::new("var", terms, vec![], Sense::Le, var, QuadTag::Convex));
        }

        let inv_l2 = 1.0 / (l * l);
        for (i, c) in posterior.centers().iter().enumerate() {
            let mut terms = vec![((layout.r(i), layout.r(i)), 1.0)];
            let mut lin = Vec::new();
            let mut rhs = 0.0;
            for d in 0..dim {
                terms.push(((layout.x(d), layout.x(d)), -inv_l2));
                lin.push((layout.x(d), 2.0 * c[d] * inv_l2));
                rhs += c[d] * c[d] * inv_l2;
            }
            quadratic.push(QuadConstraint::new(
                format!("dist_{i}"),
                terms,
                lin,
                Sense::Eq,
                rhs,
                QuadTag::NonconvexEquality,
            ));
        }

        for i in 0..n {
            let mut rdef = vec![(layout.r(i), 1.0)];
            let mut kdef = vec![(layout.kx(i), 1.0)];
            for j in 0..=m {
                if knots[j] != 0.0 {
                    rdef.push((layout.w(i, j), -knots[j]));
                }
                kdef.push((layout.w(i, j), -kvals[j]));
            }
            linear.push(LinearConstraint::new(format!("rdef_{i}"), rdef, Sense::Eq, 0.0));
            linear.push(LinearConstraint::new(format!("kdef_{i}"), kdef, Sense::Eq, 0.0));
            linear.push(LinearConstraint::new(
                format!("wsum_{i}"),
                (0..=m).map(|j| (layout.w(i, j), 1.0)).collect(),
                Sense::Eq,
                1.0,
            ));
            linear.push(LinearConstraint::new(
                format!("lsum_{i}"),
                (1..=m).map(|j| (layout.lam(i, j), 1.0)).collect(),
                Sense::Eq,
                1.0,
            ));
            for j in 0..=m {
                let mut coefs = vec![(layout.w(i, j), 1.0)];
                if j >= 1 {
                    coefs.push((layout.lam(i, j), -1.0));
                }
                if j < m {
                    coefs.push((layout.lam(i, j + 1), -1.0));
                }
                linear.push(LinearConstraint::new(format!("adj_{i}_{j}"), coefs, Sense::Le, 0.0));
            }
        }

        let mut objective = vec![(layout.mu(), 1.0)];
        if let Some(s) = layout.sigma() {
            if beta > 0.0 {
                objective.push((s, -beta.sqrt()));
            }
        }

        let mut model = Self {
            variables,
            linear,
            quadratic,
            objective,
            layout,
            data: AcquisitionData {
                posterior: posterior.clone(),
                beta,
                bounds: bounds.clone(),
                known: Vec::new(),
            },
        };
        model.add_known_constraints(known)?;
        Ok(model)
    }

    /// Appends constraints over the input coordinates. Quadratic ones must be
    /// convex in the direction of their sense.
    pub fn add_known_constraints(&mut self, constraints: &[KnownConstraint]) -> Result<()> {
        for c in constraints {
            if let Some(v) = c.vars().into_iter().find(|&v| v >= self.layout.dim) {
                return Err(Error::NonInputVariable { name: c.name().to_string(), var: v });
            }
            if let KnownConstraint::Quadratic(q) = c {
                check_convex(q, self.layout.dim)?;
            }
        }
        for c in constraints {
            match c {
                KnownConstraint::Linear(l) => {
                    let mut l = l.clone();
                    l.name = format!("known_{}", l.name);
                    self.linear.push(l);
                }
                KnownConstraint::Quadratic(q) => {
                    let mut q = q.clone();
                    q.name = format!("known_{}", q.name);
                    q.tag = QuadTag::Convex;
                    self.quadratic.push(q);
                }
            }
            self.data.known.push(c.clone());
        }
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * values[v]).sum()
    }

    /// Largest violation over bounds, integrality and all constraints.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, def) in self.variables.iter().enumerate() {
            let x = values[v];
            worst = worst.max(def.lower - x).max(x - def.upper);
            if def.kind == VarKind::Binary {
                worst = worst.max(x.min(1.0 - x).max(0.0));
            }
        }
        for c in &self.linear {
            worst = worst.max(c.violation(values));
        }
        for c in &self.quadratic {
            worst = worst.max(c.violation(values));
        }
        worst
    }

    /// Builds the complete assignment induced by the input point `x`: the
    /// distance to every training point, its bracketing segment, the matching
    /// weights, and the mean and variance with the variance constraint tight.
    pub fn evaluate_candidate(&self, x: &[f64]) -> Result<Candidate> {
        let lay = self.layout;
        if x.len() != lay.dim {
            return Err(Error::DimensionMismatch { expected: lay.dim, got: x.len() });
        }
        let box_violation = (0..lay.dim)
            .map(|d| (self.data.bounds.lower()[d] - x[d]).max(x[d] - self.data.bounds.upper()[d]))
            .fold(0.0, f64::max);
        let known = known_violation(&self.data.known, x);
        let worst = box_violation.max(known);
        if worst > 1e-9 {
            return Err(Error::InfeasibleCandidate(worst));
        }
        let pwl = self.data.pwl();
        let knots = pwl.knots();
        let l = pwl.params().lengthscale;
        let mut values = vec![0.0; self.num_vars()];
        values[..lay.dim].copy_from_slice(x);
        let mut kx = DVector::zeros(lay.n);
        for (i, c) in self.data.posterior.centers().iter().enumerate() {
            let r = (crate::linalg::distance(x, c) / l).min(self.variables[lay.r(i)].upper);
            let j = pwl.breakpoints().segment_of(r);
            let t = ((r - knots[j]) / (knots[j + 1] - knots[j])).clamp(0.0, 1.0);
            values[lay.r(i)] = r;
            values[lay.w(i, j)] = 1.0 - t;
            values[lay.w(i, j + 1)] = t;
            values[lay.lam(i, j + 1)] = 1.0;
            let k = (1.0 - t) * pwl.values()[j] + t * pwl.values()[j + 1];
            values[lay.kx(i)] = k;
            kx[i] = k;
        }
        let mu = kx.dot(self.data.weights());
        values[lay.mu()] = mu;
        if let Some(s) = lay.sigma() {
            let rhs = pwl.params().variance - kx.dot(&(self.data.inverse() * &kx));
            values[s] = rhs.max(0.0).sqrt();
        }
        let objective = self.objective_value(&values);
        Ok(Candidate { x: x.to_vec(), values, objective })
    }
}

fn check_convex(q: &QuadConstraint, dim: usize) -> Result<()> {
    if q.quad.is_empty() {
        return Ok(());
    }
    if q.sense == Sense::Eq {
        return Err(Error::NonconvexConstraint(q.name.clone()));
    }
    let mut h: DMatrix<f64> = DMatrix::zeros(dim, dim);
    for (&(a, b), &c) in &q.quad {
        if a == b {
            h[(a, a)] += c;
        } else {
            h[(a, b)] += 0.5 * c;
            h[(b, a)] += 0.5 * c;
        }
    }
    if q.sense == Sense::Ge {
        h = -h;
    }
    let eig = h.symmetric_eigenvalues();
    let scale = eig.iter().map(|v| v.abs()).fold(1e-300, f64::max);
    if eig.iter().any(|v| *v < -1e-10 * scale) {
        return Err(Error::NonconvexConstraint(q.name.clone()));
    }
    Ok(())
}

/// Full encoding for a single (non-additive) approximated posterior.
pub fn build_full_model(
    pwl: &PwlKernel,
    dataset: &Dataset,
    beta: f64,
    bounds: &Bounds,
    known: &[KnownConstraint],
) -> Result<MiqpModel> {
    let post = ApproxPosterior::new(pwl.clone(), dataset)?;
    MiqpModel::from_posterior(&post, beta, bounds, known, true)
}

/// Mean-only encoding: no variance constraint and no `sigma` variable.
pub fn build_sub_model(
    pwl: &PwlKernel,
    dataset: &Dataset,
    bounds: &Bounds,
    known: &[KnownConstraint],
) -> Result<MiqpModel> {
    let post = ApproxPosterior::new(pwl.clone(), dataset)?;
    MiqpModel::from_posterior(&post, 0.0, bounds, known, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::KernelParams;

    fn toy(n: usize) -> (PwlKernel, Dataset, Bounds) {
        let b = Bounds::unit(1);
        let pwl = PwlKernel::build(KernelParams::new(1.0, 0.25), &b).unwrap();
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 + 0.5) / n as f64]).collect();
        let y: Vec<f64> = (0..n).map(|i| ((i * 7 % 5) as f64) / 4.0).collect();
        (pwl, Dataset::new(x, y).unwrap(), b)
    }

    #[test]
    fn variable_count() {
        let (pwl, ds, b) = toy(5);
        let model = build_full_model(&pwl, &ds, 1.0, &b, &[]).unwrap();
        assert_eq!(pwl.segments(), 7);
        assert_eq!(model.num_vars(), 88);
        assert_eq!(model.num_binaries(), 35);
        assert_eq!(model.objective.len(), 2);
        let sub = build_sub_model(&pwl, &ds, &b, &[]).unwrap();
        assert_eq!(sub.num_vars(), 87);
        assert!(sub.quadratic.iter().all(|q| q.tag == QuadTag::NonconvexEquality));
        assert_eq!(sub.quadratic.len(), 5);
        assert_eq!(model.variables[model.layout.sigma().unwrap()].upper, 1.0);
    }

    #[test]
    fn candidate_matches_posterior_and_satisfies_model() {
        let (pwl, ds, b) = toy(5);
        let beta = 2.3;
        let model = build_full_model(&pwl, &ds, beta, &b, &[]).unwrap();
        let post = ApproxPosterior::new(pwl.clone(), &ds).unwrap();
        for s in 0..=50 {
            let x = [s as f64 / 50.0];
            let cand = model.evaluate_candidate(&x).unwrap();
            let lcb = post.lcb(&x, beta).unwrap();
            assert!((cand.objective - lcb).abs() < 1e-9);
            let (_, v) = post.at(&x).unwrap();
            let raw = post.raw_variance_from(&post.kernel_vector(&x));
            if raw >= 0.0 {
                assert!(model.max_violation(&cand.values) <= 1e-7, "x={x:?}");
            }
            assert!(v >= 0.0);
            // r agrees with both the encoding and the distance equality
            let lay = model.layout;
            for i in 0..lay.n {
                let r_w: f64 = (0..=lay.m).map(|j| cand.values[lay.w(i, j)] * pwl.knots()[j]).sum();
                assert!((r_w - cand.values[lay.r(i)]).abs() < 1e-9);
                let nz = (0..=lay.m).filter(|&j| cand.values[lay.w(i, j)] > 0.0).collect::<Vec<_>>();
                assert!(nz.len() <= 2 && (nz.len() < 2 || nz[1] == nz[0] + 1));
            }
        }
        assert!(matches!(model.evaluate_candidate(&[1.5]), Err(Error::InfeasibleCandidate(_))));
    }

    #[test]
    fn candidate_at_knot_uses_single_weight() {
        let (pwl, _, b) = toy(1);
        let ds = Dataset::new(vec![vec![0.0]], vec![1.0]).unwrap();
        let model = build_full_model(&pwl, &ds, 0.5, &b, &[]).unwrap();
        let x = [pwl.knots()[3] * 0.25];
        let cand = model.evaluate_candidate(&x).unwrap();
        let lay = model.layout;
        let active: Vec<f64> = (0..=lay.m).map(|j| cand.values[lay.w(0, j)]).filter(|v| *v > 1e-12).collect();
        assert_eq!(active.len(), 1);
        assert!((active[0] - 1.0).abs() < 1e-9);
        let lams = (1..=lay.m).filter(|&j| cand.values[lay.lam(0, j)] == 1.0).count();
        assert_eq!(lams, 1);
    }

    #[test]
    fn known_constraint_checks() {
        let (pwl, ds, b) = toy(2);
        let mut model = build_full_model(&pwl, &ds, 1.0, &b, &[]).unwrap();
        let bad = KnownConstraint::Linear(LinearConstraint::new("bad", vec![(3, 1.0)], Sense::Le, 1.0));
        assert!(matches!(model.add_known_constraints(&[bad]), Err(Error::NonInputVariable { var: 3, .. })));
        let concave = KnownConstraint::Quadratic(QuadConstraint::new(
            "concave",
            [((0, 0), -1.0)],
            vec![],
            Sense::Le,
            0.5,
            QuadTag::Convex,
        ));
        assert!(matches!(model.add_known_constraints(&[concave]), Err(Error::NonconvexConstraint(_))));
        let disk = KnownConstraint::Quadratic(QuadConstraint::new(
            "disk",
            [((0, 0), 1.0)],
            vec![],
            Sense::Le,
            0.25,
            QuadTag::Convex,
        ));
        model.add_known_constraints(&[disk]).unwrap();
        assert!(model.evaluate_candidate(&[0.4]).is_ok());
        assert!(model.evaluate_candidate(&[0.6]).is_err());
    }

    #[test]
    fn affine_substitution_and_restriction() {
        let c = KnownConstraint::Quadratic(QuadConstraint::new(
            "q",
            [((0, 0), 2.0), ((0, 1), 1.0)],
            vec![(1, 3.0)],
            Sense::Le,
            5.0,
            QuadTag::Convex,
        ));
        let offset = [1.0, -2.0];
        let scale = [2.0, 0.5];
        let z = [0.3, 0.8];
        let x = [offset[0] + scale[0] * z[0], offset[1] + scale[1] * z[1]];
        let sub = c.affine_substitute(&offset, &scale);
        let lhs = |k: &KnownConstraint, v: &[f64]| match k {
            KnownConstraint::Quadratic(q) => q.lhs(v) - q.rhs,
            KnownConstraint::Linear(l) => l.lhs(v) - l.rhs,
        };
        assert!((lhs(&c, &x) - lhs(&sub, &z)).abs() < 1e-12);
        assert!(c.restrict(&[0]).is_none());
        let r = c.restrict(&[1, 0]).unwrap();
        assert!((lhs(&r, &[x[1], x[0]]) - lhs(&c, &x)).abs() < 1e-12);
    }
}
