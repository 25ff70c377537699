//! Node state, bound tightening, LP relaxation and branching.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::squared_distance;
use crate::lp::{DualSimplex, LinearProgram, LpRow, LpStatus};
use crate::model::{KnownConstraint, MiqpModel, Sense};

/// Tolerance on `kx = k~(r)` and on the distance equalities.
pub const EQUALITY_TOL: f64 = 1e-6;
const CUT_TOL: f64 = 1e-8;
const MIN_WIDTH: f64 = 1e-9;

/// A region of the search: an input box and, per training point, a
/// contiguous range of allowed segments.
#[derive(Debug, Clone)]
pub struct Node {
    pub id: usize,
    pub depth: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Allowed segment indices `first..=last` (0-based) per training point.
    pub segments: Vec<(usize, usize)>,
    /// Valid lower bound on every completion inside the node.
    pub bound: f64,
    /// Cuts inherited from the parent; valid for every descendant.
    pub cuts: Arc<Vec<LpRow>>,
}

impl Node {
    pub fn root(model: &MiqpModel) -> Self {
        let lay = model.layout;
        Self {
            id: 0,
            depth: 0,
            lower: (0..lay.dim).map(|d| model.variables[lay.x(d)].lower).collect(),
            upper: (0..lay.dim).map(|d| model.variables[lay.x(d)].upper).collect(),
            segments: vec![(0, lay.m - 1); lay.n],
            bound: f64::NEG_INFINITY,
            cuts: Arc::new(Vec::new()),
        }
    }

    pub fn max_width(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(a, b)| b - a).fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (a, b))| *v >= a - 1e-12 && *v <= b + 1e-12)
    }
}

/// Relaxed point of a node: the LP solution restricted to the reduced
/// variables `x, r, kx, mu, sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedPoint {
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub kx: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub enum Relaxation {
    /// No completion exists inside the node.
    Infeasible,
    /// The LP failed numerically.
    Failed,
    Bounded {
        bound: f64,
        point: Option<RelaxedPoint>,
        /// The node after bound tightening.
        node: Node,
        /// Cuts binding at the final LP, handed to children.
        active: Vec<LpRow>,
    },
}

/// Problem data in the form the relaxation needs.
pub(crate) struct Context<'a> {
    pub model: &'a MiqpModel,
    pub dim: usize,
    pub n: usize,
    pub l: f64,
    pub variance: f64,
    pub sqrt_beta: f64,
    pub r_cap: Vec<f64>,
    pub known_linear: Vec<&'a crate::model::LinearConstraint>,
    pub known_quad: Vec<&'a crate::model::QuadConstraint>,
    pub max_rounds: usize,
}

impl<'a> Context<'a> {
    pub fn new(model: &'a MiqpModel, max_rounds: usize) -> Self {
        let lay = model.layout;
        let mut known_linear = Vec::new();
        let mut known_quad = Vec::new();
        for c in &model.data.known {
            match c {
                KnownConstraint::Linear(l) => known_linear.push(l),
                KnownConstraint::Quadratic(q) => known_quad.push(q),
            }
        }
        let params = model.data.pwl().params();
        Self {
            model,
            dim: lay.dim,
            n: lay.n,
            l: params.lengthscale,
            variance: params.variance,
            sqrt_beta: if lay.has_sigma { model.data.beta.sqrt() } else { 0.0 },
            r_cap: (0..lay.n).map(|i| model.variables[lay.r(i)].upper).collect(),
            known_linear,
            known_quad,
            max_rounds,
        }
    }

    fn knots(&self) -> &[f64] {
        self.model.data.pwl().knots()
    }

    fn pwl_eval(&self, r: f64) -> f64 {
        self.model.data.pwl().eval(r)
    }

    fn center(&self, i: usize) -> &[f64] {
        &self.model.data.posterior.centers()[i]
    }

    fn has_sigma(&self) -> bool {
        self.model.layout.has_sigma
    }

    // reduced LP variable indices
    fn vx(&self, d: usize) -> usize {
        d
    }
    fn vr(&self, i: usize) -> usize {
        self.dim + i
    }
    fn vk(&self, i: usize) -> usize {
        self.dim + self.n + i
    }
    fn vmu(&self) -> usize {
        self.dim + 2 * self.n
    }
    fn vsigma(&self) -> usize {
        self.dim + 2 * self.n + 1
    }

    /// Range of `r_i` implied by the node box and its segment range.
    fn r_range(&self, node: &Node, i: usize) -> (f64, f64) {
        let c = self.center(i);
        let mut near = 0.0;
        let mut far = 0.0;
        for d in 0..self.dim {
            let (lo, hi) = (node.lower[d], node.upper[d]);
            let v = c[d].clamp(lo, hi) - c[d];
            near += v * v;
            let f = (c[d] - lo).abs().max((hi - c[d]).abs());
            far += f * f;
        }
        let knots = self.knots();
        let (a, b) = node.segments[i];
        let lo = (near.sqrt() / self.l).max(knots[a]);
        let hi = (far.sqrt() / self.l).min(knots[b + 1]).min(self.r_cap[i]);
        (lo, hi)
    }

    /// Propagates box and segment restrictions. Returns false when the node
    /// is provably empty.
    pub fn tighten(&self, node: &mut Node) -> bool {
        let knots = self.knots();
        let m = knots.len() - 1;
        for _ in 0..2 {
            for i in 0..self.n {
                let (lo, hi) = self.r_range(node, i);
                if lo > hi + 1e-9 * (1.0 + hi) {
                    return false;
                }
                let (a, b) = node.segments[i];
                let mut a2 = a.max(knots.partition_point(|k| *k <= lo).saturating_sub(1).min(m - 1));
                let mut b2 = b.min(knots.partition_point(|k| *k < hi).saturating_sub(1));
                if a2 > b2 {
                    // both ends sit on the same knot
                    a2 = a2.min(b).max(a);
                    b2 = a2;
                }
                node.segments[i] = (a2, b2);
                let reach = hi * self.l;
                let c = self.center(i);
                for d in 0..self.dim {
                    node.lower[d] = node.lower[d].max(c[d] - reach);
                    node.upper[d] = node.upper[d].min(c[d] + reach);
                    if node.lower[d] > node.upper[d] {
                        if node.lower[d] - node.upper[d] > 1e-9 {
                            return false;
                        }
                        let mid = 0.5 * (node.lower[d] + node.upper[d]);
                        node.lower[d] = mid;
                        node.upper[d] = mid;
                    }
                }
            }
        }
        true
    }

    /// Knot points of `k~` over `[lo, hi]`, including both ends.
    fn graph_points(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let mut pts = vec![(lo, self.pwl_eval(lo))];
        for (k, v) in self.knots().iter().zip(self.model.data.pwl().values()) {
            if *k > lo && *k < hi {
                pts.push((*k, *v));
            }
        }
        if hi > lo {
            pts.push((hi, self.pwl_eval(hi)));
        }
        pts
    }

    /// Facet `(slope, intercept)` of the upper or lower convex hull of the
    /// graph over `[lo, hi]` that lies above/below `r`.
    fn hull_facet(&self, lo: f64, hi: f64, r: f64, upper: bool) -> Option<(f64, f64)> {
        let pts = self.graph_points(lo, hi);
        if pts.len() < 2 {
            return None;
        }
        let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
        let mut hull: Vec<(f64, f64)> = Vec::new();
        for p in pts {
            while hull.len() >= 2 {
                let c = cross(hull[hull.len() - 2], hull[hull.len() - 1], p);
                if (upper && c >= 0.0) || (!upper && c <= 0.0) {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        let k = hull.windows(2).position(|w| r <= w[1].0).unwrap_or(hull.len() - 2);
        let (p, q) = (hull[k], hull[k + 1]);
        if q.0 - p.0 <= 0.0 {
            return None;
        }
        let slope = (q.1 - p.1) / (q.0 - p.0);
        Some((slope, p.1 - slope * p.0))
    }

    /// `2 t r_i <= t^2 + sum_d sec_d(x_d) / l^2` with coordinate secants
    /// over the node box.
    fn secant_cut(&self, node: &Node, i: usize, t: f64) -> LpRow {
        let c = self.center(i);
        let inv = 1.0 / (self.l * self.l);
        let mut coefs = vec![(self.vr(i), 2.0 * t)];
        let mut rhs = t * t;
        for d in 0..self.dim {
            let (lo, hi) = (node.lower[d], node.upper[d]);
            let slope = (hi + lo - 2.0 * c[d]) * inv;
            if slope != 0.0 {
                coefs.push((self.vx(d), -slope));
            }
            rhs += (lo - c[d]).powi(2) * inv - slope * lo;
        }
        LpRow { coefs, lower: f64::NEG_INFINITY, upper: rhs }
    }

    /// `r_i >= g^T (x - c_i) / l` for a unit vector `g`.
    fn norm_cut(&self, i: usize, g: &[f64]) -> LpRow {
        let c = self.center(i);
        let mut coefs = vec![(self.vr(i), 1.0)];
        let mut rhs = 0.0;
        for d in 0..self.dim {
            if g[d] != 0.0 {
                coefs.push((self.vx(d), -g[d] / self.l));
                rhs -= g[d] * c[d] / self.l;
            }
        }
        LpRow { coefs, lower: rhs, upper: f64::INFINITY }
    }

    /// Tangent of `sigma^2 + kx^T Q kx <= sigma_f^2` at `(s0, k0)`.
    fn variance_cut(&self, s0: f64, k0: &[f64]) -> LpRow {
        let q = self.model.data.inverse();
        let mut coefs = Vec::with_capacity(self.n + 1);
        let mut quad = s0 * s0;
        for i in 0..self.n {
            let qk: f64 = (0..self.n).map(|j| q[(i, j)] * k0[j]).sum();
            quad += k0[i] * qk;
            coefs.push((self.vk(i), 2.0 * qk));
        }
        coefs.push((self.vsigma(), 2.0 * s0));
        LpRow { coefs, lower: f64::NEG_INFINITY, upper: self.variance + quad }
    }

    fn quad_known_cut(&self, q: &crate::model::QuadConstraint, x0: &[f64]) -> LpRow {
        let mut grad = vec![0.0; self.dim];
        let mut val = 0.0;
        for (&(a, b), &c) in &q.quad {
            val += c * x0[a] * x0[b];
            if a == b {
                grad[a] += 2.0 * c * x0[a];
            } else {
                grad[a] += c * x0[b];
                grad[b] += c * x0[a];
            }
        }
        for &(v, c) in &q.linear {
            val += c * x0[v];
            grad[v] += c;
        }
        // g(x0) + grad (x - x0) (sense) rhs
        let shift = q.rhs - val + grad.iter().zip(x0).map(|(g, x)| g * x).sum::<f64>();
        let coefs = grad.iter().enumerate().filter(|(_, g)| **g != 0.0).map(|(d, g)| (self.vx(d), *g)).collect();
        match q.sense {
            Sense::Le => LpRow { coefs, lower: f64::NEG_INFINITY, upper: shift },
            Sense::Ge => LpRow { coefs, lower: shift, upper: f64::INFINITY },
            Sense::Eq => LpRow { coefs, lower: shift, upper: shift },
        }
    }

    fn base_lp(&self, node: &Node, ranges: &[(f64, f64)]) -> LinearProgram {
        let mut lp = LinearProgram::default();
        for d in 0..self.dim {
            lp.add_var(node.lower[d], node.upper[d], 0.0);
        }
        for &(lo, hi) in ranges {
            lp.add_var(lo, hi.max(lo), 0.0);
        }
        let weights = self.model.data.weights();
        let (mut mu_lo, mut mu_hi) = (0.0, 0.0);
        for (i, &(lo, hi)) in ranges.iter().enumerate() {
            let (k_lo, k_hi) = (self.pwl_eval(hi.max(lo)), self.pwl_eval(lo));
            lp.add_var(k_lo, k_hi, 0.0);
            let a = weights[i];
            mu_lo += (a * k_lo).min(a * k_hi);
            mu_hi += (a * k_lo).max(a * k_hi);
        }
        let pad = 1e-9 * (1.0 + mu_lo.abs().max(mu_hi.abs()));
        lp.add_var(mu_lo - pad, mu_hi + pad, 1.0);
        if self.has_sigma() {
            lp.add_var(0.0, self.variance.sqrt(), -self.sqrt_beta);
        }
        let mut mean = vec![(self.vmu(), 1.0)];
        mean.extend((0..self.n).map(|i| (self.vk(i), -weights[i])));
        lp.add_row(mean, 0.0, 0.0);
        for c in &self.known_linear {
            let coefs = c.coefs.iter().map(|&(v, a)| (self.vx(v), a)).collect();
            let (lo, hi) = match c.sense {
                Sense::Le => (f64::NEG_INFINITY, c.rhs),
                Sense::Ge => (c.rhs, f64::INFINITY),
                Sense::Eq => (c.rhs, c.rhs),
            };
            lp.add_row(coefs, lo, hi);
        }
        for row in node.cuts.iter() {
            lp.rows.push(row.clone());
        }
        for (i, &(lo, hi)) in ranges.iter().enumerate() {
            for t in [lo, hi] {
                if t > 1e-12 {
                    lp.rows.push(self.secant_cut(node, i, t));
                }
            }
        }
        lp
    }

    fn point_of(&self, s: &DualSimplex) -> RelaxedPoint {
        let z = s.x();
        RelaxedPoint {
            x: z[..self.dim].to_vec(),
            r: (0..self.n).map(|i| z[self.vr(i)]).collect(),
            kx: (0..self.n).map(|i| z[self.vk(i)]).collect(),
            mu: z[self.vmu()],
            sigma: if self.has_sigma() { z[self.vsigma()] } else { 0.0 },
        }
    }

    /// Cuts separating `p`; empty when `p` satisfies every linearized part.
    fn separate(&self, node: &Node, ranges: &[(f64, f64)], p: &RelaxedPoint) -> Vec<LpRow> {
        let mut cuts = Vec::new();
        for i in 0..self.n {
            let (lo, hi) = ranges[i];
            let c = self.center(i);
            let r = p.r[i];
            let k = p.kx[i];
            let exact = self.pwl_eval(r);
            if hi > lo {
                if k > exact + CUT_TOL {
                    if let Some((s, b)) = self.hull_facet(lo, hi, r, true) {
                        if k > s * r + b + CUT_TOL {
                            cuts.push(LpRow { coefs: vec![(self.vk(i), 1.0), (self.vr(i), -s)], lower: f64::NEG_INFINITY, upper: b });
                        }
                    }
                } else if k < exact - CUT_TOL {
                    if let Some((s, b)) = self.hull_facet(lo, hi, r, false) {
                        if k < s * r + b - CUT_TOL {
                            cuts.push(LpRow { coefs: vec![(self.vk(i), 1.0), (self.vr(i), -s)], lower: b, upper: f64::INFINITY });
                        }
                    }
                }
            }
            let dist = squared_distance(&p.x, c).sqrt();
            if dist / self.l > r + CUT_TOL && dist > 0.0 {
                let g: Vec<f64> = p.x.iter().zip(c).map(|(a, b)| (a - b) / dist).collect();
                cuts.push(self.norm_cut(i, &g));
            }
            let sec: f64 = (0..self.dim)
                .map(|d| {
                    let (lo, hi) = (node.lower[d], node.upper[d]);
                    (lo - c[d]).powi(2) + (hi + lo - 2.0 * c[d]) * (p.x[d] - lo)
                })
                .sum::<f64>()
                / (self.l * self.l);
            if r * r > sec + CUT_TOL && r > 0.0 {
                cuts.push(self.secant_cut(node, i, r));
            }
        }
        // triangle inequality between distances to two centers
        for i in 0..self.n {
            for j in i + 1..self.n {
                let dij = squared_distance(self.center(i), self.center(j)).sqrt() / self.l;
                let diff = p.r[i] - p.r[j];
                if diff.abs() > dij + CUT_TOL {
                    cuts.push(LpRow { coefs: vec![(self.vr(i), 1.0), (self.vr(j), -1.0)], lower: -dij, upper: dij });
                }
            }
        }
        if self.has_sigma() {
            let q = self.model.data.inverse();
            let mut kqk = 0.0;
            for i in 0..self.n {
                let qk: f64 = (0..self.n).map(|j| q[(i, j)] * p.kx[j]).sum();
                kqk += p.kx[i] * qk;
            }
            let lhs = p.sigma * p.sigma + kqk;
            if lhs > self.variance + CUT_TOL * (1.0 + self.variance) {
                cuts.push(self.variance_cut(p.sigma, &p.kx));
                let slack = self.variance - kqk;
                if slack > 0.0 {
                    cuts.push(self.variance_cut(slack.sqrt(), &p.kx));
                }
                // tangent at the kernel vector the relaxed input really has
                let kt: Vec<f64> = (0..self.n).map(|i| self.pwl_eval(squared_distance(&p.x, self.center(i)).sqrt() / self.l)).collect();
                let mut ktq = 0.0;
                for i in 0..self.n {
                    ktq += kt[i] * (0..self.n).map(|j| q[(i, j)] * kt[j]).sum::<f64>();
                }
                if self.variance - ktq > 1e-12 {
                    cuts.push(self.variance_cut((self.variance - ktq).sqrt(), &kt));
                }
            }
        }
        for q in &self.known_quad {
            if q.violation(&p.x) > CUT_TOL {
                cuts.push(self.quad_known_cut(q, &p.x));
            }
        }
        cuts
    }

    pub fn relax(&self, node: &Node, incumbent: f64) -> Relaxation {
        let mut node = node.clone();
        if !self.tighten(&mut node) {
            return Relaxation::Infeasible;
        }
        let ranges: Vec<(f64, f64)> = (0..self.n).map(|i| self.r_range(&node, i)).map(|(a, b)| (a, b.max(a))).collect();
        let lp = self.base_lp(&node, &ranges);
        let nvars = lp.num_vars();
        let fixed_rows = 1 + self.known_linear.len();
        let mut simplex = DualSimplex::new(&lp);
        let mut last_bound = f64::NEG_INFINITY;
        let mut slow_rounds = 0;
        let mut point = None;
        let mut bound = node.bound;
        for round in 0..=self.max_rounds {
            match simplex.solve() {
                LpStatus::Infeasible => return Relaxation::Infeasible,
                LpStatus::Stalled => {
                    let db = simplex.dual_bound();
                    if !db.is_finite() {
                        return Relaxation::Failed;
                    }
                    bound = bound.max(db);
                    point = None;
                    break;
                }
                LpStatus::Optimal => {}
            }
            let obj = simplex.objective();
            bound = bound.max(obj);
            let p = self.point_of(&simplex);
            if bound >= incumbent || round == self.max_rounds {
                point = Some(p);
                break;
            }
            let cuts = self.separate(&node, &ranges, &p);
            point = Some(p);
            if cuts.is_empty() {
                break;
            }
            if obj - last_bound <= 1e-9 * (1.0 + obj.abs()) {
                slow_rounds += 1;
                if slow_rounds >= 4 {
                    break;
                }
            } else {
                slow_rounds = 0;
            }
            last_bound = obj;
            if simplex.num_rows() > fixed_rows + 3 * nvars {
                simplex.drop_slack_rows(fixed_rows);
            }
            for c in cuts {
                simplex.add_row(c.coefs, c.lower, c.upper);
            }
        }
        let active = active_rows(&simplex, fixed_rows);
        Relaxation::Bounded { bound, point, node, active }
    }

    /// Largest violation of the nonlinear parts at a relaxed point.
    pub fn violations(&self, p: &RelaxedPoint) -> (Vec<f64>, Vec<f64>) {
        let graph = (0..self.n).map(|i| (p.kx[i] - self.pwl_eval(p.r[i])).abs()).collect();
        let dist = (0..self.n)
            .map(|i| (p.r[i] * p.r[i] - squared_distance(&p.x, self.center(i)) / (self.l * self.l)).abs())
            .collect();
        (graph, dist)
    }
}

/// Tight rows of the final LP after the first `skip` (fixed) rows.
fn active_rows(s: &DualSimplex, skip: usize) -> Vec<LpRow> {
    let z = s.x();
    s.rows()
        .iter()
        .skip(skip)
        .filter(|row| {
            let act: f64 = row.coefs.iter().map(|&(j, a)| a * z[j]).sum();
            let tol = 1e-7 * (1.0 + act.abs());
            (act - row.upper).abs() <= tol || (act - row.lower).abs() <= tol
        })
        .cloned()
        .collect()
}

/// Splits `node` at the relaxed point: on the input coordinate with the
/// largest secant gap while a distance equality is violated, otherwise on
/// the segment range of the worst kernel-graph violation.
pub(crate) fn branch_with(ctx: &Context<'_>, node: &Node, p: &RelaxedPoint, next_id: &mut usize) -> Result<(Node, Node)> {
    let (graph, dist) = ctx.violations(p);
    let knots = ctx.knots();
    let mut best_i = None;
    let mut best_v = EQUALITY_TOL;
    for (i, v) in graph.iter().enumerate() {
        let (a, b) = node.segments[i];
        if *v > best_v && a < b {
            best_v = *v;
            best_i = Some(i);
        }
    }
    let mut child = |lower: Vec<f64>, upper: Vec<f64>, segments: Vec<(usize, usize)>| {
        *next_id += 1;
        Node {
            id: *next_id,
            depth: node.depth + 1,
            lower,
            upper,
            segments,
            bound: node.bound,
            cuts: node.cuts.clone(),
        }
    };
    let worst = dist.iter().enumerate().filter(|(_, v)| **v > EQUALITY_TOL).max_by(|a, b| a.1.total_cmp(b.1));
    let d = match (worst, best_i) {
        (Some(_), _) => {
            let gap = |d: usize| {
                let (lo, hi) = (node.lower[d], node.upper[d]);
                (p.x[d] - lo).max(0.0) * (hi - p.x[d]).max(0.0) + 1e-12 * (hi - lo)
            };
            (0..ctx.dim).max_by(|&u, &v| gap(u).total_cmp(&gap(v))).expect("dim >= 1")
        }
        (None, Some(i)) => {
            let (a, b) = node.segments[i];
            let r = p.r[i];
            let s = (a + 1..=b)
                .min_by(|&u, &v| (knots[u] - r).abs().total_cmp(&(knots[v] - r).abs()))
                .expect("range holds an interior knot");
            let mut left = node.segments.clone();
            left[i] = (a, s - 1);
            let mut right = node.segments.clone();
            right[i] = (s, b);
            let ca = child(node.lower.clone(), node.upper.clone(), left);
            let cb = child(node.lower.clone(), node.upper.clone(), right);
            return Ok((ca, cb));
        }
        (None, None) => {
            if graph.iter().all(|v| *v <= EQUALITY_TOL) {
                return Err(Error::BranchOnFeasible);
            }
            (0..ctx.dim)
                .max_by(|&u, &v| (node.upper[u] - node.lower[u]).total_cmp(&(node.upper[v] - node.lower[v])))
                .expect("dim >= 1")
        }
    };
    let (lo, hi) = (node.lower[d], node.upper[d]);
    if hi - lo < MIN_WIDTH {
        return Err(Error::BranchOnFeasible);
    }
    let at = p.x[d].clamp(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo));
    let mut up_a = node.upper.clone();
    up_a[d] = at;
    let mut lo_b = node.lower.clone();
    lo_b[d] = at;
    let ca = child(node.lower.clone(), up_a, node.segments.clone());
    let cb = child(lo_b, node.upper.clone(), node.segments.clone());
    Ok((ca, cb))
}

/// Lower bound and relaxed point of `node`, solving the LP relaxation with
/// cut rounds.
pub fn node_relaxation(model: &MiqpModel, node: &Node) -> Relaxation {
    Context::new(model, 40).relax(node, f64::INFINITY)
}

/// Splits `node` at `point`. Fails with [`Error::BranchOnFeasible`] when the
/// point already satisfies every nonlinear equality.
pub fn branch(model: &MiqpModel, node: &Node, point: &RelaxedPoint) -> Result<(Node, Node)> {
    let ctx = Context::new(model, 0);
    let mut id = node.id * 2;
    branch_with(&ctx, node, point, &mut id)
}
