//! Dense bounded-variable dual simplex on a compact tableau.
//!
//! Every row `a_r x` gets an activity variable `y_r` with bounds
//! `[L_r, U_r]`, so the system is `A x - y = 0` over boxed `x` and possibly
//! half-infinite `y`. The system is homogeneous, so each basic variable is a
//! linear function of the `n` nonbasic ones and the tableau is `m x n`. The
//! starting basis is the activities, with structurals at whichever bound
//! makes their cost nonnegative in the minimizing direction, so the first
//! basis is dual feasible. Rows can be appended without losing dual
//! feasibility, which is what cut loops need, and basic rows can be dropped
//! for free.

use nalgebra::DMatrix;

pub const FEAS_TOL: f64 = 1e-9;
pub const OPT_TOL: f64 = 1e-9;
pub const PIVOT_TOL: f64 = 1e-11;
const ELIGIBLE_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 60;
const STALL_LIMIT: usize = 60;

/// A row `lower <= sum coef_j x_j <= upper` stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub coefs: Vec<(usize, f64)>,
    pub lower: f64,
    pub upper: f64,
}

/// `min c^T x` over `l <= x <= u` (finite) and two-sided rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<LpRow>,
}

impl LinearProgram {
    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.len() - 1
    }

    pub fn add_row(&mut self, coefs: Vec<(usize, f64)>, lower: f64, upper: f64) {
        self.rows.push(LpRow { coefs, lower, upper });
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    /// Iteration cap or unrecoverable numerics; the dual bound is still
    /// valid whenever the basis stayed dual feasible.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pos {
    Basic(usize),
    Nonbasic(usize),
}

/// Solver state; reusable across [`DualSimplex::add_row`] calls.
#[derive(Debug, Clone)]
pub struct DualSimplex {
    n: usize,
    rows: Vec<LpRow>,
    /// Bounds and values of structurals then activities.
    lo: Vec<f64>,
    hi: Vec<f64>,
    z: Vec<f64>,
    at_upper: Vec<bool>,
    pos: Vec<Pos>,
    cost: Vec<f64>,
    basic: Vec<usize>,
    nonbasic: Vec<usize>,
    /// Row-major `m x n`: `z[basic[i]] = sum_k tab[i][k] z[nonbasic[k]]`.
    tab: Vec<f64>,
    /// Reduced costs of the nonbasic positions.
    d: Vec<f64>,
    since_refactor: usize,
    pub iterations: usize,
    pub max_iterations: usize,
}

impl DualSimplex {
    pub fn new(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let at_upper: Vec<bool> = lp.cost.iter().map(|c| *c < 0.0).collect();
        let z = (0..n).map(|j| if at_upper[j] { lp.upper[j] } else { lp.lower[j] }).collect();
        let mut s = Self {
            n,
            rows: Vec::new(),
            lo: lp.lower.clone(),
            hi: lp.upper.clone(),
            z,
            at_upper,
            pos: (0..n).map(Pos::Nonbasic).collect(),
            cost: lp.cost.clone(),
            basic: Vec::new(),
            nonbasic: (0..n).collect(),
            tab: Vec::new(),
            d: lp.cost.clone(),
            since_refactor: 0,
            iterations: 0,
            max_iterations: 0,
        };
        for row in &lp.rows {
            s.add_row(row.coefs.clone(), row.lower, row.upper);
        }
        s
    }

    pub fn rows(&self) -> &[LpRow] {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    fn trow(&self, i: usize) -> &[f64] {
        &self.tab[i * self.n..(i + 1) * self.n]
    }

    /// Appends a row; its activity enters the basis so dual feasibility is
    /// kept and the next [`solve`](Self::solve) warm starts.
    pub fn add_row(&mut self, coefs: Vec<(usize, f64)>, lower: f64, upper: f64) {
        let n = self.n;
        let mut new = vec![0.0; n];
        let mut activity = 0.0;
        for &(j, a) in &coefs {
            activity += a * self.z[j];
            match self.pos[j] {
                Pos::Nonbasic(k) => new[k] += a,
                Pos::Basic(i) => {
                    for (v, t) in new.iter_mut().zip(&self.tab[i * n..(i + 1) * n]) {
                        *v += a * t;
                    }
                }
            }
        }
        let id = self.z.len();
        self.tab.extend_from_slice(&new);
        self.pos.push(Pos::Basic(self.basic.len()));
        self.basic.push(id);
        self.rows.push(LpRow { coefs, lower, upper });
        self.lo.push(lower);
        self.hi.push(upper);
        self.z.push(activity);
        self.at_upper.push(false);
    }

    /// Drops rows from index `keep` on whose activity is basic and strictly
    /// inside its bounds. The current point and basis stay optimal.
    pub fn drop_slack_rows(&mut self, keep: usize) {
        let n = self.n;
        let m = self.rows.len();
        let slack = |s: &Self, r: usize| {
            let v = n + r;
            let tol = 1e-7 * (1.0 + s.z[v].abs());
            matches!(s.pos[v], Pos::Basic(_)) && s.z[v] > s.lo[v] + tol && s.z[v] < s.hi[v] - tol
        };
        let drop: Vec<bool> = (0..m).map(|r| r >= keep && slack(self, r)).collect();
        if !drop.iter().any(|d| *d) {
            return;
        }
        let mut map = vec![usize::MAX; n + m];
        for j in 0..n {
            map[j] = j;
        }
        let mut next = n;
        for r in 0..m {
            if !drop[r] {
                map[n + r] = next;
                next += 1;
            }
        }
        let keep_var = |v: usize| map[v] != usize::MAX;
        let mut tab = Vec::with_capacity(self.tab.len());
        let mut basic = Vec::with_capacity(self.basic.len());
        for (i, &b) in self.basic.iter().enumerate() {
            if keep_var(b) {
                tab.extend_from_slice(&self.tab[i * n..(i + 1) * n]);
                basic.push(map[b]);
            }
        }
        let filter = |v: &Vec<f64>| -> Vec<f64> { (0..n + m).filter(|&j| keep_var(j)).map(|j| v[j]).collect() };
        self.lo = filter(&self.lo);
        self.hi = filter(&self.hi);
        self.z = filter(&self.z);
        self.at_upper = (0..n + m).filter(|&j| keep_var(j)).map(|j| self.at_upper[j]).collect();
        self.rows = (0..m).filter(|&r| !drop[r]).map(|r| self.rows[r].clone()).collect();
        for v in self.nonbasic.iter_mut() {
            *v = map[*v];
        }
        self.tab = tab;
        self.basic = basic;
        self.pos = vec![Pos::Basic(0); self.z.len()];
        for (i, &b) in self.basic.iter().enumerate() {
            self.pos[b] = Pos::Basic(i);
        }
        for (k, &v) in self.nonbasic.iter().enumerate() {
            self.pos[v] = Pos::Nonbasic(k);
        }
    }

    /// Current primal values of the structural variables.
    pub fn x(&self) -> &[f64] {
        &self.z[..self.n]
    }

    pub fn objective(&self) -> f64 {
        self.cost.iter().zip(&self.z).map(|(c, x)| c * x).sum()
    }

    /// Lagrangian bound of the current basis: valid as long as the basis is
    /// dual feasible, whether or not it is primal feasible.
    pub fn dual_bound(&self) -> f64 {
        let mut bound = 0.0;
        for (k, &v) in self.nonbasic.iter().enumerate() {
            let dk = self.d[k];
            let val = if dk >= 0.0 { self.lo[v] } else { self.hi[v] };
            if !val.is_finite() {
                if dk.abs() > OPT_TOL {
                    return f64::NEG_INFINITY;
                }
                continue;
            }
            bound += dk * val;
        }
        bound
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.z[j];
        let tol = FEAS_TOL * (1.0 + v.abs().min(1e6));
        if v < self.lo[j] - tol {
            self.lo[j] - v
        } else if v > self.hi[j] + tol {
            v - self.hi[j]
        } else {
            0.0
        }
    }

    /// Rebuilds the tableau, basic values and reduced costs from the
    /// original rows. Returns false if the basis matrix is singular.
    fn refactor(&mut self) -> bool {
        let n = self.n;
        let m = self.rows.len();
        self.since_refactor = 0;
        if m == 0 {
            return true;
        }
        // basic structurals are pinned by the nonbasic rows
        let bs: Vec<usize> = (0..n).filter(|&j| matches!(self.pos[j], Pos::Basic(_))).collect();
        let nr: Vec<usize> = self.nonbasic.iter().filter(|&&v| v >= n).map(|v| v - n).collect();
        let p = bs.len();
        if nr.len() != p {
            return false;
        }
        let mut col_of = vec![usize::MAX; n];
        for (b, &j) in bs.iter().enumerate() {
            col_of[j] = b;
        }
        // expr[b] = coefficients of basic structural bs[b] over nonbasic positions
        let mut expr = vec![vec![0.0; n]; p];
        if p > 0 {
            let mut mat: DMatrix<f64> = DMatrix::zeros(p, p);
            for (a, &r) in nr.iter().enumerate() {
                for &(j, c) in &self.rows[r].coefs {
                    if col_of[j] != usize::MAX {
                        mat[(a, col_of[j])] += c;
                    }
                }
            }
            let Some(inv) = mat.try_inverse() else { return false };
            if inv.iter().any(|v| !v.is_finite()) {
                return false;
            }
            // x_BS = inv (y_NR - A[NR, NS] x_NS)
            for (a, &r) in nr.iter().enumerate() {
                let Pos::Nonbasic(ky) = self.pos[n + r] else { unreachable!() };
                let mut rest = vec![0.0; n];
                rest[ky] = 1.0;
                for &(j, c) in &self.rows[r].coefs {
                    if let Pos::Nonbasic(k) = self.pos[j] {
                        rest[k] -= c;
                    }
                }
                for (b, e) in expr.iter_mut().enumerate() {
                    let w = inv[(b, a)];
                    if w != 0.0 {
                        for (v, t) in e.iter_mut().zip(&rest) {
                            *v += w * t;
                        }
                    }
                }
            }
        }
        let mut tab = vec![0.0; self.basic.len() * n];
        for (i, &v) in self.basic.iter().enumerate() {
            let out = &mut tab[i * n..(i + 1) * n];
            if v < n {
                out.copy_from_slice(&expr[col_of[v]]);
                continue;
            }
            for &(j, c) in &self.rows[v - n].coefs {
                match self.pos[j] {
                    Pos::Nonbasic(k) => out[k] += c,
                    Pos::Basic(_) => {
                        for (o, t) in out.iter_mut().zip(&expr[col_of[j]]) {
                            *o += c * t;
                        }
                    }
                }
            }
        }
        if tab.iter().any(|v| !v.is_finite()) {
            return false;
        }
        self.tab = tab;
        self.recompute_duals();
        self.recompute_values();
        true
    }

    fn recompute_values(&mut self) {
        let n = self.n;
        for i in 0..self.basic.len() {
            let v: f64 = self.tab[i * n..(i + 1) * n].iter().zip(&self.nonbasic).map(|(t, &j)| t * self.z[j]).sum();
            self.z[self.basic[i]] = v;
        }
    }

    fn recompute_duals(&mut self) {
        let n = self.n;
        for (k, &v) in self.nonbasic.iter().enumerate() {
            self.d[k] = if v < n { self.cost[v] } else { 0.0 };
        }
        for (i, &b) in self.basic.iter().enumerate() {
            if b < n && self.cost[b] != 0.0 {
                let cb = self.cost[b];
                for (dk, t) in self.d.iter_mut().zip(&self.tab[i * n..(i + 1) * n]) {
                    *dk += cb * t;
                }
            }
        }
        // small dual infeasibilities from round-off: move to the right bound
        for k in 0..n {
            let v = self.nonbasic[k];
            if !self.at_upper[v] && self.d[k] < -OPT_TOL && self.hi[v].is_finite() {
                self.at_upper[v] = true;
                self.z[v] = self.hi[v];
            } else if self.at_upper[v] && self.d[k] > OPT_TOL && self.lo[v].is_finite() {
                self.at_upper[v] = false;
                self.z[v] = self.lo[v];
            }
        }
    }

    /// Exchanges basic row `r` with nonbasic position `q`.
    fn pivot(&mut self, r: usize, q: usize) {
        let n = self.n;
        let piv = self.tab[r * n + q];
        let mut prow: Vec<f64> = self.tab[r * n..(r + 1) * n].iter().map(|t| -t / piv).collect();
        prow[q] = 1.0 / piv;
        let nz: Vec<usize> = (0..n).filter(|&k| prow[k] != 0.0).collect();
        for i in 0..self.basic.len() {
            if i == r {
                continue;
            }
            let row = &mut self.tab[i * n..(i + 1) * n];
            let f = row[q];
            if f != 0.0 {
                row[q] = 0.0;
                for &k in &nz {
                    row[k] += f * prow[k];
                }
            }
        }
        let dq = self.d[q];
        if dq != 0.0 {
            self.d[q] = 0.0;
            for &k in &nz {
                self.d[k] += dq * prow[k];
            }
        }
        self.tab[r * n..(r + 1) * n].copy_from_slice(&prow);
        let leaving = self.basic[r];
        let entering = self.nonbasic[q];
        self.basic[r] = entering;
        self.nonbasic[q] = leaving;
        self.pos[entering] = Pos::Basic(r);
        self.pos[leaving] = Pos::Nonbasic(q);
    }

    fn eligible(&self, k: usize, t: f64, dir: f64) -> Option<f64> {
        let alpha = t * dir;
        if alpha.abs() < ELIGIBLE_TOL {
            return None;
        }
        let v = self.nonbasic[k];
        if self.lo[v] == self.hi[v] {
            return None;
        }
        // at lower the variable may only grow, at upper only shrink
        if (!self.at_upper[v] && alpha > 0.0) || (self.at_upper[v] && alpha < 0.0) {
            Some(alpha)
        } else {
            None
        }
    }

    /// Runs dual simplex iterations until optimal, infeasible or stalled.
    pub fn solve(&mut self) -> LpStatus {
        let n = self.n;
        let cap = if self.max_iterations > 0 {
            self.max_iterations
        } else {
            20 * (n + self.rows.len()) + 2000
        };
        let mut iters = 0;
        let mut stall = 0;
        let mut last_obj = f64::NEG_INFINITY;
        let mut verified = false;
        loop {
            if self.since_refactor >= REFACTOR_EVERY && !self.refactor() {
                return LpStatus::Stalled;
            }
            let bland = stall >= STALL_LIMIT;
            // leaving row
            let mut r = usize::MAX;
            let mut worst = 0.0;
            for (i, &b) in self.basic.iter().enumerate() {
                let inf = self.infeasibility(b);
                if inf > 0.0 {
                    if bland {
                        if r == usize::MAX || b < self.basic[r] {
                            r = i;
                        }
                    } else if inf > worst {
                        worst = inf;
                        r = i;
                    }
                }
            }
            if r == usize::MAX {
                if self.since_refactor > 0 && !verified {
                    verified = true;
                    if !self.refactor() {
                        return LpStatus::Stalled;
                    }
                    continue;
                }
                return LpStatus::Optimal;
            }
            if iters >= cap {
                return LpStatus::Stalled;
            }
            verified = false;
            let leaving = self.basic[r];
            let to_lower = self.z[leaving] < self.lo[leaving];
            let dir = if to_lower { 1.0 } else { -1.0 };

            // Harris ratio test
            let row = self.trow(r);
            let mut theta_max = f64::INFINITY;
            for (k, &t) in row.iter().enumerate() {
                let Some(alpha) = self.eligible(k, t, dir) else { continue };
                let ratio = (self.d[k].abs() + OPT_TOL) / alpha.abs();
                if ratio < theta_max {
                    theta_max = ratio;
                }
            }
            if !theta_max.is_finite() {
                if self.since_refactor > 0 && self.refactor() {
                    continue;
                }
                return LpStatus::Infeasible;
            }
            let mut q = usize::MAX;
            let mut best = 0.0;
            for (k, &t) in row.iter().enumerate() {
                let Some(alpha) = self.eligible(k, t, dir) else { continue };
                if self.d[k].abs() / alpha.abs() <= theta_max {
                    let better = if bland {
                        q == usize::MAX || self.nonbasic[k] < self.nonbasic[q]
                    } else {
                        alpha.abs() > best
                    };
                    if better {
                        best = alpha.abs();
                        q = k;
                    }
                }
            }
            if q == usize::MAX || best < PIVOT_TOL {
                return LpStatus::Stalled;
            }

            // primal update: leaving variable goes to its violated bound
            let target = if to_lower { self.lo[leaving] } else { self.hi[leaving] };
            let step = (target - self.z[leaving]) / self.tab[r * n + q];
            for (i, &b) in self.basic.iter().enumerate() {
                let t = self.tab[i * n + q];
                if t != 0.0 {
                    self.z[b] += t * step;
                }
            }
            let entering = self.nonbasic[q];
            self.z[entering] += step;
            self.z[leaving] = target;
            self.at_upper[leaving] = !to_lower;

            self.pivot(r, q);
            // keep reduced costs on the right side after Harris steps
            for k in 0..n {
                let up = self.at_upper[self.nonbasic[k]];
                if (!up && self.d[k] < 0.0) || (up && self.d[k] > 0.0) {
                    self.d[k] = 0.0;
                }
            }
            iters += 1;
            self.iterations += 1;
            self.since_refactor += 1;
            let obj = self.dual_bound();
            if obj > last_obj + 1e-12 * (1.0 + obj.abs()) {
                last_obj = obj;
                stall = 0;
            } else {
                stall += 1;
            }
        }
    }

    /// Largest violation of any variable bound or row by the current point.
    pub fn max_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.n {
            worst = worst.max(self.lo[j] - self.z[j]).max(self.z[j] - self.hi[j]);
        }
        for row in &self.rows {
            let a: f64 = row.coefs.iter().map(|&(j, c)| c * self.z[j]).sum();
            worst = worst.max(row.lower - a).max(a - row.upper);
        }
        worst
    }
}

/// One-shot solve of `lp`.
pub fn lp_solve(lp: &LinearProgram) -> LpSolution {
    let mut s = DualSimplex::new(lp);
    let status = s.solve();
    LpSolution { status, x: s.x().to_vec(), objective: s.objective() }
}
