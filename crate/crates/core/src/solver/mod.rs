//! Spatial branch-and-bound for the encoded acquisition problem.
//!
//! Nodes carry an input box and a segment range per training point. The LP
//! relaxation works in the reduced space `(x, r, kx, mu, sigma)`: the
//! segment encoding enters through the convex hull of the kernel graph over
//! the node's distance range, the distance equalities through norm cuts and
//! coordinate secants, and the variance constraint through tangent cuts.

mod node;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::Instant;

use log::{debug, warn};

use crate::model::{Candidate, MiqpModel, FEASIBILITY_TOL};

pub use node::{branch, node_relaxation, Node, Relaxation, RelaxedPoint, EQUALITY_TOL};
use node::{branch_with, Context};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Relative gap at which the search stops.
    pub mip_gap: f64,
    /// Wall-clock cap in seconds.
    pub time_limit_s: f64,
    pub pool_size: usize,
    pub node_limit: usize,
    /// Cut rounds per node.
    pub cut_rounds: usize,
    /// Record one log entry every this many nodes (0 disables logging).
    pub log_every: usize,
    /// Accepted for reproducible configurations; the search draws no random numbers.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mip_gap: 0.5,
            time_limit_s: 5400.0,
            pool_size: 10,
            node_limit: 100_000,
            cut_rounds: 8,
            log_every: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    GapReached,
    TimeLimit,
    NodeLimit,
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::GapReached => "gap_reached",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::NodeLimit => "node_limit",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeLogEntry {
    pub id: usize,
    pub depth: usize,
    /// Bound of the node itself.
    pub node_bound: f64,
    /// Smallest bound over all open nodes at the time of logging.
    pub best_bound: f64,
    pub incumbent: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub incumbent: Option<Candidate>,
    /// Distinct solutions sorted by objective, best first.
    pub pool: Vec<Candidate>,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes_explored: usize,
    pub log: Vec<NodeLogEntry>,
}

impl SolveResult {
    pub fn objective(&self) -> Option<f64> {
        self.incumbent.as_ref().map(|c| c.objective)
    }
}

struct Open(Node);

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    // reversed so the max-heap pops the smallest bound, then the oldest node
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.bound.total_cmp(&self.0.bound).then_with(|| other.0.id.cmp(&self.0.id))
    }
}

/// Distinct solutions kept sorted by objective.
struct Pool {
    size: usize,
    items: Vec<Candidate>,
}

impl Pool {
    fn offer(&mut self, c: Candidate) {
        let dup = self.items.iter().position(|o| {
            o.x.iter().zip(&c.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) <= 1e-6
        });
        if let Some(k) = dup {
            if c.objective < self.items[k].objective {
                self.items.remove(k);
            } else {
                return;
            }
        }
        let at = self.items.partition_point(|o| o.objective <= c.objective);
        self.items.insert(at, c);
        self.items.truncate(self.size);
    }

    fn best(&self) -> f64 {
        self.items.first().map_or(f64::INFINITY, |c| c.objective)
    }
}

fn gap_of(incumbent: f64, bound: f64) -> f64 {
    if !incumbent.is_finite() {
        return f64::INFINITY;
    }
    ((incumbent - bound) / incumbent.abs().max(1e-9)).max(0.0)
}

/// Runs branch and bound from the given warm starts; infeasible warm starts
/// are dropped.
pub fn solve(model: &MiqpModel, config: &SolverConfig, warm_starts: &[Candidate]) -> SolveResult {
    let start = Instant::now();
    let mut pool = Pool { size: config.pool_size.max(1), items: Vec::new() };
    for c in warm_starts {
        let v = model.max_violation(&c.values);
        if v <= FEASIBILITY_TOL {
            pool.offer(c.clone());
        } else {
            warn!("dropping warm start violating the model by {v:e}");
        }
    }
    let finish = |status, pool: Pool, best_bound: f64, nodes, log| {
        let inc = pool.best();
        let best_bound = if inc.is_finite() { best_bound.min(inc) } else { best_bound };
        SolveResult {
            status,
            incumbent: pool.items.first().cloned(),
            gap: gap_of(inc, best_bound),
            pool: pool.items,
            best_bound,
            nodes_explored: nodes,
            log,
        }
    };
    if config.time_limit_s <= 0.0 {
        return finish(SolveStatus::TimeLimit, pool, f64::NEG_INFINITY, 0, Vec::new());
    }

    let ctx = Context::new(model, config.cut_rounds);
    let mut heap = BinaryHeap::new();
    heap.push(Open(Node::root(model)));
    let mut next_id = 0;
    let mut nodes = 0;
    let mut lost_bound = f64::INFINITY;
    let mut log = Vec::new();
    let mut retried: Option<usize> = None;

    let status = loop {
        let Some(Open(node)) = heap.pop() else {
            break if pool.items.is_empty() && !lost_bound.is_finite() {
                SolveStatus::Infeasible
            } else {
                SolveStatus::Optimal
            };
        };
        let inc = pool.best();
        let best_bound = node.bound.min(lost_bound);
        let abs_tol = 1e-9 * (1.0 + inc.abs());
        if node.bound >= inc - abs_tol {
            // every open node is dominated
            heap.clear();
            continue;
        }
        if gap_of(inc, best_bound) <= config.mip_gap.max(1e-6) && inc.is_finite() {
            heap.push(Open(node));
            break SolveStatus::GapReached;
        }
        if nodes >= config.node_limit {
            heap.push(Open(node));
            break SolveStatus::NodeLimit;
        }
        if start.elapsed().as_secs_f64() >= config.time_limit_s {
            heap.push(Open(node));
            break SolveStatus::TimeLimit;
        }
        nodes += 1;

        let relaxed = ctx.relax(&node, inc);
        let (bound, point, tight, active) = match relaxed {
            Relaxation::Infeasible => continue,
            Relaxation::Failed => {
                if retried != Some(node.id) {
                    retried = Some(node.id);
                    let mut again = node.clone();
                    for (lo, hi) in again.lower.iter_mut().zip(again.upper.iter_mut()) {
                        *lo -= 1e-9;
                        *hi += 1e-9;
                    }
                    ctx_clamp(model, &mut again);
                    heap.push(Open(again));
                } else {
                    warn!("node {} fathomed after repeated LP failure", node.id);
                    lost_bound = lost_bound.min(node.bound);
                }
                continue;
            }
            Relaxation::Bounded { bound, point, node, active } => (bound, point, node, active),
        };
        let mut tight = tight;
        tight.bound = bound.max(node.bound);

        if config.log_every > 0 && nodes % config.log_every == 0 {
            let open_min = heap.peek().map_or(f64::INFINITY, |o| o.0.bound);
            let bb = tight.bound.min(open_min).min(lost_bound).min(pool.best());
            log.push(NodeLogEntry {
                id: node.id,
                depth: node.depth,
                node_bound: tight.bound,
                best_bound: bb,
                incumbent: pool.best(),
                gap: gap_of(pool.best(), bb),
            });
        }

        let Some(point) = point else {
            // no trustworthy point: split the widest coordinate
            if tight.max_width() > 1e-9 {
                let (a, b) = bisect_widest(&tight, &mut next_id, active);
                heap.push(Open(a));
                heap.push(Open(b));
            } else {
                lost_bound = lost_bound.min(tight.bound);
            }
            continue;
        };

        // primal heuristic at the relaxed input point
        let mut solved = false;
        if let Ok(c) = model.evaluate_candidate(&point.x) {
            if model.max_violation(&c.values) <= FEASIBILITY_TOL {
                solved = c.objective <= tight.bound + 1e-6 * (1.0 + tight.bound.abs());
                pool.offer(c);
            }
        }
        let inc = pool.best();
        if tight.bound >= inc - 1e-9 * (1.0 + inc.abs()) || solved {
            continue;
        }
        if tight.max_width() <= 1e-9 {
            // box collapsed: the heuristic already evaluated its only point
            continue;
        }
        tight.cuts = Arc::new(active);
        match branch_with(&ctx, &tight, &point, &mut next_id) {
            Ok((a, b)) => {
                heap.push(Open(a));
                heap.push(Open(b));
            }
            Err(_) => {
                let (a, b) = bisect_widest(&tight, &mut next_id, tight.cuts.to_vec());
                heap.push(Open(a));
                heap.push(Open(b));
            }
        }
    };
    let open_min = heap.iter().map(|o| o.0.bound).fold(f64::INFINITY, f64::min);
    let best_bound = open_min.min(lost_bound);
    debug!("solve finished: {} after {nodes} nodes", status.as_str());
    let status = if status == SolveStatus::Optimal && pool.items.is_empty() {
        SolveStatus::Infeasible
    } else {
        status
    };
    finish(status, pool, best_bound, nodes, log)
}

fn ctx_clamp(model: &MiqpModel, node: &mut Node) {
    let lay = model.layout;
    for d in 0..lay.dim {
        node.lower[d] = node.lower[d].max(model.variables[lay.x(d)].lower);
        node.upper[d] = node.upper[d].min(model.variables[lay.x(d)].upper);
    }
}

fn bisect_widest(node: &Node, next_id: &mut usize, cuts: Vec<crate::lp::LpRow>) -> (Node, Node) {
    let d = (0..node.lower.len())
        .max_by(|&u, &v| (node.upper[u] - node.lower[u]).total_cmp(&(node.upper[v] - node.lower[v])))
        .expect("dim >= 1");
    let mid = 0.5 * (node.lower[d] + node.upper[d]);
    let cuts = Arc::new(cuts);
    let mut a = node.clone();
    *next_id += 1;
    a.id = *next_id;
    a.depth += 1;
    a.upper[d] = mid;
    a.cuts = cuts.clone();
    let mut b = node.clone();
    *next_id += 1;
    b.id = *next_id;
    b.depth += 1;
    b.lower[d] = mid;
    b.cuts = cuts;
    (a, b)
}
