//! Two-phase solve: a cutting-plane loop on the master LP relaxation, then a
//! best-bound branch-and-cut over the site variables with cuts separated
//! lazily at integer points.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benders::{cuts_at, separate, BendersError};
use crate::heuristics::{initial_solution, round_solution, InitialMode, IntegerSolution};
use crate::instance::{Dist, Instance, InstanceError, Preprocessed};
use crate::master::{reduced_cost_fixing, CutPool, MasterError, MasterProblem, Phase1Result};
use crate::simplex::{Basis, LpError, LpStatus};

/// Relative tolerance of the root loop stopping test.
pub const PHASE1_REL_TOL: f64 = 1e-9;
/// A node is pruned when its bound reaches `UB - 1 + PRUNE_EPS`.
pub const PRUNE_EPS: f64 = 1e-6;
/// Distance from 0/1 under which an LP value counts as integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Params {
    /// Wall-clock limit in seconds.
    pub time_limit: Option<f64>,
    pub seed: u64,
    pub initial: InitialMode,
    pub rounding: bool,
    pub reduction: bool,
    pub rc_fixing: bool,
    /// Separate fractional node solutions too.
    pub phase2_frac_sep: bool,
    /// Root-loop round cap; `None` means `10 * N`.
    pub phase1_max_rounds: Option<usize>,
    pub max_open_nodes: usize,
    pub max_pool_cuts: usize,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            time_limit: Some(36_000.0),
            seed: 0,
            initial: InitialMode::Heuristic,
            rounding: true,
            reduction: true,
            rc_fixing: true,
            phase2_frac_sep: false,
            phase1_max_rounds: None,
            max_open_nodes: 5_000_000,
            max_pool_cuts: 50_000_000,
        }
    }
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Benders(#[from] BendersError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("abnormal termination ({reason}); bounds [{lb}, {ub}]")]
    Abnormal { reason: String, lb: f64, ub: Dist, best: IntegerSolution },
}

impl From<MasterError> for DriverError {
    fn from(e: MasterError) -> Self {
        match e {
            MasterError::Lp(e) => DriverError::Lp(e),
            other => DriverError::Lp(LpError::Internal(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    /// Stopped by the time limit with a feasible incumbent.
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub name: String,
    pub n_clients: usize,
    pub n_sites: usize,
    pub p: usize,
    pub status: SolveStatus,
    /// Incumbent value (the upper bound).
    pub value: Dist,
    pub open: Vec<usize>,
    pub lb: f64,
    /// `(UB - LB) / UB`.
    pub gap: f64,
    pub lb1: f64,
    pub ub1: Dist,
    /// Separation rounds over both phases.
    pub iterations: usize,
    pub phase1_iterations: usize,
    pub nodes: usize,
    pub t1: f64,
    pub ttot: f64,
    pub cuts_in_pool: usize,
    pub cuts_removed: usize,
    pub fixed_to_zero: usize,
    pub fixed_to_one: usize,
}

/// Elapsed time and the tab-separated progress log.
#[derive(Debug, Clone, Copy)]
pub struct Clock {
    start: Instant,
    limit: Option<f64>,
}

impl Clock {
    pub fn new(limit: Option<f64>) -> Self {
        Clock {
            start: Instant::now(),
            limit,
        }
    }

    pub fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    pub fn expired(&self) -> bool {
        self.limit.is_some_and(|l| self.elapsed() >= l)
    }

    /// `phase iter LB UB gap nodes elapsed`, tab separated.
    pub fn progress(&self, phase: u8, iter: usize, lb: f64, ub: f64, nodes: usize) {
        info!(
            target: "pmedian::progress",
            "{phase}\t{iter}\t{lb:.6}\t{ub}\t{:.6}\t{nodes}\t{:.3}",
            gap(lb, ub),
            self.elapsed()
        );
    }
}

pub fn gap(lb: f64, ub: f64) -> f64 {
    if ub.abs() < f64::EPSILON {
        if lb >= ub { 0.0 } else { f64::INFINITY }
    } else {
        ((ub - lb) / ub).max(0.0)
    }
}

/// The integer objective makes any bound above `UB - 1` conclusive.
fn closes(lb: f64, ub: Dist) -> bool {
    lb >= ub as f64 - 1.0 + PRUNE_EPS
}

/// Root cutting-plane loop. Seeds `master` with the cuts of `initial`, then
/// alternates LP solves and separation until the LP bound meets the best
/// subproblem bound. Stops early (returning the current state) when the
/// clock expires.
pub fn phase1(
    inst: &Instance,
    prep: &Preprocessed,
    initial: &IntegerSolution,
    params: &Params,
    master: &mut MasterProblem,
    clock: &Clock,
) -> Result<Phase1Result, DriverError> {
    let m = inst.n_sites;
    master.add_cuts(cuts_at(prep, &initial.indicator(m))?)?;
    let cap = params.phase1_max_rounds.unwrap_or(10 * inst.n_clients).max(1);
    let mut ub_mp = f64::INFINITY;
    let mut best = initial.clone();
    let mut rounds = 0;
    loop {
        let sol = master.solve()?;
        if sol.status != LpStatus::Optimal {
            return Err(LpError::Internal("master relaxation reported infeasible".into()).into());
        }
        let lb = sol.objective;
        let sep = separate(prep, &sol.y, &sol.theta)?;
        rounds += 1;
        ub_mp = ub_mp.min(sep.upper_bound);
        if params.rounding {
            let r = round_solution(&sol.y, inst, prep);
            if r.value < best.value {
                best = r;
            }
        }
        clock.progress(1, rounds, lb, best.value as f64, 0);
        let converged = lb >= ub_mp - PHASE1_REL_TOL * ub_mp.abs();
        let added = if converged || sep.cuts.is_empty() {
            0
        } else {
            master.add_cuts(sep.cuts)?
        };
        if added == 0 || clock.expired() {
            let khat = master.saturation(&sol);
            return Ok(Phase1Result {
                lb1: lb,
                ub1: best.value,
                y1: best,
                lp: sol,
                khat,
                iterations: rounds,
                seconds: clock.elapsed(),
            });
        }
        if rounds >= cap {
            return Err(DriverError::Abnormal {
                reason: format!("root loop hit its cap of {cap} rounds"),
                lb,
                ub: best.value,
                best,
            });
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    fixings: Vec<(u32, u8)>,
    bound: f64,
    depth: usize,
    seq: u64,
    basis: Option<Arc<Basis>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    /// Max-heap order: smallest bound, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Outcome of the tree search.
#[derive(Debug, Clone)]
pub struct Phase2Outcome {
    pub status: SolveStatus,
    pub best: IntegerSolution,
    pub lb: f64,
    pub nodes: usize,
    pub iterations: usize,
}

/// Best-bound branch-and-cut on the current master. `best` is the incumbent
/// and `root_bound` a valid lower bound for the whole tree.
pub fn phase2(
    inst: &Instance,
    prep: &Preprocessed,
    master: &mut MasterProblem,
    mut best: IntegerSolution,
    root_bound: f64,
    params: &Params,
    clock: &Clock,
) -> Result<Phase2Outcome, DriverError> {
    let m = inst.n_sites;
    let base: Vec<(f64, f64)> = (0..m).map(|j| master.model().y_bounds(j)).collect();
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node {
        fixings: Vec::new(),
        bound: root_bound,
        depth: 0,
        seq,
        basis: None,
    });
    let mut nodes = 0;
    let mut iterations = 0;
    let mut last_log = 0.0;
    let mut lb = root_bound;

    while let Some(node) = heap.peek() {
        lb = lb.max(node.bound);
        if closes(node.bound, best.value) {
            heap.clear();
            break;
        }
        if clock.expired() {
            return Ok(Phase2Outcome {
                status: SolveStatus::Feasible,
                best,
                lb,
                nodes,
                iterations,
            });
        }
        if heap.len() > params.max_open_nodes || master.pool().len() > params.max_pool_cuts {
            return Err(DriverError::Abnormal {
                reason: format!(
                    "memory guard: {} open nodes, {} pooled cuts",
                    heap.len(),
                    master.pool().len()
                ),
                lb,
                ub: best.value,
                best,
            });
        }
        let node = heap.pop().expect("peeked");
        nodes += 1;

        let mut consistent = true;
        {
            let lp = master.lp_mut();
            for (j, &(lo, up)) in base.iter().enumerate() {
                if lp.model().y_bounds(j) != (lo, up) {
                    lp.set_y_bounds(j, lo, up);
                }
            }
            for &(j, v) in &node.fixings {
                let j = j as usize;
                let v = f64::from(v);
                if v < base[j].0 || v > base[j].1 {
                    consistent = false;
                }
                lp.set_y_bounds(j, v, v);
            }
            if let Some(b) = &node.basis {
                if !lp.load_basis(b) {
                    lp.reset_basis();
                }
            }
        }
        if !consistent {
            continue;
        }

        let sol = loop {
            let sol = master.solve()?;
            if sol.status == LpStatus::Infeasible {
                break None;
            }
            let bound = sol.objective.max(node.bound);
            if closes(bound, best.value) {
                break None;
            }
            let integral = sol
                .y
                .iter()
                .all(|&v| v.min(1.0 - v) <= INTEGRALITY_TOL);
            if !(integral || params.phase2_frac_sep) {
                break Some(sol);
            }
            let sep = separate(prep, &sol.y, &sol.theta)?;
            iterations += 1;
            if integral {
                let cand = round_solution(&sol.y, inst, prep);
                if cand.value < best.value {
                    debug!("node {nodes}: new incumbent {}", cand.value);
                    best = cand;
                }
            }
            if !sep.cuts.is_empty() && master.add_cuts(sep.cuts)? > 0 {
                continue;
            }
            if integral {
                // theta matches every subproblem: the node optimum is this integer point
                break None;
            }
            break Some(sol);
        };
        let Some(sol) = sol else {
            continue;
        };

        let bound = sol.objective.max(node.bound);
        let (j, _) = sol
            .y
            .iter()
            .enumerate()
            .map(|(j, &v)| (j, v.min(1.0 - v)))
            .fold((usize::MAX, -1.0), |acc, (j, f)| if f > acc.1 { (j, f) } else { acc });
        let basis = Arc::new(sol.basis);
        for v in [1u8, 0] {
            seq += 1;
            let mut fixings = node.fixings.clone();
            fixings.push((j as u32, v));
            heap.push(Node {
                fixings,
                bound,
                depth: node.depth + 1,
                seq,
                basis: Some(Arc::clone(&basis)),
            });
        }
        if clock.elapsed() - last_log >= 1.0 {
            last_log = clock.elapsed();
            let open_lb = heap.peek().map_or(bound, |n| n.bound);
            clock.progress(2, iterations, lb.max(open_lb.min(best.value as f64)), best.value as f64, nodes);
        }
    }
    Ok(Phase2Outcome {
        status: SolveStatus::Optimal,
        lb: best.value as f64,
        best,
        nodes,
        iterations,
    })
}

/// Full pipeline: preprocessing, incumbent, root loop, reduction and fixing, tree search.
pub fn solve(inst: &Instance, params: &Params) -> Result<SolveResult, DriverError> {
    solve_keeping_cuts(inst, params).map(|(r, _)| r)
}

/// [`solve`], also returning every cut generated along the way.
pub fn solve_keeping_cuts(inst: &Instance, params: &Params) -> Result<(SolveResult, CutPool), DriverError> {
    inst.validate()?;
    let mut master = MasterProblem::new(inst.n_sites, inst.n_clients, inst.p);
    let r = run(inst, params, &mut master)?;
    Ok((r, master.pool().clone()))
}

fn run(inst: &Instance, params: &Params, master: &mut MasterProblem) -> Result<SolveResult, DriverError> {
    let clock = Clock::new(params.time_limit);
    let prep = Preprocessed::new(inst);
    let initial = initial_solution(inst, &prep, params.initial, params.seed);
    debug!("initial incumbent {} after {:.3}s", initial.value, clock.elapsed());
    let p1 = phase1(inst, &prep, &initial, params, master, &clock)?;
    let t1 = clock.elapsed();

    let mut result = SolveResult {
        name: inst.name.clone(),
        n_clients: inst.n_clients,
        n_sites: inst.n_sites,
        p: inst.p,
        status: SolveStatus::Optimal,
        value: p1.ub1,
        open: p1.y1.open.clone(),
        lb: p1.lb1,
        gap: 0.0,
        lb1: p1.lb1,
        ub1: p1.ub1,
        iterations: p1.iterations,
        phase1_iterations: p1.iterations,
        nodes: 0,
        t1,
        ttot: t1,
        cuts_in_pool: master.pool().len(),
        cuts_removed: 0,
        fixed_to_zero: 0,
        fixed_to_one: 0,
    };
    let finish = |mut r: SolveResult, clock: &Clock| {
        if r.status == SolveStatus::Optimal {
            r.lb = r.value as f64;
        }
        r.gap = gap(r.lb, r.value as f64);
        r.ttot = clock.elapsed();
        clock.progress(2, r.iterations, r.lb, r.value as f64, r.nodes);
        r
    };

    if closes(p1.lb1, p1.ub1) {
        return Ok(finish(result, &clock));
    }
    if clock.expired() {
        result.status = SolveStatus::Feasible;
        return Ok(finish(result, &clock));
    }
    if params.rc_fixing {
        match reduced_cost_fixing(p1.lb1, p1.ub1 as f64, &p1.lp, master.model()) {
            Ok(fix) => {
                result.fixed_to_zero = fix.to_zero.len();
                result.fixed_to_one = fix.to_one.len();
                debug!("reduced-cost fixing: {} to 0, {} to 1", fix.to_zero.len(), fix.to_one.len());
                master.apply_fixing(&fix);
            }
            Err(MasterError::FixingProvesOptimal) => return Ok(finish(result, &clock)),
            Err(e) => return Err(e.into()),
        }
    }
    if params.reduction {
        result.cuts_removed = master.reduce_constraints(&p1.lp);
        debug!("constraint reduction removed {} cuts", result.cuts_removed);
    }

    let out = phase2(inst, &prep, master, p1.y1.clone(), p1.lb1, params, &clock)?;
    result.status = out.status;
    result.value = out.best.value;
    result.open = out.best.open;
    result.lb = out.lb.max(p1.lb1);
    result.nodes = out.nodes;
    result.iterations += out.iterations;
    result.cuts_in_pool = master.pool().len();
    Ok(finish(result, &clock))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> Instance {
        Instance::from_rows("path", &[vec![0, 4, 7], vec![4, 0, 3], vec![7, 3, 0]], 1).unwrap()
    }

    #[test]
    fn path_is_solved_at_the_root() {
        let r = solve(&path(), &Params::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!((r.value, r.open.clone()), (7, vec![1]));
        assert!((r.lb1 - 7.0).abs() < 1e-9);
        assert_eq!(r.ub1, 7);
        assert_eq!(r.gap, 0.0);
    }

    #[test]
    fn all_sites_open() {
        let inst = path().with_p(3).unwrap();
        let r = solve(&inst, &Params::default()).unwrap();
        assert_eq!(r.value, 0);
        assert_eq!(r.nodes, 0);
        assert_eq!(r.phase1_iterations, 1);
    }

    #[test]
    fn node_order() {
        let mk = |bound, depth, seq| Node {
            fixings: Vec::new(),
            bound,
            depth,
            seq,
            basis: None,
        };
        let mut heap = BinaryHeap::from(vec![mk(2.0, 5, 0), mk(1.0, 1, 1), mk(1.0, 3, 2), mk(1.0, 3, 3)]);
        let order: Vec<u64> = std::iter::from_fn(|| heap.pop().map(|n| n.seq)).collect();
        assert_eq!(order, vec![2, 3, 1, 0]);
    }
}
