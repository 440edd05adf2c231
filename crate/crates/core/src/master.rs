//! Master problem state: the cut pool, the LP holding the active cuts,
//! constraint reduction after the root cutting-plane loop and reduced-cost
//! fixing.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::benders::BendersCut;
use crate::heuristics::IntegerSolution;
use crate::instance::Dist;
use crate::simplex::{CutRow, LpError, LpSolution, LpStatus, Simplex, LpModel, VarStatus};

/// A cut whose slack is at most this is saturated.
pub const SATURATION_TOL: f64 = 1e-6;
/// Safety margin in the reduced-cost fixing test.
pub const RC_FIX_MARGIN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MasterError {
    #[error(transparent)]
    Lp(#[from] LpError),
    /// The fixings leave no assignment better than the incumbent.
    #[error("reduced-cost fixing is infeasible: the incumbent is optimal")]
    FixingProvesOptimal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub cut: BendersCut,
    pub active: bool,
}

/// Every cut ever generated, at most one per `(client, ktilde)`.
#[derive(Debug, Clone, Default)]
pub struct CutPool {
    entries: Vec<PoolEntry>,
    by_client: Vec<BTreeMap<usize, usize>>,
}

impl CutPool {
    pub fn new(n_clients: usize) -> Self {
        CutPool {
            entries: Vec::new(),
            by_client: vec![BTreeMap::new(); n_clients],
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.entries.iter().filter(|e| e.active).count()
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn get(&self, client: usize, ktilde: usize) -> Option<&PoolEntry> {
        self.by_client[client].get(&ktilde).map(|&e| &self.entries[e])
    }

    /// One line per cut: client, ktilde, rhs, support size, active flag.
    pub fn dump(&self) -> String {
        let mut out = String::from("client\tktilde\trhs\tsupport\tactive\n");
        for map in &self.by_client {
            for &e in map.values() {
                let PoolEntry { cut, active } = &self.entries[e];
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}",
                    cut.client,
                    cut.ktilde,
                    cut.rhs,
                    cut.coeffs.len(),
                    u8::from(*active)
                );
            }
        }
        out
    }
}

pub fn cut_row(cut: &BendersCut) -> CutRow {
    CutRow {
        client: cut.client,
        rhs: cut.rhs as f64,
        coeffs: cut.coeffs.iter().map(|&(j, c)| (j, c as f64)).collect(),
    }
}

/// Root-loop output.
#[derive(Debug, Clone)]
pub struct Phase1Result {
    /// LP relaxation bound.
    pub lb1: f64,
    /// Best integer value found.
    pub ub1: Dist,
    pub y1: IntegerSolution,
    /// Final LP solution (fractional `y`, reduced costs, basis).
    pub lp: LpSolution,
    /// Per client, the largest `ktilde` among its cuts saturated by `lp`.
    pub khat: Vec<Option<usize>>,
    /// Separation rounds.
    pub iterations: usize,
    pub seconds: f64,
}

/// Sites fixed by reduced-cost analysis.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RcFixing {
    pub to_zero: Vec<usize>,
    pub to_one: Vec<usize>,
}

/// Cut pool plus the simplex engine holding the active cuts as rows.
#[derive(Debug, Clone)]
pub struct MasterProblem {
    pool: CutPool,
    lp: Simplex,
    /// Pool entry of every LP cut row, in row order.
    rows: Vec<usize>,
}

impl MasterProblem {
    pub fn new(n_sites: usize, n_clients: usize, p: usize) -> Self {
        MasterProblem {
            pool: CutPool::new(n_clients),
            lp: Simplex::new(LpModel::new(n_sites, n_clients, p)),
            rows: Vec::new(),
        }
    }

    pub fn pool(&self) -> &CutPool {
        &self.pool
    }

    pub fn lp(&self) -> &Simplex {
        &self.lp
    }

    pub fn lp_mut(&mut self) -> &mut Simplex {
        &mut self.lp
    }

    pub fn model(&self) -> &LpModel {
        self.lp.model()
    }

    /// Pool entry backing each LP cut row.
    pub fn row_entries(&self) -> &[usize] {
        &self.rows
    }

    /// Adds new cuts and reactivates pooled inactive ones. Cuts already
    /// active are skipped. Returns how many rows entered the LP.
    pub fn add_cuts<I>(&mut self, cuts: I) -> Result<usize, LpError>
    where
        I: IntoIterator<Item = BendersCut>,
    {
        let mut new_rows = Vec::new();
        for cut in cuts {
            let key = cut.ktilde;
            let client = cut.client;
            let e = match self.pool.by_client[client].get(&key) {
                Some(&e) if self.pool.entries[e].active => continue,
                Some(&e) => e,
                None => {
                    let e = self.pool.entries.len();
                    self.pool.entries.push(PoolEntry { cut, active: false });
                    self.pool.by_client[client].insert(key, e);
                    e
                }
            };
            self.pool.entries[e].active = true;
            new_rows.push(cut_row(&self.pool.entries[e].cut));
            self.rows.push(e);
        }
        self.lp.add_rows(new_rows)
    }

    pub fn solve(&mut self) -> Result<LpSolution, LpError> {
        self.lp.solve()
    }

    /// Largest `ktilde` per client among active cuts with slack at most
    /// [`SATURATION_TOL`] at `sol`.
    pub fn saturation(&self, sol: &LpSolution) -> Vec<Option<usize>> {
        let mut khat = vec![None; self.model().n_clients()];
        for (r, &e) in self.rows.iter().enumerate() {
            let cut = &self.pool.entries[e].cut;
            if self.lp.row_slack(r, &sol.y, &sol.theta) <= SATURATION_TOL {
                let k = &mut khat[cut.client];
                *k = Some(k.map_or(cut.ktilde, |v: usize| v.max(cut.ktilde)));
            }
        }
        khat
    }

    /// Deactivates, per client, every cut whose `ktilde` exceeds the largest
    /// saturated one. A client without saturated cuts keeps its lowest-`ktilde`
    /// cut. Returns the number of rows removed.
    pub fn reduce_constraints(&mut self, sol: &LpSolution) -> usize {
        let khat = self.saturation(sol);
        let n = self.model().n_clients();
        let mut lowest: Vec<Option<usize>> = vec![None; n];
        for &e in &self.rows {
            let c = &self.pool.entries[e].cut;
            let l = &mut lowest[c.client];
            *l = Some(l.map_or(c.ktilde, |v: usize| v.min(c.ktilde)));
        }
        let keep: Vec<bool> = self
            .rows
            .iter()
            .map(|&e| {
                let c = &self.pool.entries[e].cut;
                match khat[c.client] {
                    Some(k) => c.ktilde <= k,
                    None => Some(c.ktilde) == lowest[c.client],
                }
            })
            .collect();
        let removed = keep.iter().filter(|&&k| !k).count();
        if removed == 0 {
            return 0;
        }
        for (&e, &k) in self.rows.iter().zip(&keep) {
            if !k {
                self.pool.entries[e].active = false;
            }
        }
        let mut it = keep.iter();
        self.rows.retain(|_| *it.next().expect("same length"));
        self.lp.retain_rows(&keep);
        removed
    }

    /// Applies fixings as permanent bounds.
    pub fn apply_fixing(&mut self, fix: &RcFixing) {
        for &j in &fix.to_zero {
            self.lp.set_y_bounds(j, 0.0, 0.0);
        }
        for &j in &fix.to_one {
            self.lp.set_y_bounds(j, 1.0, 1.0);
        }
    }
}

/// Sites that cannot take the opposite value in any solution better than
/// `ub1`, judged from the reduced costs of the final root LP.
pub fn reduced_cost_fixing(lb1: f64, ub1: f64, sol: &LpSolution, model: &LpModel) -> Result<RcFixing, MasterError> {
    if sol.status != LpStatus::Optimal {
        return Err(MasterError::FixingProvesOptimal);
    }
    let mut fix = RcFixing::default();
    let m = model.n_sites();
    for j in 0..m {
        let (lo, up) = model.y_bounds(j);
        if lo == up {
            continue;
        }
        let rc = sol.reduced_costs_y[j];
        match sol.y_status[j] {
            VarStatus::AtLower if lb1 + rc > ub1 + RC_FIX_MARGIN => fix.to_zero.push(j),
            VarStatus::AtUpper if lb1 - rc > ub1 + RC_FIX_MARGIN => fix.to_one.push(j),
            _ => {}
        }
    }
    // with the fixings, can sum(y) = p still be met?
    let p = model.p();
    let (mut min_sum, mut max_sum) = (0.0, 0.0);
    for j in 0..m {
        let (mut lo, mut up) = model.y_bounds(j);
        if fix.to_zero.contains(&j) {
            up = 0.0;
        }
        if fix.to_one.contains(&j) {
            lo = 1.0;
        }
        min_sum += lo;
        max_sum += up;
    }
    if min_sum > p + 1e-9 || max_sum < p - 1e-9 {
        return Err(MasterError::FixingProvesOptimal);
    }
    Ok(fix)
}
