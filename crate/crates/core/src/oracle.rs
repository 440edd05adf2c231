//! Reference solvers for testing: subset enumeration, the complete compact
//! LP with every cut materialized, and a direct evaluation of the subproblem
//! optimum. None of these go through the separation code.

use thiserror::Error;

use crate::instance::{Dist, Instance, Preprocessed};
use crate::simplex::{lp_solve, CutRow, LpError, LpModel, LpStatus};

/// Largest number of subsets `enumerate_opt` will visit.
pub const MAX_SUBSETS: u128 = 10_000_000;
/// Largest number of rows `full_f4_lp_value` will build.
pub const MAX_F4_ROWS: usize = 200_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("C({m}, {p}) = {count} subsets exceeds the enumeration limit {MAX_SUBSETS}")]
    TooManySubsets { m: usize, p: usize, count: u128 },
    #[error("{rows} rows exceed the LP size limit {MAX_F4_ROWS}")]
    TooManyRows { rows: usize },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("reference LP is infeasible")]
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    pub value: Dist,
    /// Lexicographically first optimal open set.
    pub open: Vec<usize>,
    /// Number of optimal open sets.
    pub count: u64,
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c > u128::MAX / (n as u128 + 1) {
            return u128::MAX;
        }
    }
    c
}

/// Exact optimum by visiting every `p`-subset in lexicographic order,
/// keeping one nearest-distance vector per depth.
pub fn enumerate_opt(inst: &Instance) -> Result<OracleResult, OracleError> {
    let (n, m, p) = (inst.n_clients, inst.n_sites, inst.p);
    let count = binomial(m, p);
    if count > MAX_SUBSETS {
        return Err(OracleError::TooManySubsets { m, p, count });
    }
    let mut levels = vec![vec![Dist::MAX; n]; p + 1];
    let mut pick = vec![0usize; p];
    let mut best = OracleResult {
        value: Dist::MAX,
        open: Vec::new(),
        count: 0,
    };
    // depth-first: pick[t] ranges over [pick[t-1] + 1, m - p + t]
    let mut t = 0;
    pick[0] = 0;
    loop {
        if pick[t] > m - p + t {
            if t == 0 {
                break;
            }
            t -= 1;
            pick[t] += 1;
            continue;
        }
        let j = pick[t];
        let (lo, hi) = levels.split_at_mut(t + 1);
        let (prev, next) = (&lo[t], &mut hi[0]);
        for i in 0..n {
            next[i] = prev[i].min(inst.d(i, j));
        }
        if t + 1 == p {
            let v: Dist = next.iter().sum();
            if v < best.value {
                best = OracleResult {
                    value: v,
                    open: pick.clone(),
                    count: 1,
                };
            } else if v == best.value {
                best.count += 1;
            }
            pick[t] += 1;
        } else {
            pick[t + 1] = j + 1;
            t += 1;
        }
    }
    Ok(best)
}

fn sorted_distinct(row: &[Dist]) -> Vec<Dist> {
    let mut v = row.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Optimal value of the compact formulation's LP relaxation with all rows
/// `theta_i >= D[k+1] - sum_{d_ij <= D[k]} (D[k+1] - d_ij) y_j`, k = 0..K_i - 1,
/// where the k = 0 row reads `theta_i >= D[1]`.
pub fn full_f4_lp_value(inst: &Instance, _prep: &Preprocessed) -> Result<f64, OracleError> {
    let (n, m) = (inst.n_clients, inst.n_sites);
    let levels: Vec<Vec<Dist>> = (0..n).map(|i| sorted_distinct(inst.row(i))).collect();
    let rows: usize = levels.iter().map(Vec::len).sum();
    if rows > MAX_F4_ROWS {
        return Err(OracleError::TooManyRows { rows });
    }
    let mut model = LpModel::new(m, n, inst.p);
    for (i, d) in levels.iter().enumerate() {
        let row = inst.row(i);
        model.add_row(CutRow {
            client: i,
            rhs: d[0] as f64,
            coeffs: Vec::new(),
        })?;
        for k in 1..d.len() {
            let reach = d[k];
            let coeffs = (0..m)
                .filter(|&j| row[j] < reach)
                .map(|j| (j as u32, (reach - row[j]) as f64))
                .collect();
            model.add_row(CutRow {
                client: i,
                rhs: reach as f64,
                coeffs,
            })?;
        }
    }
    let sol = lp_solve(&model, None)?;
    if sol.status != LpStatus::Optimal {
        return Err(OracleError::Infeasible);
    }
    Ok(sol.objective)
}

/// `D[1] + sum_k (D[k+1] - D[k]) * max(0, 1 - sum_{d_ij <= D[k]} y_j)`, evaluated naively.
pub fn sp_lp_value(i: usize, y: &[f64], prep: &Preprocessed) -> f64 {
    let d = prep.distinct(i);
    let row = prep.row(i);
    let mut value = d[0] as f64;
    for k in 0..d.len() - 1 {
        let mass: f64 = (0..y.len()).filter(|&j| row[j] <= d[k]).map(|j| y[j]).sum();
        value += (d[k + 1] - d[k]) as f64 * (1.0 - mass).max(0.0);
    }
    value
}
