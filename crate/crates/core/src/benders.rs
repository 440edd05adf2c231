//! Closed-form Benders subproblem machinery.
//!
//! For a master solution `y` (fractional or binary) the subproblem of client
//! `i` is solved without an LP: scanning sites in nearest-first order gives
//! the index `ktilde` of the last distance level whose accumulated open mass
//! is still below one, and from it the optimal value, an optimal dual and the
//! optimality cut
//!
//! ```text
//! theta_i >= D[k+1] - sum_{j : d_ij <= D[k]} (D[k+1] - d_ij) * y_j      (k = ktilde >= 1)
//! theta_i >= D[1]                                                        (k = ktilde  = 0)
//! ```
//!
//! where `D` is client `i`'s sorted list of distinct distances written
//! 1-based. In code `D[k+1]` is `distinct(i)[ktilde]`.

use std::fmt;

use thiserror::Error;

use crate::instance::{Dist, Preprocessed};

/// Residuals `1 - sum(y)` at or below this count as zero.
pub const MASS_TOL: f64 = 1e-9;
/// Absolute part of the cut-violation threshold.
pub const VIOLATION_ABS: f64 = 1e-9;
/// Relative part (times the cut right-hand side) of the cut-violation threshold.
pub const VIOLATION_REL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BendersError {
    #[error("client {client}: open mass {mass} is below 1, the subproblem has no finite cut")]
    InsufficientMass { client: usize, mass: f64 },
    #[error("client {client}: index {ktilde} out of range (K_i = {k_count})")]
    IndexOutOfRange {
        client: usize,
        ktilde: usize,
        k_count: usize,
    },
    #[error("client {client}: constructed dual solution is infeasible ({detail})")]
    DualInfeasible { client: usize, detail: String },
    #[error("site vector has length {got}, expected {expected}")]
    Dimension { got: usize, expected: usize },
}

/// One optimality cut `theta_client >= rhs - sum(coef_j * y_j)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BendersCut {
    pub client: usize,
    pub ktilde: usize,
    pub rhs: Dist,
    /// `(site, coefficient)` pairs sorted by site; every coefficient is positive.
    pub coeffs: Vec<(u32, Dist)>,
}

impl BendersCut {
    /// `rhs - sum(coef_j * y_j)`: the lower bound this cut imposes on theta.
    pub fn bound_at(&self, y: &[f64]) -> f64 {
        self.rhs as f64
            - self
                .coeffs
                .iter()
                .map(|&(j, c)| c as f64 * y[j as usize])
                .sum::<f64>()
    }

    /// Exact bound for a binary solution given as an open-site mask.
    pub fn bound_at_binary(&self, open: &[bool]) -> Dist {
        self.rhs
            - self
                .coeffs
                .iter()
                .filter(|&&(j, _)| open[j as usize])
                .map(|&(_, c)| c)
                .sum::<Dist>()
    }

    pub fn violation_threshold(&self) -> f64 {
        VIOLATION_ABS + VIOLATION_REL * self.rhs.abs() as f64
    }
}

impl fmt::Display for BendersCut {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "theta_{} >= {}", self.client, self.rhs)?;
        for &(j, c) in &self.coeffs {
            write!(f, " - {c} y_{j}")?;
        }
        Ok(())
    }
}

/// Evaluation of one client subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemEval {
    pub client: usize,
    pub ktilde: usize,
    pub value: f64,
}

fn check_len(prep: &Preprocessed, y: &[f64]) -> Result<(), BendersError> {
    if y.len() != prep.n_sites() {
        return Err(BendersError::Dimension {
            got: y.len(),
            expected: prep.n_sites(),
        });
    }
    Ok(())
}

/// Scans client `i`'s sites nearest first and stops as soon as the
/// accumulated mass reaches one. Returns `ktilde` and the number of sites
/// scanned (all of them lie at distance `<= D[ktilde + 1]`).
fn scan(prep: &Preprocessed, i: usize, y: &[f64]) -> Result<(usize, usize), BendersError> {
    let order = prep.order(i);
    let row = prep.row(i);
    let mut ktilde = 0;
    let mut r = 0;
    let mut residual = 1.0 - y[order[0] as usize];
    while residual > MASS_TOL && r + 1 < order.len() {
        if row[order[r + 1] as usize] > row[order[r] as usize] {
            ktilde += 1;
        }
        r += 1;
        residual -= y[order[r] as usize];
    }
    if residual > MASS_TOL {
        return Err(BendersError::InsufficientMass {
            client: i,
            mass: 1.0 - residual,
        });
    }
    Ok((ktilde, r + 1))
}

/// Index of the last distance level at which client `i` still has a
/// positive uncovered residual (0 when its nearest level alone is fully open).
pub fn compute_ktilde(prep: &Preprocessed, i: usize, y: &[f64]) -> Result<usize, BendersError> {
    check_len(prep, y)?;
    scan(prep, i, y).map(|(k, _)| k)
}

/// Optimal subproblem value for a known `ktilde`.
pub fn subproblem_value(prep: &Preprocessed, i: usize, ktilde: usize, y: &[f64]) -> f64 {
    let distinct = prep.distinct(i);
    if ktilde == 0 {
        return distinct[0] as f64;
    }
    let reach = distinct[ktilde];
    let row = prep.row(i);
    let mut value = reach as f64;
    for &j in prep.order(i) {
        let d = row[j as usize];
        if d >= reach {
            break;
        }
        value -= (reach - d) as f64 * y[j as usize];
    }
    value
}

/// `ktilde` and optimal value in one scan.
pub fn evaluate_client(prep: &Preprocessed, i: usize, y: &[f64]) -> Result<SubproblemEval, BendersError> {
    check_len(prep, y)?;
    let (ktilde, _) = scan(prep, i, y)?;
    Ok(SubproblemEval {
        client: i,
        ktilde,
        value: subproblem_value(prep, i, ktilde, y),
    })
}

pub fn build_cut(prep: &Preprocessed, i: usize, ktilde: usize) -> Result<BendersCut, BendersError> {
    let distinct = prep.distinct(i);
    if ktilde >= distinct.len() {
        return Err(BendersError::IndexOutOfRange {
            client: i,
            ktilde,
            k_count: distinct.len(),
        });
    }
    if ktilde == 0 {
        return Ok(BendersCut {
            client: i,
            ktilde,
            rhs: distinct[0],
            coeffs: Vec::new(),
        });
    }
    let reach = distinct[ktilde];
    let row = prep.row(i);
    let mut coeffs: Vec<(u32, Dist)> = prep
        .order(i)
        .iter()
        .take_while(|&&j| row[j as usize] < reach)
        .map(|&j| (j, reach - row[j as usize]))
        .collect();
    coeffs.sort_unstable_by_key(|&(j, _)| j);
    Ok(BendersCut {
        client: i,
        ktilde,
        rhs: reach,
        coeffs,
    })
}

/// Result of one separation pass.
#[derive(Debug, Clone, Default)]
pub struct Separation {
    /// Sum over all clients of the subproblem optimal values.
    pub upper_bound: f64,
    /// Subproblem index of every client.
    pub ktildes: Vec<usize>,
    /// Cuts of the clients whose `theta` underestimates its subproblem value, in client order.
    pub cuts: Vec<BendersCut>,
}

/// Solves every client subproblem at `(y, theta)` and returns the violated cuts.
pub fn separate(prep: &Preprocessed, y: &[f64], theta: &[f64]) -> Result<Separation, BendersError> {
    check_len(prep, y)?;
    if theta.len() != prep.n_clients() {
        return Err(BendersError::Dimension {
            got: theta.len(),
            expected: prep.n_clients(),
        });
    }
    let mut sep = Separation {
        upper_bound: 0.0,
        ktildes: Vec::with_capacity(prep.n_clients()),
        cuts: Vec::new(),
    };
    for i in 0..prep.n_clients() {
        let (ktilde, _) = scan(prep, i, y)?;
        let value = subproblem_value(prep, i, ktilde, y);
        sep.upper_bound += value;
        sep.ktildes.push(ktilde);
        let rhs = prep.distinct(i)[ktilde];
        if theta[i] < value - (VIOLATION_ABS + VIOLATION_REL * rhs.abs() as f64) {
            sep.cuts.push(build_cut(prep, i, ktilde)?);
        }
    }
    Ok(sep)
}

/// Cuts of every client at a binary solution, regardless of violation.
pub fn cuts_at(prep: &Preprocessed, y: &[f64]) -> Result<Vec<BendersCut>, BendersError> {
    check_len(prep, y)?;
    (0..prep.n_clients())
        .map(|i| {
            let (k, _) = scan(prep, i, y)?;
            build_cut(prep, i, k)
        })
        .collect()
}

/// Primal subproblem solution: `z[k] = max(0, 1 - sum_{d_ij <= D[k]} y_j)`, k = 0..K_i.
pub fn primal_solution(prep: &Preprocessed, i: usize, y: &[f64]) -> Vec<f64> {
    let distinct = prep.distinct(i);
    let row = prep.row(i);
    let order = prep.order(i);
    let mut z = Vec::with_capacity(distinct.len());
    let mut r = 0;
    let mut mass = 0.0;
    for &level in distinct {
        while r < order.len() && row[order[r] as usize] <= level {
            mass += y[order[r] as usize];
            r += 1;
        }
        z.push((1.0 - mass).max(0.0));
    }
    z
}

/// Dual subproblem solution: `v[k] = D[ktilde+1] - D[k]` for levels up to `ktilde`, else 0.
pub fn dual_solution(prep: &Preprocessed, i: usize, ktilde: usize) -> Vec<f64> {
    let distinct = prep.distinct(i);
    distinct
        .iter()
        .enumerate()
        .map(|(k, &dk)| {
            if k < ktilde {
                (distinct[ktilde] - dk) as f64
            } else {
                0.0
            }
        })
        .collect()
}

/// Evaluates the primal subproblem objective at the closed-form primal
/// solution and the dual objective at the closed-form dual solution.
/// Both must agree; the dual is also checked for feasibility.
pub fn dual_check(prep: &Preprocessed, i: usize, ktilde: usize, y: &[f64]) -> Result<(f64, f64), BendersError> {
    check_len(prep, y)?;
    let distinct = prep.distinct(i);
    let kc = distinct.len();
    if ktilde >= kc {
        return Err(BendersError::IndexOutOfRange {
            client: i,
            ktilde,
            k_count: kc,
        });
    }
    let z = primal_solution(prep, i, y);
    let primal = distinct[0] as f64
        + (0..kc - 1)
            .map(|k| (distinct[k + 1] - distinct[k]) as f64 * z[k])
            .sum::<f64>();

    let v = dual_solution(prep, i, ktilde);
    let tol = 1e-9;
    for k in 0..kc {
        if v[k] < -tol {
            return Err(BendersError::DualInfeasible {
                client: i,
                detail: format!("v[{k}] = {} < 0", v[k]),
            });
        }
        if k + 1 < kc && v[k] - v[k + 1] > (distinct[k + 1] - distinct[k]) as f64 + tol {
            return Err(BendersError::DualInfeasible {
                client: i,
                detail: format!("v[{k}] - v[{}] exceeds the distance gap", k + 1),
            });
        }
    }
    // mass of each level
    let mut level_mass = vec![0.0; kc];
    for (j, &yj) in y.iter().enumerate() {
        level_mass[prep.rank(i, j)] += yj;
    }
    let dual = distinct[0] as f64 + v[0] * (1.0 - level_mass[0])
        - (1..kc).map(|k| v[k] * level_mass[k]).sum::<f64>();
    Ok((primal, dual))
}
