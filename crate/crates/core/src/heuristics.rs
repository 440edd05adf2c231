//! Incumbent construction: greedy opening followed by a first-improvement
//! swap search, a random start, and rounding of fractional master solutions.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::index::sample;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Dist, Instance, Preprocessed};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HeuristicError {
    #[error("expected {expected} open sites, got {got}")]
    WrongCount { expected: usize, got: usize },
    #[error("site {0} is out of range or listed twice")]
    BadSite(usize),
}

/// A set of exactly `p` open sites with its exact objective value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegerSolution {
    /// Open sites in increasing order.
    pub open: Vec<usize>,
    pub value: Dist,
}

impl IntegerSolution {
    pub fn from_open(inst: &Instance, prep: &Preprocessed, mut open: Vec<usize>) -> Result<Self, HeuristicError> {
        open.sort_unstable();
        let value = evaluate(inst, prep, &open)?;
        Ok(IntegerSolution { open, value })
    }

    /// 0/1 indicator vector over all sites.
    pub fn indicator(&self, n_sites: usize) -> Vec<f64> {
        let mut y = vec![0.0; n_sites];
        for &j in &self.open {
            y[j] = 1.0;
        }
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum InitialMode {
    /// Greedy construction improved by vertex substitution.
    #[default]
    Heuristic,
    /// `p` sites drawn uniformly at random.
    Random,
}

fn open_mask(n_sites: usize, p: usize, open: &[usize]) -> Result<Vec<bool>, HeuristicError> {
    if open.len() != p {
        return Err(HeuristicError::WrongCount {
            expected: p,
            got: open.len(),
        });
    }
    let mut mask = vec![false; n_sites];
    for &j in open {
        if j >= n_sites || mask[j] {
            return Err(HeuristicError::BadSite(j));
        }
        mask[j] = true;
    }
    Ok(mask)
}

/// Sum over clients of the distance to the nearest open site.
pub fn evaluate(inst: &Instance, prep: &Preprocessed, open: &[usize]) -> Result<Dist, HeuristicError> {
    let mask = open_mask(inst.n_sites, inst.p, open)?;
    Ok(evaluate_mask(prep, &mask))
}

pub(crate) fn evaluate_mask(prep: &Preprocessed, mask: &[bool]) -> Dist {
    (0..prep.n_clients())
        .map(|i| {
            let j = prep
                .order(i)
                .iter()
                .find(|&&j| mask[j as usize])
                .expect("at least one open site");
            prep.d(i, *j as usize)
        })
        .sum()
}

/// Initial incumbent. `seed` only matters for [`InitialMode::Random`]; the
/// heuristic mode is deterministic.
pub fn initial_solution(inst: &Instance, prep: &Preprocessed, mode: InitialMode, seed: u64) -> IntegerSolution {
    let open = match mode {
        InitialMode::Heuristic => {
            let open = greedy(prep, inst.p);
            interchange(prep, open, 10 * inst.n_sites)
        }
        InitialMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample(&mut rng, inst.n_sites, inst.p).into_vec()
        }
    };
    IntegerSolution::from_open(inst, prep, open).expect("heuristics produce p distinct sites")
}

/// Opens the `p` sites with the largest `y`, ties by lower index.
pub fn round_solution(y: &[f64], inst: &Instance, prep: &Preprocessed) -> IntegerSolution {
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));
    idx.truncate(inst.p);
    IntegerSolution::from_open(inst, prep, idx).expect("rounding produces p distinct sites")
}

/// Lazy greedy: gains only shrink as sites open, so stale heap entries are
/// upper bounds and a fresh top entry is the true argmax (ties to the lower index).
fn greedy(prep: &Preprocessed, p: usize) -> Vec<usize> {
    let (n, m) = (prep.n_clients(), prep.n_sites());
    let first = (0..m)
        .min_by_key(|&j| ((0..n).map(|i| prep.d(i, j)).sum::<Dist>(), j))
        .expect("at least one site");
    let mut open = vec![first];
    let mut nearest: Vec<Dist> = (0..n).map(|i| prep.d(i, first)).collect();
    let gain = |j: usize, nearest: &[Dist]| -> Dist {
        (0..n).map(|i| (nearest[i] - prep.d(i, j)).max(0)).sum()
    };
    let mut heap: BinaryHeap<(Dist, Reverse<usize>, usize)> = (0..m)
        .filter(|&j| j != first)
        .map(|j| (gain(j, &nearest), Reverse(j), 1))
        .collect();
    let mut round = 1;
    while open.len() < p {
        let (_, Reverse(j), stamp) = heap.pop().expect("enough sites");
        if stamp != round {
            heap.push((gain(j, &nearest), Reverse(j), round));
            continue;
        }
        open.push(j);
        for (i, near) in nearest.iter_mut().enumerate() {
            *near = (*near).min(prep.d(i, j));
        }
        round += 1;
    }
    open
}

/// First-improvement vertex substitution with nearest/second-nearest
/// bookkeeping. Candidate entering sites are scanned cyclically; for each one
/// the best leaving site is found in O(N + p).
fn interchange(prep: &Preprocessed, mut open: Vec<usize>, budget: usize) -> Vec<usize> {
    let (n, m) = (prep.n_clients(), prep.n_sites());
    if open.len() == m {
        return open;
    }
    let mut is_open = vec![false; m];
    for &j in &open {
        is_open[j] = true;
    }
    let mut d1 = vec![0; n];
    let mut c1 = vec![0usize; n];
    let mut d2 = vec![Dist::MAX; n];
    let refresh = |i: usize, is_open: &[bool], d1: &mut [Dist], c1: &mut [usize], d2: &mut [Dist]| {
        let mut it = prep.order(i).iter().map(|&j| j as usize).filter(|&j| is_open[j]);
        let first = it.next().expect("open site");
        d1[i] = prep.d(i, first);
        c1[i] = first;
        d2[i] = it.next().map_or(Dist::MAX, |j| prep.d(i, j));
    };
    for i in 0..n {
        refresh(i, &is_open, &mut d1, &mut c1, &mut d2);
    }
    let mut extra = vec![0 as Dist; m];
    let mut swaps = 0;
    let mut f = 0;
    let mut since_improvement = 0;
    while swaps < budget && since_improvement < m {
        let cand = f;
        f = (f + 1) % m;
        since_improvement += 1;
        if is_open[cand] {
            continue;
        }
        let mut gain_add: Dist = 0;
        for &r in &open {
            extra[r] = 0;
        }
        for i in 0..n {
            let d = prep.d(i, cand);
            if d < d1[i] {
                gain_add += d1[i] - d;
            } else {
                extra[c1[i]] += d.min(d2[i]) - d1[i];
            }
        }
        let (leave_pos, &leave) = open
            .iter()
            .enumerate()
            .min_by_key(|&(_, &r)| (extra[r], r))
            .expect("p >= 1");
        if gain_add - extra[leave] > 0 {
            is_open[leave] = false;
            is_open[cand] = true;
            open[leave_pos] = cand;
            for i in 0..n {
                refresh(i, &is_open, &mut d1, &mut c1, &mut d2);
            }
            swaps += 1;
            since_improvement = 0;
        }
    }
    open
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> (Instance, Preprocessed) {
        let inst = Instance::from_rows("path", &[vec![0, 4, 7], vec![4, 0, 3], vec![7, 3, 0]], 1).unwrap();
        let prep = Preprocessed::new(&inst);
        (inst, prep)
    }

    #[test]
    fn evaluates_open_sets() {
        let (inst, prep) = path();
        assert_eq!(evaluate(&inst, &prep, &[1]).unwrap(), 7);
        assert_eq!(evaluate(&inst, &prep, &[0]).unwrap(), 11);
        assert_eq!(evaluate(&inst, &prep, &[2]).unwrap(), 10);
        assert!(evaluate(&inst, &prep, &[0, 1]).is_err());
        let all = inst.with_p(3).unwrap();
        assert_eq!(evaluate(&all, &prep, &[0, 1, 2]).unwrap(), 0);
    }

    #[test]
    fn initial_on_path() {
        let (inst, prep) = path();
        let s = initial_solution(&inst, &prep, InitialMode::Heuristic, 0);
        assert_eq!(s.open, vec![1]);
        assert_eq!(s.value, 7);
        let all = inst.with_p(3).unwrap();
        assert_eq!(initial_solution(&all, &prep, InitialMode::Heuristic, 0).open, vec![0, 1, 2]);
        let r = initial_solution(&inst, &prep, InitialMode::Random, 5);
        assert_eq!(r.open.len(), 1);
        assert_eq!(r, initial_solution(&inst, &prep, InitialMode::Random, 5));
    }

    #[test]
    fn rounding() {
        let (inst, prep) = path();
        let s = round_solution(&[0.5, 0.6, 0.4], &inst, &prep);
        assert_eq!((s.open.clone(), s.value), (vec![1], 7));
        assert_eq!(round_solution(&[0.0, 0.0, 1.0], &inst, &prep).open, vec![2]);
        let two = inst.with_p(2).unwrap();
        assert_eq!(round_solution(&[2.0 / 3.0; 3], &two, &prep).open, vec![0, 1]);
    }
}
