//! Instance and point generators shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeSet;

use pmedian::{Dist, Instance, Preprocessed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Square instance with entries uniform in `[lo, hi]`, mirrored when `symmetric`.
pub fn random_instance(rng: &mut impl Rng, n: usize, p: usize, lo: Dist, hi: Dist, symmetric: bool) -> Instance {
    let mut d = vec![0; n * n];
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = if symmetric && j < i { d[j * n + i] } else { rng.gen_range(lo..=hi) };
        }
    }
    Instance::new(format!("rand{n}-{p}"), n, n, p, d).unwrap()
}

/// Rectangular instance with `n` clients and `m` sites.
pub fn random_rect(rng: &mut impl Rng, n: usize, m: usize, p: usize, hi: Dist) -> Instance {
    let d = (0..n * m).map(|_| rng.gen_range(1..=hi)).collect();
    Instance::new(format!("rect{n}x{m}"), n, m, p, d).unwrap()
}

/// OR-Library style text: a connected random graph with `n` vertices.
pub fn orlib_text(rng: &mut impl Rng, n: usize, extra_edges: usize, p: usize) -> String {
    let mut edges = Vec::new();
    for v in 2..=n {
        edges.push((rng.gen_range(1..v), v, rng.gen_range(1..=100)));
    }
    for _ in 0..extra_edges {
        let (a, b) = (rng.gen_range(1..=n), rng.gen_range(1..=n));
        edges.push((a, b, rng.gen_range(1..=100)));
    }
    let mut s = format!("{} {} {}\n", n, edges.len(), p);
    for (a, b, c) in edges {
        s.push_str(&format!("{a} {b} {c}\n"));
    }
    s
}

/// Random point with `0 <= y_j <= 1` and `sum y = p`. About a third of the
/// weights are zeroed and some are pushed to the upper bound, so levels with
/// exact unit mass occur.
pub fn fractional_point(rng: &mut impl Rng, m: usize, p: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..m)
        .map(|_| match rng.gen_range(0..6) {
            0 | 1 => 0.0,
            2 => 10.0,
            _ => rng.gen_range(0.01..1.0),
        })
        .collect();
    if w.iter().filter(|&&x| x > 0.0).count() < p {
        w.iter_mut().for_each(|x| *x += 0.1);
    }
    cap_to_sum(&w, p as f64)
}

/// Scales `w` to sum `target` with every entry capped at one.
pub fn cap_to_sum(w: &[f64], target: f64) -> Vec<f64> {
    let mut y = vec![0.0; w.len()];
    let mut fixed: BTreeSet<usize> = BTreeSet::new();
    loop {
        let free: f64 = (0..w.len()).filter(|j| !fixed.contains(j)).map(|j| w[j]).sum();
        let left = target - fixed.len() as f64;
        let scale = if free > 0.0 { left / free } else { 0.0 };
        let mut capped = false;
        for j in 0..w.len() {
            if fixed.contains(&j) {
                y[j] = 1.0;
            } else {
                y[j] = w[j] * scale;
                if y[j] > 1.0 {
                    fixed.insert(j);
                    capped = true;
                }
            }
        }
        if !capped {
            return y;
        }
    }
}

/// Smallest level whose cumulative mass reaches one, summed directly from the matrix.
pub fn naive_ktilde(prep: &Preprocessed, i: usize, y: &[f64]) -> usize {
    let d = prep.distinct(i);
    let row = prep.row(i);
    for (k, &dk) in d.iter().enumerate() {
        let mass: f64 = (0..y.len()).filter(|&j| row[j] <= dk).map(|j| y[j]).sum();
        if mass >= 1.0 - 1e-9 {
            return k;
        }
    }
    panic!("client {i} never reaches unit mass");
}

/// Every `p`-subset of `0..m` as an open mask.
pub fn all_masks(m: usize, p: usize) -> Vec<Vec<bool>> {
    let mut out = Vec::new();
    let mut pick: Vec<usize> = (0..p).collect();
    loop {
        let mut mask = vec![false; m];
        pick.iter().for_each(|&j| mask[j] = true);
        out.push(mask);
        let mut t = p;
        loop {
            if t == 0 {
                return out;
            }
            t -= 1;
            if pick[t] < m - p + t {
                break;
            }
        }
        pick[t] += 1;
        for u in t + 1..p {
            pick[u] = pick[u - 1] + 1;
        }
    }
}

pub fn nearest_open(inst: &Instance, i: usize, open: &[bool]) -> Dist {
    (0..inst.n_sites).filter(|&j| open[j]).map(|j| inst.d(i, j)).min().unwrap()
}

/// Variable and row counts of an LP-format model.
pub fn lp_counts(text: &str) -> (usize, usize) {
    let mut section = "";
    let mut vars = BTreeSet::new();
    let mut rows = 0;
    for line in text.lines() {
        let t = line.trim();
        if matches!(t, "Minimize" | "Subject To" | "Bounds" | "Binary" | "End") {
            section = t;
            continue;
        }
        if section == "Subject To" && t.contains(':') {
            rows += 1;
        }
        if section == "Subject To" || section == "Minimize" {
            for tok in t.split_whitespace() {
                if tok.starts_with(|c: char| c.is_ascii_alphabetic()) && !tok.ends_with(':') {
                    vars.insert(tok.to_string());
                }
            }
        }
    }
    (vars.len(), rows)
}
