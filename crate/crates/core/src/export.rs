//! CPLEX LP-format writers for four p-median formulations.
//!
//! * `F1`: assignment variables `x_i_j` linked to the site variables.
//! * `F2`: one `z_i_k` per client and distinct distance, covering rows `z + sum y >= 1`.
//! * `F3`: as `F2` with chained rows over the sites at exactly `D[k]`.
//! * `F4`: one `theta_i` per client and one row per client and distance level.
//!
//! Output is deterministic: variables and rows follow index order. The
//! objectives of `F2` and `F3` carry the constant `sum_i D_i[1]`.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Dist, Instance, Preprocessed};

/// Largest model (nonzeros in the constraint matrix) the writer will produce.
pub const MAX_EXPORT_NONZEROS: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Formulation {
    F1,
    F2,
    F3,
    F4,
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Formulation::F1 => "f1",
            Formulation::F2 => "f2",
            Formulation::F3 => "f3",
            Formulation::F4 => "f4",
        };
        f.write_str(s)
    }
}

impl FromStr for Formulation {
    type Err = ExportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "f1" => Ok(Formulation::F1),
            "f2" => Ok(Formulation::F2),
            "f3" => Ok(Formulation::F3),
            "f4" => Ok(Formulation::F4),
            other => Err(ExportError::UnknownFormulation(other.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExportError {
    #[error("unknown formulation `{0}` (expected f1, f2, f3 or f4)")]
    UnknownFormulation(String),
    #[error("{formulation} would have about {nonzeros} nonzeros, above the limit of {MAX_EXPORT_NONZEROS}; use a smaller instance or a different formulation")]
    TooLarge { formulation: Formulation, nonzeros: usize },
}

/// Variable and constraint counts of an exported model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSize {
    pub variables: usize,
    pub constraints: usize,
}

pub fn model_size(inst: &Instance, prep: &Preprocessed, f: Formulation) -> ModelSize {
    let (n, m, k) = (inst.n_clients, inst.n_sites, prep.k_total());
    match f {
        Formulation::F1 => ModelSize {
            variables: m + n * m,
            constraints: 1 + n * (1 + m),
        },
        Formulation::F2 | Formulation::F3 => ModelSize {
            variables: m + k,
            constraints: 1 + k,
        },
        Formulation::F4 => ModelSize {
            variables: n + m,
            constraints: 1 + k,
        },
    }
}

fn estimated_nonzeros(inst: &Instance, prep: &Preprocessed, f: Formulation) -> usize {
    let (n, m, k) = (inst.n_clients, inst.n_sites, prep.k_total());
    match f {
        Formulation::F1 => m + n * m * 3,
        // every row of client i covers up to M sites
        Formulation::F2 | Formulation::F4 => m + (0..n).map(|i| prep.k_count(i) * m).sum::<usize>(),
        Formulation::F3 => m + n * m + 2 * k,
    }
}

/// Appends ` + c name` terms, wrapping long lines.
struct Expr<'a> {
    out: &'a mut String,
    width: usize,
    first: bool,
}

impl<'a> Expr<'a> {
    fn new(out: &'a mut String, head: &str) -> Self {
        out.push(' ');
        out.push_str(head);
        let width = head.len() + 1;
        Expr { out, width, first: true }
    }

    fn term(&mut self, coef: Dist, var: &str) {
        let mut s = String::new();
        let sign = if coef < 0 { '-' } else { '+' };
        if self.first {
            if coef < 0 {
                s.push_str("- ");
            }
        } else {
            s.push(sign);
            s.push(' ');
        }
        let a = coef.abs();
        if a != 1 {
            let _ = write!(s, "{a} ");
        }
        s.push_str(var);
        if self.width + s.len() + 1 > 250 {
            self.out.push_str("\n   ");
            self.width = 3;
        }
        self.out.push(' ');
        self.out.push_str(&s);
        self.width += s.len() + 1;
        self.first = false;
    }

    fn constant(&mut self, c: Dist) {
        if c != 0 || self.first {
            let _ = write!(self.out, " {} {}", if c < 0 { '-' } else { '+' }, c.abs());
            self.first = false;
        }
    }

    fn end(self, tail: &str) {
        if self.first {
            self.out.push_str(" 0 y_0");
        }
        self.out.push_str(tail);
        self.out.push('\n');
    }
}

/// Writes `inst` as an LP-format model of the chosen formulation.
pub fn export_lp(inst: &Instance, prep: &Preprocessed, f: Formulation) -> Result<String, ExportError> {
    let nonzeros = estimated_nonzeros(inst, prep, f);
    if nonzeros > MAX_EXPORT_NONZEROS {
        return Err(ExportError::TooLarge { formulation: f, nonzeros });
    }
    let (n, m) = (inst.n_clients, inst.n_sites);
    let size = model_size(inst, prep, f);
    let mut out = String::new();
    let name = if inst.name.is_empty() { "instance" } else { &inst.name };
    let _ = writeln!(
        out,
        "\\ {f} p-median model for {name}: N={n} M={m} p={} variables={} constraints={}",
        inst.p, size.variables, size.constraints
    );
    out.push_str("Minimize\n");
    let objective_constant: Dist = (0..n).map(|i| prep.distinct(i)[0]).sum();
    {
        let mut e = Expr::new(&mut out, "obj:");
        match f {
            Formulation::F1 => {
                for i in 0..n {
                    for j in 0..m {
                        e.term(inst.d(i, j), &format!("x_{i}_{j}"));
                    }
                }
            }
            Formulation::F2 | Formulation::F3 => {
                for i in 0..n {
                    let d = prep.distinct(i);
                    for k in 0..d.len() - 1 {
                        e.term(d[k + 1] - d[k], &format!("z_{i}_{k}"));
                    }
                }
                e.constant(objective_constant);
            }
            Formulation::F4 => {
                for i in 0..n {
                    e.term(1, &format!("theta_{i}"));
                }
            }
        }
        e.end("");
    }

    out.push_str("Subject To\n");
    {
        let mut e = Expr::new(&mut out, "card:");
        for j in 0..m {
            e.term(1, &format!("y_{j}"));
        }
        e.end(&format!(" = {}", inst.p));
    }
    match f {
        Formulation::F1 => {
            for i in 0..n {
                let mut e = Expr::new(&mut out, &format!("assign_{i}:"));
                for j in 0..m {
                    e.term(1, &format!("x_{i}_{j}"));
                }
                e.end(" = 1");
            }
            for i in 0..n {
                for j in 0..m {
                    let _ = writeln!(out, " link_{i}_{j}: x_{i}_{j} - y_{j} <= 0");
                }
            }
        }
        Formulation::F2 => {
            for i in 0..n {
                let d = prep.distinct(i);
                let row = inst.row(i);
                for (k, &dk) in d.iter().enumerate() {
                    let mut e = Expr::new(&mut out, &format!("cover_{i}_{k}:"));
                    e.term(1, &format!("z_{i}_{k}"));
                    for (j, &dij) in row.iter().enumerate() {
                        if dij <= dk {
                            e.term(1, &format!("y_{j}"));
                        }
                    }
                    e.end(" >= 1");
                }
            }
        }
        Formulation::F3 => {
            for i in 0..n {
                let d = prep.distinct(i);
                let row = inst.row(i);
                for (k, &dk) in d.iter().enumerate() {
                    let mut e = Expr::new(&mut out, &format!("chain_{i}_{k}:"));
                    e.term(1, &format!("z_{i}_{k}"));
                    for (j, &dij) in row.iter().enumerate() {
                        if dij == dk {
                            e.term(1, &format!("y_{j}"));
                        }
                    }
                    if k == 0 {
                        e.end(" >= 1");
                    } else {
                        e.term(-1, &format!("z_{i}_{}", k - 1));
                        e.end(" >= 0");
                    }
                }
            }
        }
        Formulation::F4 => {
            for i in 0..n {
                let d = prep.distinct(i);
                let row = inst.row(i);
                for k in 0..d.len() {
                    let mut e = Expr::new(&mut out, &format!("cut_{i}_{k}:"));
                    e.term(1, &format!("theta_{i}"));
                    if k > 0 {
                        for (j, &dij) in row.iter().enumerate() {
                            if dij < d[k] {
                                e.term(d[k] - dij, &format!("y_{j}"));
                            }
                        }
                    }
                    e.end(&format!(" >= {}", d[k]));
                }
            }
        }
    }

    out.push_str("Bounds\n");
    match f {
        Formulation::F1 => {
            for i in 0..n {
                for j in 0..m {
                    let _ = writeln!(out, " 0 <= x_{i}_{j} <= 1");
                }
            }
        }
        Formulation::F2 | Formulation::F3 => {
            for i in 0..n {
                for k in 0..prep.k_count(i) {
                    let _ = writeln!(out, " z_{i}_{k} >= 0");
                }
            }
        }
        Formulation::F4 => {
            for i in 0..n {
                let _ = writeln!(out, " theta_{i} >= 0");
            }
        }
    }
    out.push_str("Binary\n");
    for j in 0..m {
        let _ = writeln!(out, " y_{j}");
    }
    out.push_str("End\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn path() -> (Instance, Preprocessed) {
        let inst = Instance::from_rows("path", &[vec![0, 4, 7], vec![4, 0, 3], vec![7, 3, 0]], 1).unwrap();
        let prep = Preprocessed::new(&inst);
        (inst, prep)
    }

    fn count(text: &str) -> (usize, usize) {
        let mut section = "";
        let mut vars = BTreeSet::new();
        let mut rows = 0;
        for line in text.lines() {
            let t = line.trim();
            match t {
                "Minimize" | "Subject To" | "Bounds" | "Binary" | "End" => {
                    section = t;
                    continue;
                }
                _ => {}
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

    #[test]
    fn sizes_on_the_path() {
        let (inst, prep) = path();
        let f1 = export_lp(&inst, &prep, Formulation::F1).unwrap();
        assert_eq!(count(&f1), (3 + 9, 1 + 3 + 9));
        for f in [Formulation::F2, Formulation::F3] {
            let text = export_lp(&inst, &prep, f).unwrap();
            assert_eq!(count(&text), (3 + prep.k_total(), 1 + prep.k_total()));
        }
        let f4 = export_lp(&inst, &prep, Formulation::F4).unwrap();
        assert_eq!(count(&f4), (3 + 3, 1 + prep.k_total()));
        assert!(f4.contains(" cut_0_1: theta_0 + 4 y_0 >= 4"));
        assert_eq!(export_lp(&inst, &prep, Formulation::F4).unwrap(), f4);
    }

    #[test]
    fn parses_names() {
        assert_eq!("F3".parse::<Formulation>().unwrap(), Formulation::F3);
        assert!("f5".parse::<Formulation>().is_err());
    }
}
