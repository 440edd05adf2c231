//! Bounded-variable simplex for the Benders master relaxation
//!
//! ```text
//! min  sum_i theta_i
//! s.t. sum_j y_j                       = p
//!      theta_c(r) + sum_j c_rj y_j    >= rhs_r      for every cut row r
//!      lo_j <= y_j <= up_j,  theta_i >= 0
//! ```
//!
//! Every cut row holds exactly one `theta` with coefficient one. The basis is
//! never factorized as a whole: rows whose logical is basic are solved by
//! substitution, each basic `theta_i` is eliminated through one tight "key"
//! row of its client, and what remains is a dense kernel with one column per
//! basic `y`. The kernel is refactorized from scratch after every pivot.
//!
//! The main loop is a dual simplex (the slack basis is always dual feasible
//! because all costs are non-negative). Leaving rows are priced with dual
//! Devex weights; the ratio test flips boxed sites across their breakpoints
//! while the leaving row stays infeasible, then picks the entering variable
//! Harris-style among the rest. Site costs get tiny distinct shifts during
//! this phase to break the heavy dual degeneracy. Bland's rule takes over
//! after a run of degenerate pivots, and a pivot that leaves a singular basis
//! is undone. Once the shifts are removed, a primal simplex pass cleans up the
//! dual infeasibilities they leave behind.

mod lu;

use std::sync::Arc;

use log::{debug, trace};
use thiserror::Error;

use lu::DenseLu;

/// Primal feasibility tolerance reported to callers.
pub const PRIMAL_TOL: f64 = 1e-7;
/// Dual feasibility tolerance reported to callers.
pub const DUAL_TOL: f64 = 1e-7;

const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
/// Pivot candidates smaller than this fraction of the largest one are skipped.
const PIVOT_REL: f64 = 1e-7;
/// Scale of the cost shifts given to sites during the dual phase.
const PERTURBATION: f64 = 1e-6;
const DEGENERATE_RUN: usize = 50;
const RECOMPUTE_EVERY: usize = 100;
const NONE: usize = usize::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("simplex failed after {iterations} iterations: {reason}")]
    SolverFailure { iterations: usize, reason: String },
    #[error("site {site} cannot be fixed to {value}: it is already fixed to {current}")]
    InfeasibleFixing { site: usize, value: u8, current: f64 },
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error("internal error: {0}")]
    Internal(String),
}

/// `theta_client + sum(coef_j * y_j) >= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutRow {
    pub client: usize,
    pub rhs: f64,
    /// `(site, coefficient)` with positive coefficients and distinct sites.
    pub coeffs: Vec<(u32, f64)>,
}

/// Master LP. Cut rows are reference counted so that cloning a model for a
/// branch only copies bounds and pointers.
#[derive(Debug, Clone)]
pub struct LpModel {
    n_sites: usize,
    n_clients: usize,
    p: f64,
    y_lower: Vec<f64>,
    y_upper: Vec<f64>,
    rows: Vec<Arc<CutRow>>,
}

impl LpModel {
    pub fn new(n_sites: usize, n_clients: usize, p: usize) -> Self {
        LpModel {
            n_sites,
            n_clients,
            p: p as f64,
            y_lower: vec![0.0; n_sites],
            y_upper: vec![1.0; n_sites],
            rows: Vec::new(),
        }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_clients(&self) -> usize {
        self.n_clients
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Constraint count including the cardinality row.
    pub fn n_rows(&self) -> usize {
        1 + self.rows.len()
    }

    pub fn cut_rows(&self) -> &[Arc<CutRow>] {
        &self.rows
    }

    pub fn y_bounds(&self, j: usize) -> (f64, f64) {
        (self.y_lower[j], self.y_upper[j])
    }

    pub fn add_row(&mut self, row: CutRow) -> Result<(), LpError> {
        if row.client >= self.n_clients {
            return Err(LpError::Malformed(format!("row references client {}", row.client)));
        }
        for &(j, c) in &row.coeffs {
            if j as usize >= self.n_sites || !(c > 0.0) || !c.is_finite() {
                return Err(LpError::Malformed(format!(
                    "coefficient {c} on site {j} (coefficients must be positive)"
                )));
            }
        }
        self.rows.push(Arc::new(row));
        Ok(())
    }

    pub fn retain_rows(&mut self, mut keep: impl FnMut(usize, &CutRow) -> bool) {
        let mut idx = 0;
        self.rows.retain(|r| {
            let k = keep(idx, r);
            idx += 1;
            k
        });
    }

    pub fn set_y_bounds(&mut self, j: usize, lo: f64, up: f64) {
        self.y_lower[j] = lo;
        self.y_upper[j] = up;
    }

    /// Copy of the model with `y_j` fixed to `value` (0 or 1).
    pub fn fix_variable(&self, j: usize, value: u8) -> Result<LpModel, LpError> {
        let mut m = self.clone();
        m.fix_in_place(j, value)?;
        Ok(m)
    }

    pub fn fix_in_place(&mut self, j: usize, value: u8) -> Result<(), LpError> {
        if j >= self.n_sites || value > 1 {
            return Err(LpError::Malformed(format!("cannot fix site {j} to {value}")));
        }
        let v = f64::from(value);
        let (lo, up) = (self.y_lower[j], self.y_upper[j]);
        if v < lo || v > up {
            return Err(LpError::InfeasibleFixing {
                site: j,
                value,
                current: if lo == up { lo } else { 1.0 - v },
            });
        }
        self.y_lower[j] = v;
        self.y_upper[j] = v;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
}

/// Basis statuses laid out as `[y (M), theta (N), logicals (1 + rows)]`.
/// A basis taken before rows were appended stays loadable: missing rows get
/// basic logicals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    n_sites: usize,
    n_clients: usize,
    status: Vec<VarStatus>,
}

impl Basis {
    pub fn n_rows(&self) -> usize {
        self.status.len() - self.n_sites - self.n_clients
    }

    pub fn status(&self) -> &[VarStatus] {
        &self.status
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub y: Vec<f64>,
    pub theta: Vec<f64>,
    /// One dual per row, the cardinality row first. Cut-row duals are non-negative.
    pub row_duals: Vec<f64>,
    /// `>= 0` for sites at their lower bound, `<= 0` at their upper bound.
    pub reduced_costs_y: Vec<f64>,
    pub reduced_costs_theta: Vec<f64>,
    pub y_status: Vec<VarStatus>,
    pub basis: Basis,
    pub iterations: usize,
}

impl LpSolution {
    fn infeasible(basis: Basis, iterations: usize) -> Self {
        LpSolution {
            status: LpStatus::Infeasible,
            objective: f64::INFINITY,
            y: Vec::new(),
            theta: Vec::new(),
            row_duals: Vec::new(),
            reduced_costs_y: Vec::new(),
            reduced_costs_theta: Vec::new(),
            y_status: Vec::new(),
            basis,
            iterations,
        }
    }
}

/// Solves `model`, optionally from a previous basis.
pub fn lp_solve(model: &LpModel, warm: Option<&Basis>) -> Result<LpSolution, LpError> {
    let mut s = Simplex::new(model.clone());
    if let Some(b) = warm {
        if !s.load_basis(b) {
            return Err(LpError::Malformed("warm basis does not match the model".into()));
        }
    }
    s.solve()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    Site(usize),
    Theta(usize),
    Logical(usize),
}

#[derive(Debug, Clone, Default)]
struct Kernel {
    /// Key row of every client whose theta is basic, `NONE` otherwise.
    key_row: Vec<usize>,
    theta_basic: Vec<usize>,
    /// Key-row coefficients restricted to basic sites, as `(kernel column, coefficient)`.
    key_coefs: Vec<Vec<(usize, f64)>>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    col_pos: Vec<usize>,
    lu: DenseLu,
}

/// Persistent simplex engine over a growing master model.
#[derive(Debug, Clone)]
pub struct Simplex {
    model: LpModel,
    row_client: Vec<usize>,
    client_rows: Vec<Vec<usize>>,
    /// Column of every site over the cut rows: `(row, coefficient)`.
    site_col: Vec<Vec<(usize, f64)>>,
    status: Vec<VarStatus>,
    x: Vec<f64>,
    d: Vec<f64>,
    kernel: Kernel,
    /// Cost shift of each site while perturbed, otherwise empty.
    shift: Vec<f64>,
    fresh: bool,
    total_iterations: usize,
}

impl Simplex {
    pub fn new(model: LpModel) -> Self {
        let mut s = Simplex {
            row_client: Vec::new(),
            client_rows: vec![Vec::new(); model.n_clients],
            site_col: vec![Vec::new(); model.n_sites],
            status: Vec::new(),
            x: Vec::new(),
            d: Vec::new(),
            kernel: Kernel::default(),
            shift: Vec::new(),
            fresh: true,
            total_iterations: 0,
            model,
        };
        s.rebuild_structure();
        s.cold_basis();
        s
    }

    pub fn model(&self) -> &LpModel {
        &self.model
    }

    pub fn total_iterations(&self) -> usize {
        self.total_iterations
    }

    fn m(&self) -> usize {
        1 + self.model.rows.len()
    }

    fn ns(&self) -> usize {
        self.model.n_sites
    }

    fn nc(&self) -> usize {
        self.model.n_clients
    }

    fn nv(&self) -> usize {
        self.ns() + self.nc() + self.m()
    }

    #[inline]
    fn var(&self, v: usize) -> Var {
        let (ns, nc) = (self.ns(), self.nc());
        if v < ns {
            Var::Site(v)
        } else if v < ns + nc {
            Var::Theta(v - ns)
        } else {
            Var::Logical(v - ns - nc)
        }
    }

    #[inline]
    fn logical(&self, row: usize) -> usize {
        self.ns() + self.nc() + row
    }

    #[inline]
    fn theta_var(&self, i: usize) -> usize {
        self.ns() + i
    }

    #[inline]
    fn lo(&self, v: usize) -> f64 {
        match self.var(v) {
            Var::Site(j) => self.model.y_lower[j],
            _ => 0.0,
        }
    }

    #[inline]
    fn up(&self, v: usize) -> f64 {
        match self.var(v) {
            Var::Site(j) => self.model.y_upper[j],
            Var::Theta(_) => f64::INFINITY,
            Var::Logical(0) => 0.0,
            Var::Logical(_) => f64::INFINITY,
        }
    }

    #[inline]
    fn logical_coef(row: usize) -> f64 {
        if row == 0 {
            1.0
        } else {
            -1.0
        }
    }

    #[inline]
    fn row_coeffs(&self, row: usize) -> &[(u32, f64)] {
        &self.model.rows[row - 1].coeffs
    }

    #[inline]
    fn rhs(&self, row: usize) -> f64 {
        if row == 0 {
            self.model.p
        } else {
            self.model.rows[row - 1].rhs
        }
    }

    fn rebuild_structure(&mut self) {
        let (ns, nc) = (self.ns(), self.nc());
        self.row_client = vec![NONE];
        self.client_rows = vec![Vec::new(); nc];
        self.site_col = vec![Vec::new(); ns];
        for (r, row) in self.model.rows.iter().enumerate() {
            let t = r + 1;
            self.row_client.push(row.client);
            self.client_rows[row.client].push(t);
            for &(j, c) in &row.coeffs {
                self.site_col[j as usize].push((t, c));
            }
        }
    }

    fn cold_basis(&mut self) {
        let (ns, nc, m) = (self.ns(), self.nc(), self.m());
        let mut status = Vec::with_capacity(ns + nc + m);
        status.extend(std::iter::repeat(VarStatus::AtLower).take(ns + nc));
        status.extend(std::iter::repeat(VarStatus::Basic).take(m));
        self.status = status;
        self.fresh = true;
    }

    /// Appends cut rows; their logicals enter the basis.
    pub fn add_rows(&mut self, rows: impl IntoIterator<Item = CutRow>) -> Result<usize, LpError> {
        let mut added = 0;
        for row in rows {
            self.model.add_row(row)?;
            let t = self.model.rows.len();
            let row = Arc::clone(&self.model.rows[t - 1]);
            self.row_client.push(row.client);
            self.client_rows[row.client].push(t);
            for &(j, c) in &row.coeffs {
                self.site_col[j as usize].push((t, c));
            }
            self.status.push(VarStatus::Basic);
            added += 1;
        }
        if added > 0 {
            self.fresh = true;
        }
        Ok(added)
    }

    /// Drops cut rows (by 0-based cut index). If a dropped row was tight the
    /// engine falls back to the slack basis.
    pub fn retain_rows(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.model.rows.len());
        let (ns, nc) = (self.ns(), self.nc());
        let dropped_tight = keep
            .iter()
            .enumerate()
            .any(|(r, &k)| !k && self.status[ns + nc + 1 + r] != VarStatus::Basic);
        let mut status: Vec<VarStatus> = self.status[..ns + nc + 1].to_vec();
        status.extend(
            keep.iter()
                .enumerate()
                .filter(|(_, &k)| k)
                .map(|(r, _)| self.status[ns + nc + 1 + r]),
        );
        self.model.retain_rows(|r, _| keep[r]);
        self.rebuild_structure();
        self.status = status;
        if dropped_tight {
            debug!("row removal dropped a tight row, restarting from the slack basis");
            self.cold_basis();
        }
        self.fresh = true;
    }

    pub fn set_y_bounds(&mut self, j: usize, lo: f64, up: f64) {
        self.model.set_y_bounds(j, lo, up);
        if self.status[j] == VarStatus::AtUpper && !up.is_finite() {
            self.status[j] = VarStatus::AtLower;
        }
        self.fresh = true;
    }

    pub fn basis(&self) -> Basis {
        Basis {
            n_sites: self.ns(),
            n_clients: self.nc(),
            status: self.status.clone(),
        }
    }

    /// Loads a basis taken from this model or from an ancestor with fewer rows.
    pub fn load_basis(&mut self, b: &Basis) -> bool {
        if b.n_sites != self.ns() || b.n_clients != self.nc() || b.n_rows() > self.m() {
            return false;
        }
        let mut status = b.status.clone();
        status.extend(std::iter::repeat(VarStatus::Basic).take(self.m() - b.n_rows()));
        if status.iter().filter(|&&s| s == VarStatus::Basic).count() != self.m() {
            return false;
        }
        self.status = status;
        self.fresh = true;
        true
    }

    /// Discards the current basis.
    pub fn reset_basis(&mut self) {
        self.cold_basis();
    }

    // ---------------------------------------------------------------- kernel

    fn refactor(&mut self) -> Result<(), &'static str> {
        let (ns, nc, m) = (self.ns(), self.nc(), self.m());
        let mut k = Kernel {
            key_row: vec![NONE; nc],
            col_pos: vec![NONE; ns],
            ..Kernel::default()
        };
        for j in 0..ns {
            if self.status[j] == VarStatus::Basic {
                k.col_pos[j] = k.cols.len();
                k.cols.push(j);
            }
        }
        let mut theta_basic = vec![false; nc];
        for i in 0..nc {
            if self.status[ns + i] == VarStatus::Basic {
                theta_basic[i] = true;
                k.theta_basic.push(i);
            }
        }
        for t in 0..m {
            if self.status[ns + nc + t] == VarStatus::Basic {
                continue;
            }
            if t > 0 {
                let c = self.row_client[t];
                if theta_basic[c] && k.key_row[c] == NONE {
                    k.key_row[c] = t;
                    continue;
                }
            }
            k.rows.push(t);
        }
        if k.rows.len() != k.cols.len() {
            return Err("kernel is not square");
        }
        if k.theta_basic.iter().any(|&i| k.key_row[i] == NONE) {
            return Err("basic theta without a tight row");
        }
        k.key_coefs = k
            .theta_basic
            .iter()
            .map(|&i| self.restricted(k.key_row[i], &k.col_pos))
            .collect();
        let dim = k.cols.len();
        let mut dense = vec![0.0; dim * dim];
        // index of each theta-basic client in theta_basic
        let mut tb_pos = vec![NONE; nc];
        for (q, &i) in k.theta_basic.iter().enumerate() {
            tb_pos[i] = q;
        }
        for (kr, &t) in k.rows.iter().enumerate() {
            let out = &mut dense[kr * dim..(kr + 1) * dim];
            if t == 0 {
                out.iter_mut().for_each(|v| *v = 1.0);
                continue;
            }
            for (kc, c) in self.restricted(t, &k.col_pos) {
                out[kc] += c;
            }
            let q = tb_pos[self.row_client[t]];
            if q != NONE {
                for &(kc, c) in &k.key_coefs[q] {
                    out[kc] -= c;
                }
            }
        }
        k.lu = DenseLu::factor(dense, dim).map_err(|_| "singular kernel")?;
        self.kernel = k;
        Ok(())
    }

    fn restricted(&self, row: usize, col_pos: &[usize]) -> Vec<(usize, f64)> {
        if row == 0 {
            return col_pos
                .iter()
                .filter(|&&p| p != NONE)
                .map(|&p| (p, 1.0))
                .collect();
        }
        self.row_coeffs(row)
            .iter()
            .filter_map(|&(j, c)| {
                let p = col_pos[j as usize];
                (p != NONE).then_some((p, c))
            })
            .collect()
    }

    /// Solves `B x = a` for a right-hand side given densely over rows.
    /// `nz` must list every row where `a` is nonzero. Returns `(basic var, value)`.
    fn ftran(&self, a: &[f64], nz: &[usize]) -> Vec<(usize, f64)> {
        let k = &self.kernel;
        let (ns, nc, m) = (self.ns(), self.nc(), self.m());
        let dim = k.cols.len();
        let mut out = Vec::new();

        let mut xy = vec![0.0; dim];
        for (kr, &t) in k.rows.iter().enumerate() {
            let mut r = a[t];
            if t > 0 {
                let key = k.key_row[self.row_client[t]];
                if key != NONE {
                    r -= a[key];
                }
            }
            xy[kr] = r;
        }
        k.lu.solve(&mut xy);
        let any_y = xy.iter().any(|&v| v != 0.0);

        let mut acc = vec![0.0; m];
        let mut mark = vec![false; m];
        let mut touched: Vec<usize> = Vec::new();
        let touch = |t: usize, v: f64, acc: &mut Vec<f64>, mark: &mut Vec<bool>, touched: &mut Vec<usize>| {
            acc[t] += v;
            if !mark[t] {
                mark[t] = true;
                touched.push(t);
            }
        };

        for (kc, &j) in k.cols.iter().enumerate() {
            let v = xy[kc];
            if v != 0.0 {
                out.push((j, v));
                touch(0, v, &mut acc, &mut mark, &mut touched);
                for &(t, c) in &self.site_col[j] {
                    touch(t, c * v, &mut acc, &mut mark, &mut touched);
                }
            }
        }
        for (q, &i) in k.theta_basic.iter().enumerate() {
            let mut v = a[k.key_row[i]];
            if any_y {
                for &(kc, c) in &k.key_coefs[q] {
                    v -= c * xy[kc];
                }
            }
            if v != 0.0 {
                out.push((ns + i, v));
                for &t in &self.client_rows[i] {
                    touch(t, v, &mut acc, &mut mark, &mut touched);
                }
            }
        }
        for &t in nz {
            if !mark[t] {
                mark[t] = true;
                touched.push(t);
            }
        }
        for &t in &touched {
            let lv = ns + nc + t;
            if self.status[lv] == VarStatus::Basic {
                let v = (a[t] - acc[t]) / Self::logical_coef(t);
                if v != 0.0 {
                    out.push((lv, v));
                }
            }
        }
        out
    }

    /// Solves `B^T pi = c` for a cost vector given sparsely over basic variables.
    /// Returns `pi` densely over rows together with its nonzero rows.
    fn btran(&self, c: &[(usize, f64)]) -> (Vec<f64>, Vec<usize>) {
        let k = &self.kernel;
        let (ns, nc, m) = (self.ns(), self.nc(), self.m());
        let dim = k.cols.len();
        let mut pi = vec![0.0; m];
        let mut nz = Vec::new();
        let mut g = vec![0.0; nc];
        let mut h = vec![0.0; dim];

        let mut logical_rows = Vec::new();
        for &(v, cv) in c {
            match self.var(v) {
                Var::Logical(t) => {
                    pi[t] = cv / Self::logical_coef(t);
                    logical_rows.push(t);
                }
                Var::Theta(i) => g[i] += cv,
                Var::Site(j) => h[k.col_pos[j]] += cv,
            }
        }
        for &t in &logical_rows {
            let pt = pi[t];
            if pt == 0.0 {
                continue;
            }
            nz.push(t);
            if t == 0 {
                h.iter_mut().for_each(|v| *v -= pt);
                continue;
            }
            let cl = self.row_client[t];
            if k.key_row[cl] != NONE {
                g[cl] -= pt;
            }
            for &(j, a) in self.row_coeffs(t) {
                let p = k.col_pos[j as usize];
                if p != NONE {
                    h[p] -= a * pt;
                }
            }
        }
        for (q, &i) in k.theta_basic.iter().enumerate() {
            let gi = g[i];
            if gi != 0.0 {
                for &(kc, a) in &k.key_coefs[q] {
                    h[kc] -= a * gi;
                }
            }
        }
        k.lu.solve_transpose(&mut h);
        let mut s = vec![0.0; nc];
        for (kr, &t) in k.rows.iter().enumerate() {
            let v = h[kr];
            if v != 0.0 {
                pi[t] = v;
                nz.push(t);
                if t > 0 {
                    s[self.row_client[t]] += v;
                }
            }
        }
        for &i in &k.theta_basic {
            let key = k.key_row[i];
            let v = g[i] - s[i];
            if v != 0.0 {
                pi[key] = v;
                nz.push(key);
            }
        }
        let _ = ns;
        (pi, nz)
    }

    /// Column of variable `v` as `(row, coefficient)`.
    fn column(&self, v: usize) -> Vec<(usize, f64)> {
        match self.var(v) {
            Var::Site(j) => {
                let mut col = Vec::with_capacity(1 + self.site_col[j].len());
                col.push((0, 1.0));
                col.extend_from_slice(&self.site_col[j]);
                col
            }
            Var::Theta(i) => self.client_rows[i].iter().map(|&t| (t, 1.0)).collect(),
            Var::Logical(t) => vec![(t, Self::logical_coef(t))],
        }
    }

    // ------------------------------------------------------------ recompute

    fn nonbasic_value(&self, v: usize) -> f64 {
        match self.status[v] {
            VarStatus::AtUpper => self.up(v),
            _ => self.lo(v),
        }
    }

    fn recompute_primal(&mut self) {
        let (ns, m) = (self.ns(), self.m());
        let nv = self.nv();
        let mut a: Vec<f64> = (0..m).map(|t| self.rhs(t)).collect();
        let mut x = vec![0.0; nv];
        for v in 0..nv {
            if self.status[v] == VarStatus::Basic {
                continue;
            }
            let val = self.nonbasic_value(v);
            x[v] = val;
            if val != 0.0 {
                // only sites can sit at a nonzero bound
                debug_assert!(v < ns);
                a[0] -= val;
                for &(t, c) in &self.site_col[v] {
                    a[t] -= c * val;
                }
            }
        }
        let all: Vec<usize> = (0..m).collect();
        for (v, val) in self.ftran(&a, &all) {
            x[v] = val;
        }
        self.x = x;
    }

    fn recompute_dual(&mut self) {
        let (ns, nc) = (self.ns(), self.nc());
        let mut cb: Vec<(usize, f64)> = self
            .kernel
            .theta_basic
            .iter()
            .map(|&i| (ns + i, 1.0))
            .collect();
        if !self.shift.is_empty() {
            cb.extend(self.kernel.cols.iter().map(|&j| (j, self.shift[j])));
        }
        let (pi, nz) = self.btran(&cb);
        let mut d = vec![0.0; self.nv()];
        let mut dy: Vec<f64> = (0..ns)
            .map(|j| self.shift.get(j).copied().unwrap_or(0.0) - pi[0])
            .collect();
        let mut dtheta = vec![1.0; nc];
        for &t in &nz {
            if t == 0 {
                continue;
            }
            let pt = pi[t];
            dtheta[self.row_client[t]] -= pt;
            for &(j, c) in self.row_coeffs(t) {
                dy[j as usize] -= c * pt;
            }
        }
        d[..ns].copy_from_slice(&dy);
        d[ns..ns + nc].copy_from_slice(&dtheta);
        for t in 0..self.m() {
            d[ns + nc + t] = -Self::logical_coef(t) * pi[t];
        }
        for v in 0..self.nv() {
            if self.status[v] == VarStatus::Basic {
                d[v] = 0.0;
            }
        }
        self.d = d;
    }

    fn row_duals(&self) -> Vec<f64> {
        let ns = self.ns();
        let cb: Vec<(usize, f64)> = self
            .kernel
            .theta_basic
            .iter()
            .map(|&i| (ns + i, 1.0))
            .collect();
        self.btran(&cb).0
    }

    // ---------------------------------------------------------------- solve

    pub fn solve(&mut self) -> Result<LpSolution, LpError> {
        let mut iterations = 0;
        let mut resets = 0;
        loop {
            match self.solve_inner(&mut iterations) {
                Ok(sol) => {
                    self.total_iterations += iterations;
                    debug!(
                        "lp: {} rows, {} iterations, status {:?}, objective {}",
                        self.m(),
                        iterations,
                        sol.status,
                        sol.objective
                    );
                    return Ok(sol);
                }
                Err(Restart(reason)) => {
                    resets += 1;
                    debug!("lp: restarting from the slack basis ({reason})");
                    if resets > 2 {
                        self.total_iterations += iterations;
                        return Err(LpError::SolverFailure {
                            iterations,
                            reason: reason.to_string(),
                        });
                    }
                    self.cold_basis();
                }
            }
        }
    }

    fn max_iterations(&self) -> usize {
        200 * (self.m() + self.ns() + self.nc()) + 10_000
    }

    fn prepare(&mut self) -> Result<(), Restart> {
        // statuses must be consistent with the current bounds
        for v in 0..self.nv() {
            if self.status[v] == VarStatus::AtUpper && !self.up(v).is_finite() {
                self.status[v] = VarStatus::AtLower;
            }
        }
        self.refactor().map_err(Restart)?;
        self.recompute_primal();
        self.recompute_dual();
        self.fresh = false;
        Ok(())
    }

    /// Small distinct positive costs on the sites, which break the dual
    /// degeneracy of the all-zero site costs.
    fn perturb(&mut self) {
        let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
        self.shift = (0..self.ns())
            .map(|_| {
                state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
                let mut z = state;
                z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
                z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
                z ^= z >> 31;
                PERTURBATION * (1.0 + (z >> 11) as f64 / (1u64 << 53) as f64)
            })
            .collect();
    }

    fn solve_inner(&mut self, iterations: &mut usize) -> Result<LpSolution, Restart> {
        self.perturb();
        self.prepare()?;
        // a warm basis may be dual infeasible; flip boxed sites, otherwise start cold
        if !self.make_dual_feasible() {
            self.cold_basis();
            self.prepare()?;
        }
        let max_iter = self.max_iterations();
        let mut cleanup_rounds = 0;
        loop {
            match self.dual_phase(iterations, max_iter)? {
                DualOutcome::Infeasible => {
                    self.shift.clear();
                    return Ok(LpSolution::infeasible(self.basis(), *iterations));
                }
                DualOutcome::Optimal => {}
            }
            self.refactor().map_err(Restart)?;
            self.recompute_primal();
            if self.max_primal_infeasibility().0 > FEAS_TOL {
                self.recompute_dual();
                continue;
            }
            self.shift.clear();
            self.recompute_dual();
            if self.dual_infeasible_vars().is_empty() {
                break;
            }
            cleanup_rounds += 1;
            if cleanup_rounds > 20 {
                return Err(Restart("primal cleanup does not converge"));
            }
            self.primal_phase(iterations, max_iter)?;
            self.refactor().map_err(Restart)?;
            self.recompute_primal();
            self.recompute_dual();
            if self.max_primal_infeasibility().0 <= FEAS_TOL && self.dual_infeasible_vars().is_empty() {
                break;
            }
        }
        Ok(self.extract(*iterations))
    }

    fn make_dual_feasible(&mut self) -> bool {
        let bad = self.dual_infeasible_vars();
        if bad.is_empty() {
            return true;
        }
        for v in bad {
            match self.var(v) {
                Var::Site(_) if self.up(v).is_finite() => {
                    self.status[v] = if self.d[v] < 0.0 {
                        VarStatus::AtUpper
                    } else {
                        VarStatus::AtLower
                    };
                }
                _ => return false,
            }
        }
        self.recompute_primal();
        true
    }

    fn dual_infeasible_vars(&self) -> Vec<usize> {
        (0..self.nv())
            .filter(|&v| {
                let d = self.d[v];
                match self.status[v] {
                    VarStatus::Basic => false,
                    _ if self.lo(v) == self.up(v) => false,
                    VarStatus::AtLower => d < -OPT_TOL,
                    VarStatus::AtUpper => d > OPT_TOL,
                }
            })
            .collect()
    }

    /// Largest bound violation among basic variables and the variable holding it.
    fn max_primal_infeasibility(&self) -> (f64, usize) {
        let mut best = (0.0, NONE);
        for v in 0..self.nv() {
            if self.status[v] != VarStatus::Basic {
                continue;
            }
            let x = self.x[v];
            let viol = (self.lo(v) - x).max(x - self.up(v));
            if viol > best.0 {
                best = (viol, v);
            }
        }
        best
    }

    /// Reduced cost measured towards dual infeasibility, clamped at zero.
    fn dual_slack(&self, v: usize) -> f64 {
        match self.status[v] {
            VarStatus::AtUpper => (-self.d[v]).max(0.0),
            _ => self.d[v].max(0.0),
        }
    }

    /// Leaving variable: the first infeasible one under Bland's rule,
    /// otherwise the largest squared infeasibility over its Devex weight.
    fn choose_leaving(&self, bland: bool, weights: &[f64]) -> Option<usize> {
        if bland {
            return (0..self.nv()).find(|&v| {
                self.status[v] == VarStatus::Basic
                    && (self.x[v] < self.lo(v) - FEAS_TOL || self.x[v] > self.up(v) + FEAS_TOL)
            });
        }
        let mut best = (0.0, NONE);
        for v in 0..self.nv() {
            if self.status[v] != VarStatus::Basic {
                continue;
            }
            let x = self.x[v];
            let viol = (self.lo(v) - x).max(x - self.up(v));
            if viol > FEAS_TOL {
                let score = viol * viol / weights[v];
                if score > best.0 {
                    best = (score, v);
                }
            }
        }
        (best.1 != NONE).then_some(best.1)
    }

    fn dual_phase(&mut self, iterations: &mut usize, max_iter: usize) -> Result<DualOutcome, Restart> {
        let (ns, nc, m) = (self.ns(), self.nc(), self.m());
        let mut degenerate = 0;
        let mut since_recompute = 0;
        // entering candidates that produced a singular basis for the current row
        let mut banned: Vec<usize> = Vec::new();
        let mut flips: Vec<usize> = Vec::new();
        let mut weights = vec![1.0; self.nv()];
        loop {
            let bland = degenerate >= DEGENERATE_RUN;
            let Some(p) = self.choose_leaving(bland, &weights) else {
                return Ok(DualOutcome::Optimal);
            };
            if *iterations >= max_iter {
                return Err(Restart("iteration limit"));
            }
            *iterations += 1;
            since_recompute += 1;

            let xp = self.x[p];
            let (to_upper, mut delta) = if xp > self.up(p) {
                (true, xp - self.up(p))
            } else {
                (false, xp - self.lo(p))
            };
            let sign = if to_upper { 1.0 } else { -1.0 };

            // pivot row
            let (rho, rho_nz) = self.btran(&[(p, 1.0)]);
            let mut alpha_y = vec![rho[0]; ns];
            let mut alpha_theta = vec![0.0; nc];
            for &t in &rho_nz {
                if t == 0 {
                    continue;
                }
                let r = rho[t];
                alpha_theta[self.row_client[t]] += r;
                for &(j, c) in self.row_coeffs(t) {
                    alpha_y[j as usize] += c * r;
                }
            }
            let alpha_of = |v: usize| -> f64 {
                if v < ns {
                    alpha_y[v]
                } else if v < ns + nc {
                    alpha_theta[v - ns]
                } else {
                    let t = v - ns - nc;
                    Self::logical_coef(t) * rho[t]
                }
            };

            // candidate nonbasic variables
            let mut cands: Vec<(usize, f64)> = Vec::new();
            let consider = |v: usize, cands: &mut Vec<(usize, f64)>| {
                let st = self.status[v];
                if st == VarStatus::Basic || self.lo(v) == self.up(v) || banned.contains(&v) {
                    return;
                }
                let a = alpha_of(v);
                if a.abs() <= PIVOT_TOL {
                    return;
                }
                let ok = match st {
                    VarStatus::AtLower => sign * a > 0.0,
                    VarStatus::AtUpper => sign * a < 0.0,
                    VarStatus::Basic => false,
                };
                if ok {
                    cands.push((v, a));
                }
            };
            for v in 0..ns + nc {
                consider(v, &mut cands);
            }
            for &t in &rho_nz {
                consider(ns + nc + t, &mut cands);
            }
            if cands.is_empty() {
                if !banned.is_empty() {
                    return Err(Restart("no stable pivot"));
                }
                return Ok(DualOutcome::Infeasible);
            }
            let alpha_max = cands.iter().map(|&(_, a)| a.abs()).fold(0.0, f64::max);
            cands.retain(|&(_, a)| a.abs() >= PIVOT_REL * alpha_max);

            flips.clear();
            let q = if bland {
                let min_ratio = cands
                    .iter()
                    .map(|&(v, a)| self.dual_slack(v) / a.abs())
                    .fold(f64::INFINITY, f64::min);
                cands
                    .iter()
                    .filter(|&&(v, a)| self.dual_slack(v) / a.abs() <= min_ratio * (1.0 + 1e-12) + 1e-15)
                    .map(|&(v, _)| v)
                    .min()
                    .expect("nonempty")
            } else {
                // bound flipping: pass breakpoints of boxed candidates while
                // the leaving row stays infeasible, flipping them
                let mut order: Vec<(usize, f64, f64)> =
                    cands.iter().map(|&(v, a)| (v, a, self.dual_slack(v) / a.abs())).collect();
                order.sort_by(|x, y| x.2.total_cmp(&y.2).then(x.0.cmp(&y.0)));
                let mut slope = delta.abs();
                let mut start = 0;
                while start < order.len() {
                    let (v, a, _) = order[start];
                    let drop = a.abs() * (self.up(v) - self.lo(v));
                    if !drop.is_finite() || slope - drop <= FEAS_TOL {
                        break;
                    }
                    slope -= drop;
                    start += 1;
                }
                if start == order.len() {
                    return Ok(DualOutcome::Infeasible);
                }
                flips.clear();
                flips.extend(order[..start].iter().map(|&(v, _, _)| v));
                let rest = &order[start..];
                let bound = rest
                    .iter()
                    .map(|&(v, a, _)| (self.dual_slack(v) + OPT_TOL) / a.abs())
                    .fold(f64::INFINITY, f64::min);
                let mut best = (NONE, 0.0);
                for &(v, a, r) in rest {
                    if r <= bound && a.abs() > best.1 {
                        best = (v, a.abs());
                    }
                }
                best.0
            };
            let alpha_q = alpha_of(q);

            // entering column
            let col = self.column(q);
            let mut a = vec![0.0; m];
            let mut nz = Vec::with_capacity(col.len());
            for &(t, c) in &col {
                a[t] += c;
                nz.push(t);
            }
            let dx = self.ftran(&a, &nz);
            let alpha_pq = dx.iter().find(|&&(v, _)| v == p).map_or(0.0, |&(_, v)| v);
            if (alpha_pq - alpha_q).abs() > 1e-6 * (1.0 + alpha_q.abs()) || alpha_pq.abs() <= PIVOT_TOL * 0.1 {
                trace!("pivot mismatch: row {alpha_q}, column {alpha_pq}");
                if since_recompute == 1 {
                    return Err(Restart("inconsistent pivot element"));
                }
                self.refactor().map_err(Restart)?;
                self.recompute_primal();
                self.recompute_dual();
                since_recompute = 0;
                continue;
            }

            let (status_old, x_old, d_old) = (self.status.clone(), self.x.clone(), self.d.clone());
            if !flips.is_empty() {
                let mut a = vec![0.0; m];
                let mut nz = Vec::new();
                for &v in &flips {
                    let (from, to) = match self.status[v] {
                        VarStatus::AtLower => (self.lo(v), VarStatus::AtUpper),
                        _ => (self.up(v), VarStatus::AtLower),
                    };
                    self.status[v] = to;
                    let step = self.nonbasic_value(v) - from;
                    self.x[v] += step;
                    for (t, c) in self.column(v) {
                        a[t] += c * step;
                        nz.push(t);
                    }
                }
                nz.sort_unstable();
                nz.dedup();
                for (v, val) in self.ftran(&a, &nz) {
                    self.x[v] -= val;
                }
                delta = self.x[p] - if to_upper { self.up(p) } else { self.lo(p) };
            }

            let wp = weights[p];
            for &(v, val) in &dx {
                if v != p {
                    let r = val / alpha_pq;
                    weights[v] = weights[v].max(r * r * wp);
                }
            }
            weights[q] = (wp / (alpha_pq * alpha_pq)).max(1.0);

            // dual step
            let dq = self.d[q];
            let theta_d = dq / alpha_q;
            if theta_d != 0.0 {
                for v in 0..ns + nc {
                    if self.status[v] != VarStatus::Basic {
                        let av = alpha_of(v);
                        if av != 0.0 {
                            self.d[v] -= theta_d * av;
                        }
                    }
                }
                for &t in &rho_nz {
                    let v = ns + nc + t;
                    if self.status[v] != VarStatus::Basic {
                        self.d[v] -= theta_d * alpha_of(v);
                    }
                }
            }
            self.d[p] = -theta_d;
            self.d[q] = 0.0;

            // primal step
            let theta_p = delta / alpha_pq;
            for &(v, val) in &dx {
                self.x[v] -= theta_p * val;
            }
            self.x[q] += theta_p;
            self.x[p] = if to_upper { self.up(p) } else { self.lo(p) };

            self.status[p] = if to_upper {
                VarStatus::AtUpper
            } else {
                VarStatus::AtLower
            };
            self.status[q] = VarStatus::Basic;

            let progress = (theta_d * delta).abs();
            if progress <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }

            if self.refactor().is_err() {
                trace!("singular basis after pivot {p} <- {q} (alpha {alpha_pq}), undoing it");
                self.status = status_old;
                self.refactor().map_err(Restart)?;
                self.x = x_old;
                self.d = d_old;
                banned.push(q);
                continue;
            }
            banned.clear();
            if since_recompute >= RECOMPUTE_EVERY {
                self.recompute_primal();
                self.recompute_dual();
                since_recompute = 0;
            }
        }
    }

    /// Primal simplex from a primal feasible basis, used to remove dual
    /// infeasibilities that survive the dual phase.
    fn primal_phase(&mut self, iterations: &mut usize, max_iter: usize) -> Result<(), Restart> {
        let m = self.m();
        let mut degenerate = 0;
        let mut banned: Vec<usize> = Vec::new();
        loop {
            let bad: Vec<usize> = self.dual_infeasible_vars().into_iter().filter(|v| !banned.contains(v)).collect();
            let q = if degenerate >= DEGENERATE_RUN {
                bad.first().copied()
            } else {
                bad.iter().copied().max_by(|&a, &b| {
                    self.d[a].abs().total_cmp(&self.d[b].abs()).then(b.cmp(&a))
                })
            };
            let Some(q) = q else {
                return if banned.is_empty() {
                    Ok(())
                } else {
                    Err(Restart("no stable pivot"))
                };
            };
            if *iterations >= max_iter {
                return Err(Restart("iteration limit"));
            }
            *iterations += 1;
            let dir = if self.status[q] == VarStatus::AtLower { 1.0 } else { -1.0 };
            let col = self.column(q);
            let mut a = vec![0.0; m];
            let mut nz = Vec::new();
            for &(t, c) in &col {
                a[t] += c;
                nz.push(t);
            }
            let dx = self.ftran(&a, &nz);
            // x_B moves by -dir * step * dx; two-pass Harris test
            let rate_max = dx.iter().map(|&(_, v)| v.abs()).fold(0.0, f64::max);
            let tol = PIVOT_TOL.max(PIVOT_REL * rate_max);
            let room = |v: usize, rate: f64, slack: f64| -> f64 {
                let r = if rate < 0.0 {
                    self.x[v] - self.lo(v) + slack
                } else {
                    self.up(v) - self.x[v] + slack
                };
                r.max(0.0) / rate.abs()
            };
            let mut bound = self.up(q) - self.lo(q);
            for &(v, val) in &dx {
                let rate = -dir * val;
                if rate.abs() > tol {
                    bound = bound.min(room(v, rate, FEAS_TOL));
                }
            }
            if !bound.is_finite() {
                return Err(Restart("unbounded primal ray"));
            }
            let mut leave: Option<(usize, bool)> = None;
            let mut step = self.up(q) - self.lo(q);
            let mut best_rate = 0.0;
            for &(v, val) in &dx {
                let rate = -dir * val;
                if rate.abs() > tol && room(v, rate, 0.0) <= bound && rate.abs() > best_rate {
                    best_rate = rate.abs();
                    step = room(v, rate, 0.0);
                    leave = Some((v, rate > 0.0));
                }
            }
            if step > self.up(q) - self.lo(q) {
                step = self.up(q) - self.lo(q);
                leave = None;
            }
            if step <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            let (status_old, x_old) = (self.status.clone(), self.x.clone());
            for &(v, val) in &dx {
                self.x[v] -= dir * step * val;
            }
            self.x[q] += dir * step;
            match leave {
                None => {
                    self.status[q] = if dir > 0.0 {
                        VarStatus::AtUpper
                    } else {
                        VarStatus::AtLower
                    };
                    self.x[q] = self.nonbasic_value(q);
                }
                Some((v, to_upper)) => {
                    self.status[v] = if to_upper {
                        VarStatus::AtUpper
                    } else {
                        VarStatus::AtLower
                    };
                    self.x[v] = self.nonbasic_value(v);
                    self.status[q] = VarStatus::Basic;
                    if self.refactor().is_err() {
                        trace!("singular basis in the primal phase, undoing the pivot on {q}");
                        self.status = status_old;
                        self.x = x_old;
                        self.refactor().map_err(Restart)?;
                        banned.push(q);
                        continue;
                    }
                }
            }
            banned.clear();
            self.recompute_dual();
        }
    }

    fn extract(&self, iterations: usize) -> LpSolution {
        let (ns, nc) = (self.ns(), self.nc());
        let y: Vec<f64> = (0..ns)
            .map(|j| self.x[j].clamp(self.lo(j), self.up(j)))
            .collect();
        let theta: Vec<f64> = (0..nc).map(|i| self.x[ns + i].max(0.0)).collect();
        LpSolution {
            status: LpStatus::Optimal,
            objective: theta.iter().sum(),
            y,
            theta,
            row_duals: self.row_duals(),
            reduced_costs_y: self.d[..ns].to_vec(),
            reduced_costs_theta: self.d[ns..ns + nc].to_vec(),
            y_status: self.status[..ns].to_vec(),
            basis: self.basis(),
            iterations,
        }
    }

    /// Current row activity minus right-hand side (`>= 0` when satisfied) for a cut row.
    pub fn row_slack(&self, cut: usize, y: &[f64], theta: &[f64]) -> f64 {
        let row = &self.model.rows[cut];
        theta[row.client] + row.coeffs.iter().map(|&(j, c)| c * y[j as usize]).sum::<f64>() - row.rhs
    }

    #[doc(hidden)]
    pub fn logical_index(&self, row: usize) -> usize {
        self.logical(row)
    }

    #[doc(hidden)]
    pub fn theta_index(&self, i: usize) -> usize {
        self.theta_var(i)
    }
}

#[derive(Debug)]
struct Restart(&'static str);

enum DualOutcome {
    Optimal,
    Infeasible,
}

#[cfg(test)]
mod tests;
