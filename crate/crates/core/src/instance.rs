//! Problem data: benchmark readers, the distance matrix and the per-client
//! sorted-distance tables consumed by the separation routines.
//!
//! Indices are 0-based throughout. Distance ranks are 0-based as well, so
//! `distinct(i)[0]` is the smallest distance from client `i` to any site.

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Integer distance. Every objective value of a 0/1 solution is an exact sum of these.
pub type Dist = i64;

/// Largest accepted `n_clients * n_sites`. The nearest-site permutation and
/// the rank table take 8 bytes per entry on top of the matrix itself, so this
/// caps preprocessing memory at roughly 1.2 GB.
pub const MAX_MATRIX_ENTRIES: usize = 64_000_000;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("graph is disconnected: no path between vertices {from} and {to} (1-based)")]
    Disconnected { from: usize, to: usize },
    #[error("unsupported EDGE_WEIGHT_TYPE `{0}` (only EUC_2D is supported)")]
    UnsupportedEdgeWeight(String),
    #[error("missing coordinates: expected {expected} nodes, found {found}")]
    MissingCoordinates { expected: usize, found: usize },
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn parse_err(line: usize, msg: impl Into<String>) -> InstanceError {
    InstanceError::Parse {
        line,
        msg: msg.into(),
    }
}

/// An N-client, M-site p-median instance with a dense (possibly asymmetric) distance matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    #[serde(default)]
    pub name: String,
    pub n_clients: usize,
    pub n_sites: usize,
    pub p: usize,
    /// Row-major `n_clients x n_sites` matrix.
    pub dist: Vec<Dist>,
}

impl Instance {
    pub fn new(
        name: impl Into<String>,
        n_clients: usize,
        n_sites: usize,
        p: usize,
        dist: Vec<Dist>,
    ) -> Result<Self, InstanceError> {
        let inst = Instance {
            name: name.into(),
            n_clients,
            n_sites,
            p,
            dist,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Builds an instance from a square or rectangular matrix given row by row.
    pub fn from_rows(
        name: impl Into<String>,
        rows: &[Vec<Dist>],
        p: usize,
    ) -> Result<Self, InstanceError> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(InstanceError::Invalid("rows have different lengths".into()));
        }
        Instance::new(name, n, m, p, rows.concat())
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        if self.n_clients == 0 || self.n_sites == 0 {
            return Err(InstanceError::Invalid("empty instance".into()));
        }
        if self.n_clients.saturating_mul(self.n_sites) > MAX_MATRIX_ENTRIES {
            return Err(InstanceError::Invalid(format!(
                "{} x {} exceeds the supported matrix size of {} entries",
                self.n_clients, self.n_sites, MAX_MATRIX_ENTRIES
            )));
        }
        if self.dist.len() != self.n_clients * self.n_sites {
            return Err(InstanceError::Invalid(format!(
                "matrix has {} entries, expected {} x {}",
                self.dist.len(),
                self.n_clients,
                self.n_sites
            )));
        }
        if self.p == 0 || self.p > self.n_sites {
            return Err(InstanceError::Invalid(format!(
                "p = {} must lie in [1, {}]",
                self.p, self.n_sites
            )));
        }
        if let Some(pos) = self.dist.iter().position(|&d| d < 0) {
            return Err(InstanceError::Invalid(format!(
                "negative distance at client {}, site {}",
                pos / self.n_sites,
                pos % self.n_sites
            )));
        }
        Ok(())
    }

    /// Same matrix with a different number of medians.
    pub fn with_p(&self, p: usize) -> Result<Self, InstanceError> {
        let mut inst = self.clone();
        inst.p = p;
        inst.validate()?;
        Ok(inst)
    }

    #[inline]
    pub fn d(&self, client: usize, site: usize) -> Dist {
        self.dist[client * self.n_sites + site]
    }

    #[inline]
    pub fn row(&self, client: usize) -> &[Dist] {
        &self.dist[client * self.n_sites..(client + 1) * self.n_sites]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("instance serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let inst: Instance = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }

    /// Dense text form: first line `n`, then `n` rows of `n` integers.
    /// Only square instances have a dense text form.
    pub fn to_dense_text(&self) -> Result<String, InstanceError> {
        if self.n_clients != self.n_sites {
            return Err(InstanceError::Invalid(
                "dense text format requires a square matrix".into(),
            ));
        }
        let mut out = format!("{}\n", self.n_clients);
        for i in 0..self.n_clients {
            let line: Vec<String> = self.row(i).iter().map(Dist::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        Ok(out)
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
        }
    }

    /// Next non-blank line with its 1-based number.
    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        self.inner
            .by_ref()
            .map(|(n, l)| (n + 1, l.trim()))
            .find(|(_, l)| !l.is_empty())
    }
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T, InstanceError> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("invalid {what} `{tok}`")))
}

/// Reads an OR-Library `pmed` file: header `N E p`, then `E` lines `u v cost`
/// with 1-based vertices. The graph is undirected; when an edge is listed more
/// than once the last cost wins. Distances are all-pairs shortest paths.
pub fn parse_orlib(text: &str) -> Result<Instance, InstanceError> {
    let mut lines = Lines::new(text);
    let (hline, header) = lines
        .next_content()
        .ok_or_else(|| parse_err(1, "empty file"))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 3 {
        return Err(parse_err(hline, "expected header `N E p`"));
    }
    let n: usize = parse_num(toks[0], hline, "vertex count")?;
    let e: usize = parse_num(toks[1], hline, "edge count")?;
    let p: usize = parse_num(toks[2], hline, "p")?;
    if n == 0 {
        return Err(parse_err(hline, "vertex count must be positive"));
    }
    if n.saturating_mul(n) > MAX_MATRIX_ENTRIES {
        return Err(parse_err(hline, format!("{n} vertices exceed the size guard")));
    }

    const INF: Dist = Dist::MAX / 4;
    let mut dist = vec![INF; n * n];
    for v in 0..n {
        dist[v * n + v] = 0;
    }
    let mut seen = 0;
    while seen < e {
        let (ln, line) = lines
            .next_content()
            .ok_or_else(|| parse_err(hline, format!("expected {e} edges, found {seen}")))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(parse_err(ln, "expected edge line `u v cost`"));
        }
        let u: usize = parse_num(toks[0], ln, "vertex")?;
        let v: usize = parse_num(toks[1], ln, "vertex")?;
        let c: Dist = parse_num(toks[2], ln, "cost")?;
        if u == 0 || v == 0 || u > n || v > n {
            return Err(parse_err(ln, format!("vertex out of range 1..={n}")));
        }
        if c < 0 {
            return Err(parse_err(ln, "negative edge cost"));
        }
        if u != v {
            dist[(u - 1) * n + (v - 1)] = c;
            dist[(v - 1) * n + (u - 1)] = c;
        }
        seen += 1;
    }

    floyd_warshall(&mut dist, n);

    if let Some(pos) = dist.iter().position(|&d| d >= INF) {
        return Err(InstanceError::Disconnected {
            from: pos / n + 1,
            to: pos % n + 1,
        });
    }
    Instance::new("", n, n, p, dist)
}

fn floyd_warshall(dist: &mut [Dist], n: usize) {
    let mut row_k = vec![0; n];
    for k in 0..n {
        row_k.copy_from_slice(&dist[k * n..(k + 1) * n]);
        for i in 0..n {
            let dik = dist[i * n + k];
            let row_i = &mut dist[i * n..(i + 1) * n];
            for (dij, &dkj) in row_i.iter_mut().zip(&row_k) {
                let via = dik + dkj;
                if via < *dij {
                    *dij = via;
                }
            }
        }
    }
}

/// Reads a TSPLIB file with `EDGE_WEIGHT_TYPE: EUC_2D`. Distances are the
/// Euclidean distance rounded down (not to the nearest integer as TSPLIB
/// itself prescribes).
pub fn parse_tsplib(text: &str, p: usize) -> Result<Instance, InstanceError> {
    let mut lines = Lines::new(text);
    let mut name = String::new();
    let mut dimension: Option<usize> = None;
    let mut weight_type: Option<String> = None;
    let mut coords: Vec<(f64, f64)> = Vec::new();
    let mut section_line = 0;

    while let Some((ln, line)) = lines.next_content() {
        if line == "EOF" {
            break;
        }
        if line.starts_with("NODE_COORD_SECTION") {
            section_line = ln;
            let dim = dimension.ok_or_else(|| parse_err(ln, "DIMENSION must precede NODE_COORD_SECTION"))?;
            match weight_type.as_deref() {
                Some("EUC_2D") => {}
                Some(other) => return Err(InstanceError::UnsupportedEdgeWeight(other.to_string())),
                None => return Err(parse_err(ln, "EDGE_WEIGHT_TYPE must precede NODE_COORD_SECTION")),
            }
            coords.reserve(dim);
            while coords.len() < dim {
                let Some((cl, cline)) = lines.next_content() else {
                    break;
                };
                if cline == "EOF" {
                    break;
                }
                let toks: Vec<&str> = cline.split_whitespace().collect();
                if toks.len() < 3 {
                    return Err(parse_err(cl, "expected `id x y`"));
                }
                let x: f64 = parse_num(toks[1], cl, "coordinate")?;
                let y: f64 = parse_num(toks[2], cl, "coordinate")?;
                coords.push((x, y));
            }
            break;
        }
        let Some((key, value)) = line.split_once(':') else {
            return Err(parse_err(ln, format!("unrecognized line `{line}`")));
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "NAME" => name = value.to_string(),
            "DIMENSION" => dimension = Some(parse_num(value, ln, "DIMENSION")?),
            "EDGE_WEIGHT_TYPE" => {
                if value != "EUC_2D" {
                    return Err(InstanceError::UnsupportedEdgeWeight(value.to_string()));
                }
                weight_type = Some(value.to_string());
            }
            _ => {}
        }
    }

    let dim = dimension.ok_or_else(|| parse_err(1, "missing DIMENSION"))?;
    if section_line == 0 || coords.len() < dim {
        return Err(InstanceError::MissingCoordinates {
            expected: dim,
            found: coords.len(),
        });
    }
    if dim.saturating_mul(dim) > MAX_MATRIX_ENTRIES {
        return Err(parse_err(1, format!("{dim} nodes exceed the size guard")));
    }
    let mut dist = vec![0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            dist[i * dim + j] = floor_euclid(coords[i], coords[j]);
        }
    }
    Instance::new(name, dim, dim, p, dist)
}

/// `floor(sqrt(dx^2 + dy^2))`, corrected for floating-point error when the
/// squared distance is integral.
pub fn floor_euclid(a: (f64, f64), b: (f64, f64)) -> Dist {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    let sq = dx * dx + dy * dy;
    let mut r = sq.sqrt().floor() as Dist;
    if sq.fract() == 0.0 && sq < 9.0e15 {
        let s = sq as i128;
        while (r as i128) * (r as i128) > s {
            r -= 1;
        }
        while ((r + 1) as i128) * ((r + 1) as i128) <= s {
            r += 1;
        }
    }
    r
}

/// Reads a dense matrix: first token `n`, then `n * n` integers row by row.
pub fn parse_dense(text: &str, p: usize) -> Result<Instance, InstanceError> {
    let mut lines = Lines::new(text);
    let (hl, header) = lines
        .next_content()
        .ok_or_else(|| parse_err(1, "empty file"))?;
    let n: usize = parse_num(header.split_whitespace().next().unwrap_or(""), hl, "size")?;
    if n.saturating_mul(n) > MAX_MATRIX_ENTRIES {
        return Err(parse_err(hl, format!("{n} exceeds the size guard")));
    }
    let mut dist = Vec::with_capacity(n * n);
    let mut last_line = hl;
    while dist.len() < n * n {
        let Some((ln, line)) = lines.next_content() else {
            break;
        };
        last_line = ln;
        for tok in line.split_whitespace() {
            dist.push(parse_num::<Dist>(tok, ln, "distance")?);
        }
    }
    if dist.len() != n * n {
        return Err(parse_err(
            last_line,
            format!("expected {} entries, found {}", n * n, dist.len()),
        ));
    }
    Instance::new("", n, n, p, dist)
}

/// Random asymmetric instance: every entry (the diagonal included) drawn
/// independently and uniformly from `[1, n]` with a ChaCha8 stream seeded by `seed`.
pub fn generate_rw(n: usize, p: usize, seed: u64) -> Result<Instance, InstanceError> {
    if n < 2 {
        return Err(InstanceError::Argument(format!("n = {n} must be at least 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let upper = n as Dist;
    let dist = (0..n * n).map(|_| rng.gen_range(1..=upper)).collect();
    Instance::new(format!("rw{n}-{seed}"), n, n, p, dist)
}

/// Per-client sorted distance structures.
///
/// For client `i`: `distinct(i)` is strictly increasing and lists the values
/// of row `i`; `order(i)` lists the sites by non-decreasing distance (ties by
/// site index); `rank(i, j)` is the position of `d(i, j)` in `distinct(i)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Preprocessed {
    n_clients: usize,
    n_sites: usize,
    offsets: Vec<usize>,
    distinct: Vec<Dist>,
    order: Vec<u32>,
    rank: Vec<u32>,
    dist: Vec<Dist>,
}

impl Preprocessed {
    pub fn new(inst: &Instance) -> Self {
        let (n, m) = (inst.n_clients, inst.n_sites);
        let mut offsets = Vec::with_capacity(n + 1);
        let mut distinct = Vec::new();
        let mut order = vec![0u32; n * m];
        let mut rank = vec![0u32; n * m];
        offsets.push(0);
        let mut idx: Vec<u32> = Vec::with_capacity(m);
        for i in 0..n {
            let row = inst.row(i);
            idx.clear();
            idx.extend(0..m as u32);
            idx.sort_by_key(|&j| (row[j as usize], j));
            let mut k = 0u32;
            let mut last = None;
            for (r, &j) in idx.iter().enumerate() {
                let d = row[j as usize];
                if let Some(prev) = last {
                    if d != prev {
                        k += 1;
                    }
                }
                if last != Some(d) {
                    distinct.push(d);
                    last = Some(d);
                }
                order[i * m + r] = j;
                rank[i * m + j as usize] = k;
            }
            offsets.push(distinct.len());
        }
        Preprocessed {
            n_clients: n,
            n_sites: m,
            offsets,
            distinct,
            order,
            rank,
            dist: inst.dist.clone(),
        }
    }

    pub fn n_clients(&self) -> usize {
        self.n_clients
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// Number of distinct distances from client `i` (K_i).
    #[inline]
    pub fn k_count(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Total number of distinct (client, distance) pairs (K).
    pub fn k_total(&self) -> usize {
        self.distinct.len()
    }

    #[inline]
    pub fn distinct(&self, i: usize) -> &[Dist] {
        &self.distinct[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Sites sorted by distance from client `i`.
    #[inline]
    pub fn order(&self, i: usize) -> &[u32] {
        &self.order[i * self.n_sites..(i + 1) * self.n_sites]
    }

    #[inline]
    pub fn rank(&self, i: usize, j: usize) -> usize {
        self.rank[i * self.n_sites + j] as usize
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize) -> Dist {
        self.dist[i * self.n_sites + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[Dist] {
        &self.dist[i * self.n_sites..(i + 1) * self.n_sites]
    }
}

impl fmt::Display for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = if self.name.is_empty() { "<unnamed>" } else { &self.name };
        write!(f, "{name} (N={}, M={}, p={})", self.n_clients, self.n_sites, self.p)
    }
}
