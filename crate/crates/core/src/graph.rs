//! Digraphs of consensus matrices, vertex connectivity, vertex cuts and structural rank.
//!
//! Vertices are 0-based. Edge `(j, i)` means agent `i` reads the state of agent `j`,
//! i.e. `A[i, j] != 0`.

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiGraph {
    n: usize,
    out: Vec<BTreeSet<usize>>,
}

impl DiGraph {
    pub fn new(n: usize) -> Self {
        Self { n, out: vec![BTreeSet::new(); n] }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::new(n);
        for &(j, i) in edges {
            g.add_edge(j, i)?;
        }
        Ok(g)
    }

    /// Edge `(j, i)` for every off-diagonal `|A[i, j]| > tol`.
    pub fn from_matrix(a: &Matrix, tol: f64) -> Self {
        let n = a.nrows();
        let mut g = Self::new(n);
        for i in 0..n {
            for j in 0..a.ncols().min(n) {
                if i != j && a[(i, j)].abs() > tol {
                    g.out[j].insert(i);
                }
            }
        }
        g
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::new(n);
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    g.out[j].insert(i);
                }
            }
        }
        g
    }

    /// Directed cycle 0 -> 1 -> ... -> n-1 -> 0.
    pub fn ring(n: usize) -> Self {
        let mut g = Self::new(n);
        for j in 0..n {
            if n > 1 {
                g.out[j].insert((j + 1) % n);
            }
        }
        g
    }

    pub fn add_edge(&mut self, j: usize, i: usize) -> Result<()> {
        if j >= self.n || i >= self.n {
            return Err(Error::InvalidSet(format!("edge ({j}, {i}) outside 0..{}", self.n)));
        }
        if i != j {
            self.out[j].insert(i);
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, j: usize, i: usize) -> bool {
        self.out.get(j).is_some_and(|s| s.contains(&i))
    }

    pub fn out_neighbors(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.out[j].iter().copied()
    }

    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.has_edge(j, i)).collect()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|j| self.out[j].iter().map(move |&i| (j, i)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(|s| s.len()).sum()
    }

    /// Vertices reachable from `start` avoiding `removed`.
    pub fn reachable_from(&self, start: usize, removed: &BTreeSet<usize>) -> BTreeSet<usize> {
        self.search(start, removed, true)
    }

    /// Vertices that can reach `target` avoiding `removed`.
    pub fn reaching(&self, target: usize, removed: &BTreeSet<usize>) -> BTreeSet<usize> {
        self.search(target, removed, false)
    }

    fn search(&self, start: usize, removed: &BTreeSet<usize>, forward: bool) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        if removed.contains(&start) {
            return seen;
        }
        let mut queue = VecDeque::from([start]);
        seen.insert(start);
        while let Some(v) = queue.pop_front() {
            let next: Vec<usize> = if forward {
                self.out[v].iter().copied().collect()
            } else {
                self.in_neighbors(v)
            };
            for w in next {
                if !removed.contains(&w) && seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    /// Strong connectivity of the graph with `removed` deleted (vacuously true below 2 vertices).
    pub fn strongly_connected_without(&self, removed: &BTreeSet<usize>) -> bool {
        let Some(start) = (0..self.n).find(|v| !removed.contains(v)) else {
            return true;
        };
        let remaining = self.n - removed.len();
        self.reachable_from(start, removed).len() == remaining
            && self.reaching(start, removed).len() == remaining
    }

    pub fn is_strongly_connected(&self) -> bool {
        self.strongly_connected_without(&BTreeSet::new())
    }

    /// Parse `n` followed by one `j i` pair per line (1-based ids).
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let n: usize = lines
            .next()
            .ok_or_else(|| Error::Parse("empty edge list".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("vertex count: {e}")))?;
        let mut g = Self::new(n);
        for (k, line) in lines.enumerate() {
            let ids: Vec<usize> = line
                .split_whitespace()
                .map(|s| s.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("edge line {}: {e}", k + 2)))?;
            match ids.as_slice() {
                [j, i] if *j >= 1 && *i >= 1 => g.add_edge(j - 1, i - 1)?,
                _ => return Err(Error::Parse(format!("edge line {}: expected `j i` with ids >= 1", k + 2))),
            }
        }
        Ok(g)
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = format!("{}\n", self.n);
        for (j, i) in self.edges() {
            s.push_str(&format!("{} {}\n", j + 1, i + 1));
        }
        s
    }
}

/// Unit-capacity max-flow on a split graph (`v_in = 2v`, `v_out = 2v + 1`).
struct FlowNetwork {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<i64>,
}

const INF: i64 = i64::MAX / 4;

impl FlowNetwork {
    fn new(nodes: usize) -> Self {
        Self { head: vec![Vec::new(); nodes], to: Vec::new(), cap: Vec::new() }
    }

    fn add(&mut self, u: usize, v: usize, c: i64) {
        self.head[u].push(self.to.len());
        self.to.push(v);
        self.cap.push(c);
        self.head[v].push(self.to.len());
        self.to.push(u);
        self.cap.push(0);
    }

    /// Split network for `g`: vertex arcs of capacity 1 except for `unbounded`.
    fn split(g: &DiGraph, extra: usize, unbounded: &[usize]) -> Self {
        let mut f = Self::new(2 * g.n + extra);
        for v in 0..g.n {
            let c = if unbounded.contains(&v) { INF } else { 1 };
            f.add(2 * v, 2 * v + 1, c);
        }
        for (j, i) in g.edges() {
            f.add(2 * j + 1, 2 * i, INF);
        }
        f
    }

    /// Edmonds-Karp; returns the flow value.
    fn max_flow(&mut self, s: usize, t: usize) -> i64 {
        let mut total = 0;
        loop {
            let mut prev = vec![usize::MAX; self.head.len()];
            let mut queue = VecDeque::from([s]);
            prev[s] = usize::MAX - 1;
            while let Some(u) = queue.pop_front() {
                if u == t {
                    break;
                }
                for &e in &self.head[u] {
                    let v = self.to[e];
                    if self.cap[e] > 0 && prev[v] == usize::MAX {
                        prev[v] = e;
                        queue.push_back(v);
                    }
                }
            }
            if prev[t] == usize::MAX {
                return total;
            }
            let mut push = INF;
            let mut v = t;
            while v != s {
                let e = prev[v];
                push = push.min(self.cap[e]);
                v = self.to[e ^ 1];
            }
            let mut v = t;
            while v != s {
                let e = prev[v];
                self.cap[e] -= push;
                self.cap[e ^ 1] += push;
                v = self.to[e ^ 1];
            }
            total += push;
            if total >= INF {
                return total;
            }
        }
    }

    fn residual_reachable(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.head.len()];
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.head[u] {
                let v = self.to[e];
                if self.cap[e] > 0 && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }
}

/// Maximum number of internally vertex-disjoint `s -> t` paths (`s -> t` not an edge).
pub fn local_connectivity(g: &DiGraph, s: usize, t: usize) -> usize {
    let mut f = FlowNetwork::split(g, 0, &[s, t]);
    f.max_flow(2 * s + 1, 2 * t) as usize
}

/// Minimum vertex set separating `s` from `t`, from a max-flow min-cut.
fn min_vertex_separator(g: &DiGraph, s: usize, t: usize) -> BTreeSet<usize> {
    let mut f = FlowNetwork::split(g, 0, &[s, t]);
    f.max_flow(2 * s + 1, 2 * t);
    let seen = f.residual_reachable(2 * s + 1);
    (0..g.n).filter(|&v| seen[2 * v] && !seen[2 * v + 1]).collect()
}

/// Vertex connectivity: minimum over non-adjacent ordered pairs of the local connectivity;
/// `n - 1` for complete digraphs and 0 when not strongly connected.
pub fn vertex_connectivity(g: &DiGraph) -> usize {
    let n = g.n;
    if n <= 1 || !g.is_strongly_connected() {
        return 0;
    }
    let mut best = n - 1;
    for s in 0..n {
        for t in 0..n {
            if s != t && !g.has_edge(s, t) {
                best = best.min(local_connectivity(g, s, t));
            }
        }
    }
    best
}

/// Vertex cut and the two sides it leaves behind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VertexCut {
    pub cut: BTreeSet<usize>,
    /// Vertices reachable from the source side after removal.
    pub source_side: BTreeSet<usize>,
    /// Remaining vertices; no edge leads into them from `source_side`.
    pub other_side: BTreeSet<usize>,
}

/// A cut of exactly `k` vertices whose removal leaves the graph not strongly connected,
/// or `None` when the connectivity exceeds `k` (or too few vertices remain).
pub fn find_vertex_cut(g: &DiGraph, k: usize) -> Option<VertexCut> {
    let n = g.n;
    if n < 2 || k > n - 2 {
        return None;
    }
    let mut chosen: Option<(BTreeSet<usize>, usize, usize)> = None;
    if !g.is_strongly_connected() {
        let s = (0..n).find(|&s| g.reachable_from(s, &BTreeSet::new()).len() < n)?;
        let t = (0..n).find(|v| !g.reachable_from(s, &BTreeSet::new()).contains(v))?;
        chosen = Some((BTreeSet::new(), s, t));
    } else {
        'outer: for s in 0..n {
            for t in 0..n {
                if s != t && !g.has_edge(s, t) && local_connectivity(g, s, t) <= k {
                    chosen = Some((min_vertex_separator(g, s, t), s, t));
                    break 'outer;
                }
            }
        }
    }
    let (mut cut, s, t) = chosen?;
    for v in 0..n {
        if cut.len() >= k {
            break;
        }
        if v != s && v != t {
            cut.insert(v);
        }
    }
    if cut.len() != k {
        return None;
    }
    let source_side = g.reachable_from(s, &cut);
    let other_side: BTreeSet<usize> = (0..n)
        .filter(|v| !cut.contains(v) && !source_side.contains(v))
        .collect();
    debug_assert!(other_side.contains(&t));
    Some(VertexCut { cut, source_side, other_side })
}

/// Maximum number of vertex-disjoint paths from `sources` to `sinks`.
pub fn disjoint_path_count(g: &DiGraph, sources: &[usize], sinks: &[usize]) -> usize {
    let super_s = 2 * g.n;
    let super_t = 2 * g.n + 1;
    let mut f = FlowNetwork::split(g, 2, &[]);
    for &s in sources {
        f.add(super_s, 2 * s, INF);
    }
    for &t in sinks {
        f.add(2 * t + 1, super_t, INF);
    }
    f.max_flow(super_s, super_t) as usize
}

/// Structured matrix: positions holding free parameters; all others are fixed zeros.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructurePattern {
    pub rows: usize,
    pub cols: usize,
    pub free: BTreeSet<(usize, usize)>,
}

impl StructurePattern {
    pub fn new(rows: usize, cols: usize, free: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let free: BTreeSet<_> = free.into_iter().collect();
        if let Some(&(r, c)) = free.iter().find(|(r, c)| *r >= rows || *c >= cols) {
            return Err(Error::Dimension(format!("free position ({r}, {c}) outside {rows}x{cols}")));
        }
        Ok(Self { rows, cols, free })
    }

    pub fn from_matrix(m: &Matrix, tol: f64) -> Self {
        let free = (0..m.nrows())
            .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
            .filter(|&(r, c)| m[(r, c)].abs() > tol)
            .collect();
        Self { rows: m.nrows(), cols: m.ncols(), free }
    }

    /// Numerical realization with free entries uniform on [0.1, 1].
    pub fn realize<R: Rng>(&self, rng: &mut R) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for &(r, c) in &self.free {
            m[(r, c)] = rng.random_range(0.1..=1.0);
        }
        m
    }

    /// Digraph of a square pattern.
    pub fn graph(&self) -> DiGraph {
        let mut g = DiGraph::new(self.rows);
        for &(i, j) in &self.free {
            if i != j && i < self.rows && j < self.rows {
                g.out[j].insert(i);
            }
        }
        g
    }
}

/// Generic rank: maximum matching between rows and columns over free positions.
pub fn structural_generic_rank(p: &StructurePattern) -> usize {
    let mut adj = vec![Vec::new(); p.rows];
    for &(r, c) in &p.free {
        adj[r].push(c);
    }
    let mut match_col: Vec<Option<usize>> = vec![None; p.cols];
    let mut size = 0;
    for r in 0..p.rows {
        let mut visited = vec![false; p.cols];
        if augment(r, &adj, &mut visited, &mut match_col) {
            size += 1;
        }
    }
    size
}

fn augment(r: usize, adj: &[Vec<usize>], visited: &mut [bool], match_col: &mut [Option<usize>]) -> bool {
    for &c in &adj[r] {
        if visited[c] {
            continue;
        }
        visited[c] = true;
        if match_col[c].is_none_or(|r2| augment(r2, adj, visited, match_col)) {
            match_col[c] = Some(r);
            return true;
        }
    }
    false
}

/// Connectivity condition under which almost every realization has no zero dynamics:
/// the graph of `a_pat` is k-connected with `generic_rank(b_pat) < k`.
pub fn generically_no_zero_dynamics(
    a_pat: &StructurePattern,
    b_pat: &StructurePattern,
    c_pat: &StructurePattern,
) -> Result<bool> {
    let n = a_pat.rows;
    if a_pat.cols != n || b_pat.rows != n || c_pat.cols != n {
        return Err(Error::Dimension(format!(
            "patterns A {}x{}, B {}x{}, C {}x{}",
            a_pat.rows, a_pat.cols, b_pat.rows, b_pat.cols, c_pat.rows, c_pat.cols
        )));
    }
    let k = vertex_connectivity(&a_pat.graph());
    Ok(structural_generic_rank(b_pat) < k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResilienceReport {
    pub connectivity: usize,
    pub max_generic_faulty: usize,
    pub max_generic_malicious: usize,
}

pub fn resilience_bounds(g: &DiGraph) -> ResilienceReport {
    let k = vertex_connectivity(g);
    ResilienceReport {
        connectivity: k,
        max_generic_faulty: k.saturating_sub(1),
        max_generic_malicious: k.saturating_sub(1) / 2,
    }
}

/// Random symmetric graph on `n` vertices with vertex connectivity at least `k`
/// (rejection sampling over edge densities).
pub fn random_k_connected_graph<R: Rng>(n: usize, k: usize, rng: &mut R) -> Result<DiGraph> {
    if k >= n {
        return Err(Error::Precondition(format!("{k}-connectivity impossible on {n} vertices")));
    }
    for _ in 0..10_000 {
        let p = rng.random_range(0.35..0.75);
        let mut g = DiGraph::new(n);
        for a in 0..n {
            for b in (a + 1)..n {
                if rng.random::<f64>() < p {
                    g.out[a].insert(b);
                    g.out[b].insert(a);
                }
            }
        }
        if vertex_connectivity(&g) >= k {
            return Ok(g);
        }
    }
    Err(Error::Precondition(format!("no {k}-connected sample on {n} vertices")))
}
