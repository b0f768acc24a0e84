//! Inhomogeneous random graphs, chromatic numbers and maximum average degree.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

pub const CHROMATIC_EXACT_CAP: usize = 30;
pub const CHROMATIC_TIME_BUDGET: Duration = Duration::from_secs(10);
pub const MAD_SIZE_LIMIT: usize = 200;

/// Symmetric edge probabilities with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeProbabilityMatrix {
    n: usize,
    p: Vec<f64>,
    mean: f64,
}

impl EdgeProbabilityMatrix {
    pub fn new(n: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != n * n {
            return Err(Error::invalid(format!("{n}x{n} matrix needs {} entries", n * n)));
        }
        for i in 0..n {
            if p[i * n + i] != 0.0 {
                return Err(Error::invalid(format!("diagonal entry {i} is nonzero")));
            }
            for j in 0..n {
                let v = p[i * n + j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::invalid(format!("entry ({i}, {j}) = {v} outside [0, 1]")));
                }
                if v != p[j * n + i] {
                    return Err(Error::invalid(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        let pairs = n * n.saturating_sub(1) / 2;
        let total: f64 = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| p[i * n + j]).sum();
        let mean = if pairs == 0 { 0.0 } else { total / pairs as f64 };
        Ok(Self { n, p, mean })
    }

    /// Builds the matrix from `f(i, j)` for `i < j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut p = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                p[i * n + j] = v;
                p[j * n + i] = v;
            }
        }
        Self::new(n, p)
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::from_fn(n, |_, _| value)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    /// Average over unordered pairs.
    pub fn mean(&self) -> f64 {
        self.mean
    }
}

/// Simple undirected graph with bit-set adjacency rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    words: usize,
    rows: Vec<u64>,
    pub seed: Option<u64>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        Self {
            n,
            words,
            rows: vec![0; n * words],
            seed: None,
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(n);
        for &(u, v) in edges {
            if u >= n || v >= n || u == v {
                return Err(Error::invalid(format!("bad edge ({u}, {v}) for {n} vertices")));
            }
            g.add_edge(u, v);
        }
        Ok(g)
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Self::empty(n);
        for u in 0..n {
            for v in u + 1..n {
                g.add_edge(u, v);
            }
        }
        g
    }

    pub fn cycle(n: usize) -> Self {
        let mut g = Self::empty(n);
        for u in 0..n {
            g.add_edge(u, (u + 1) % n);
        }
        g
    }

    pub fn petersen() -> Self {
        let mut edges = Vec::new();
        for i in 0..5 {
            edges.push((i, (i + 1) % 5));
            edges.push((i, i + 5));
            edges.push((5 + i, 5 + (i + 2) % 5));
        }
        Self::from_edges(10, &edges).expect("valid edges")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn add_edge(&mut self, u: usize, v: usize) {
        self.rows[u * self.words + v / 64] |= 1 << (v % 64);
        self.rows[v * self.words + u / 64] |= 1 << (u % 64);
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.rows[u * self.words + v / 64] >> (v % 64) & 1 == 1
    }

    pub fn degree(&self, u: usize) -> usize {
        self.rows[u * self.words..(u + 1) * self.words]
            .iter()
            .map(|w| w.count_ones() as usize)
            .sum()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|u| self.degree(u)).max().unwrap_or(0)
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|u| (u + 1..self.n).map(move |v| (u, v)))
            .filter(|&(u, v)| self.has_edge(u, v))
            .collect()
    }

    /// The realized 0/1 adjacency as an edge-probability matrix.
    pub fn as_matrix(&self) -> EdgeProbabilityMatrix {
        EdgeProbabilityMatrix::from_fn(self.n, |i, j| f64::from(u8::from(self.has_edge(i, j))))
            .expect("adjacency is a valid matrix")
    }

    fn neighbour_mask(&self, u: usize) -> u64 {
        debug_assert!(self.n <= 64);
        self.rows[u * self.words]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        writeln!(out, "# n={} seed={seed}", self.n).map_err(|e| Error::io("<graph>", e))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["u", "v"])?;
        for (u, v) in self.edges() {
            w.write_record(&[u.to_string(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<graph>", e))?;
        Ok(())
    }
}

/// Every edge `{i, j}` present independently with probability `p_ij`.
pub fn sample_graph(p: &EdgeProbabilityMatrix, seed: u64) -> Graph {
    let mut rng = rng::stream_for(seed, 0, "graphs.edges");
    let mut g = Graph::empty(p.n());
    for i in 0..p.n() {
        for j in i + 1..p.n() {
            if rng.random::<f64>() < p.get(i, j) {
                g.add_edge(i, j);
            }
        }
    }
    g.seed = Some(seed);
    g
}

/// First-fit colouring along `order`; returns the number of colours.
pub fn chromatic_greedy(g: &Graph, order: &[usize]) -> Result<usize> {
    let n = g.n();
    let mut seen = vec![false; n];
    if order.len() != n || order.iter().any(|&v| v >= n || std::mem::replace(&mut seen[v], true)) {
        return Err(Error::invalid("greedy colouring order is not a permutation"));
    }
    let mut colour = vec![usize::MAX; n];
    let mut used = 0;
    for &v in order {
        let mut taken = vec![false; used + 1];
        for u in 0..n {
            if g.has_edge(u, v) && colour[u] != usize::MAX {
                taken[colour[u]] = true;
            }
        }
        let c = taken.iter().position(|t| !t).expect("one free colour");
        colour[v] = c;
        used = used.max(c + 1);
    }
    Ok(used.max(usize::from(n > 0)))
}

struct Dsatur<'a> {
    g: &'a Graph,
    adj: Vec<u64>,
    colour: Vec<usize>,
    /// Per vertex, bit mask of colours used by coloured neighbours.
    saturation: Vec<u64>,
    best: usize,
    /// Known lower bound; the search stops once `best` reaches it.
    floor: usize,
    nodes: u64,
    deadline: Instant,
    budget: Duration,
}

impl Dsatur<'_> {
    fn pick(&self) -> Option<usize> {
        (0..self.g.n())
            .filter(|&v| self.colour[v] == usize::MAX)
            .max_by_key(|&v| {
                let uncoloured_deg = (self.adj[v] & self.uncoloured_mask()).count_ones();
                (self.saturation[v].count_ones(), uncoloured_deg, std::cmp::Reverse(v))
            })
    }

    fn uncoloured_mask(&self) -> u64 {
        (0..self.g.n())
            .filter(|&v| self.colour[v] == usize::MAX)
            .fold(0, |m, v| m | 1 << v)
    }

    fn search(&mut self, used: usize) -> Result<()> {
        self.nodes += 1;
        if self.nodes % 1024 == 1 && Instant::now() >= self.deadline {
            return Err(Error::Timeout(self.budget));
        }
        let Some(v) = self.pick() else {
            self.best = self.best.min(used);
            return Ok(());
        };
        let limit = (used + 1).min(self.best - 1);
        for c in 0..limit {
            if self.saturation[v] >> c & 1 == 1 {
                continue;
            }
            let touched: Vec<(usize, u64)> = (0..self.g.n())
                .filter(|&u| self.adj[v] >> u & 1 == 1)
                .map(|u| (u, self.saturation[u]))
                .collect();
            self.colour[v] = c;
            for &(u, _) in &touched {
                self.saturation[u] |= 1 << c;
            }
            self.search(used.max(c + 1))?;
            for (u, s) in touched {
                self.saturation[u] = s;
            }
            self.colour[v] = usize::MAX;
            if self.best <= used.max(self.floor) {
                break;
            }
        }
        Ok(())
    }
}

/// Greedy clique: a cheap lower bound on the chromatic number.
fn greedy_clique(g: &Graph) -> usize {
    let n = g.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| std::cmp::Reverse(g.degree(v)));
    let mut best = usize::from(n > 0);
    for &start in &order {
        let mut clique = vec![start];
        for &v in &order {
            if v != start && clique.iter().all(|&u| g.has_edge(u, v)) {
                clique.push(v);
            }
        }
        best = best.max(clique.len());
    }
    best
}

/// Exact chromatic number by DSATUR branch and bound, seeded with the DSATUR
/// greedy colouring as upper bound and a greedy clique as lower bound.
pub fn chromatic_exact(g: &Graph) -> Result<usize> {
    chromatic_exact_with(g, CHROMATIC_EXACT_CAP, CHROMATIC_TIME_BUDGET)
}

pub fn chromatic_exact_with(g: &Graph, cap: usize, budget: Duration) -> Result<usize> {
    let n = g.n();
    if n > cap.min(64) {
        return Err(Error::SizeLimit(format!(
            "exact chromatic number supports at most {} vertices, got {n}",
            cap.min(64)
        )));
    }
    if n == 0 {
        return Ok(0);
    }
    let adj: Vec<u64> = (0..n).map(|v| g.neighbour_mask(v)).collect();
    let mut state = Dsatur {
        g,
        adj,
        colour: vec![usize::MAX; n],
        saturation: vec![0; n],
        best: n + 1,
        floor: greedy_clique(g),
        nodes: 0,
        deadline: Instant::now() + budget,
        budget,
    };
    // Greedy DSATUR pass for the initial upper bound.
    let mut used = 0;
    while let Some(v) = state.pick() {
        let c = (0..).find(|&c| state.saturation[v] >> c & 1 == 0).unwrap();
        state.colour[v] = c;
        for u in 0..n {
            if state.adj[v] >> u & 1 == 1 {
                state.saturation[u] |= 1 << c;
            }
        }
        used = used.max(c + 1);
    }
    if used == state.floor {
        return Ok(used);
    }
    state.best = used;
    state.colour.fill(usize::MAX);
    state.saturation.fill(0);
    state.search(0)?;
    Ok(state.best)
}

/// Maximum over nonempty `U` of `Σ_{i,j∈U} p_ij / |U|`, where the double
/// sum runs over ordered pairs so each edge counts twice.
///
/// Goldberg's reduction: for a guess `g` a minimum cut separates a set with
/// `w(U)/|U| > g` from the sink whenever one exists. Binary search on `g`
/// keeps the densest set seen, and its density is reported directly.
pub fn mad(p: &EdgeProbabilityMatrix) -> Result<f64> {
    let n = p.n();
    if n > MAD_SIZE_LIMIT {
        return Err(Error::SizeLimit(format!(
            "maximum average degree supports at most {MAD_SIZE_LIMIT} vertices, got {n}"
        )));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let weight = |set: &[usize]| -> f64 {
        set.iter()
            .flat_map(|&i| set.iter().map(move |&j| (i, j)))
            .map(|(i, j)| p.get(i, j))
            .sum()
    };
    let density = |set: &[usize]| weight(set) / set.len() as f64;

    let all: Vec<usize> = (0..n).collect();
    let total_half = weight(&all) / 2.0;
    if total_half == 0.0 {
        return Ok(0.0);
    }
    let degree: Vec<f64> = (0..n).map(|i| (0..n).map(|j| p.get(i, j)).sum()).collect();
    let mut best = density(&all);
    // Ordered-pair density is 2·w(U)/|U|; search the unordered density g.
    let (mut lo, mut hi) = (best / 2.0, (n - 1) as f64 / 2.0 + 1e-9);
    for _ in 0..100 {
        if hi - lo <= 1e-13 * (1.0 + hi) {
            break;
        }
        let g = (lo + hi) / 2.0;
        let set = goldberg_cut(p, &degree, total_half, g);
        if set.is_empty() {
            hi = g;
        } else {
            let d = density(&set);
            best = best.max(d);
            lo = lo.max(g).max(d / 2.0);
        }
    }
    Ok(best)
}

/// Source side of a minimum cut in Goldberg's network for guess `g`,
/// without the source itself.
fn goldberg_cut(p: &EdgeProbabilityMatrix, degree: &[f64], big: f64, g: f64) -> Vec<usize> {
    let n = p.n();
    let (s, t) = (n, n + 1);
    let mut net = FlowNetwork::new(n + 2);
    for v in 0..n {
        net.add_edge(s, v, big);
        net.add_edge(v, t, (big + 2.0 * g - degree[v]).max(0.0));
        for u in v + 1..n {
            let w = p.get(u, v);
            if w > 0.0 {
                net.add_undirected(u, v, w);
            }
        }
    }
    net.max_flow(s, t);
    let reach = net.reachable(s);
    (0..n).filter(|&v| reach[v]).collect()
}

struct FlowEdge {
    to: usize,
    cap: f64,
}

/// Dinic max flow on floating capacities.
struct FlowNetwork {
    edges: Vec<FlowEdge>,
    adj: Vec<Vec<usize>>,
    eps: f64,
}

impl FlowNetwork {
    fn new(nodes: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
            eps: 1e-12,
        }
    }

    fn add_edge(&mut self, a: usize, b: usize, cap: f64) {
        self.add_pair(a, b, cap, 0.0);
    }

    fn add_undirected(&mut self, a: usize, b: usize, cap: f64) {
        self.add_pair(a, b, cap, cap);
    }

    fn add_pair(&mut self, a: usize, b: usize, forward: f64, backward: f64) {
        self.adj[a].push(self.edges.len());
        self.edges.push(FlowEdge { to: b, cap: forward });
        self.adj[b].push(self.edges.len());
        self.edges.push(FlowEdge { to: a, cap: backward });
    }

    fn levels(&self, s: usize) -> Vec<usize> {
        let mut level = vec![usize::MAX; self.adj.len()];
        level[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.edges[e].to;
                if self.edges[e].cap > self.eps && level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        level
    }

    fn push(&mut self, u: usize, t: usize, limit: f64, level: &[usize], next: &mut [usize]) -> f64 {
        if u == t {
            return limit;
        }
        while next[u] < self.adj[u].len() {
            let e = self.adj[u][next[u]];
            let v = self.edges[e].to;
            if self.edges[e].cap > self.eps && level[v] == level[u] + 1 {
                let pushed = self.push(v, t, limit.min(self.edges[e].cap), level, next);
                if pushed > 0.0 {
                    self.edges[e].cap -= pushed;
                    self.edges[e ^ 1].cap += pushed;
                    return pushed;
                }
            }
            next[u] += 1;
        }
        0.0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut flow = 0.0;
        loop {
            let level = self.levels(s);
            if level[t] == usize::MAX {
                return flow;
            }
            let mut next = vec![0; self.adj.len()];
            loop {
                let f = self.push(s, t, f64::INFINITY, &level, &mut next);
                if f <= 0.0 {
                    break;
                }
                flow += f;
            }
        }
    }

    fn reachable(&self, s: usize) -> Vec<bool> {
        self.levels(s).into_iter().map(|l| l != usize::MAX).collect()
    }
}
