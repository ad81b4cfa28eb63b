//! Ordered base graphs: construction, the named catalog, exact girth and
//! vertex connectivity, and the text/JSON file formats.
//!
//! Vertices are `0..n` and their total order is the integer order.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A simple, connected graph on `0..n` with sorted adjacency lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaseGraph {
    name: Option<String>,
    adj: Vec<Vec<u32>>,
    edges: Vec<(u32, u32)>,
}

/// Degree profile, girth and vertex connectivity of a base graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphReport {
    pub degrees: Vec<usize>,
    /// `Some(d)` when every vertex has degree `d`.
    pub regular_degree: Option<usize>,
    /// `None` stands for infinite girth (a tree).
    pub girth: Option<usize>,
    pub connectivity: usize,
}

impl BaseGraph {
    /// Builds a graph from an edge list, rejecting loops, parallel edges,
    /// out-of-range endpoints and disconnected inputs.
    pub fn new(n: usize, edges: &[(u32, u32)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation("graph has no vertices".into()));
        }
        let mut adj = vec![Vec::new(); n];
        let mut norm = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a as usize >= n || b as usize >= n {
                return Err(Error::Validation(format!("edge {a}-{b} out of range for n={n}")));
            }
            if a == b {
                return Err(Error::Validation(format!("loop at vertex {a}")));
            }
            let (u, v) = if a < b { (a, b) } else { (b, a) };
            norm.push((u, v));
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        norm.sort_unstable();
        if norm.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("parallel edges".into()));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        let g = BaseGraph { name: None, adj, edges: norm };
        if !g.is_connected() {
            return Err(Error::Validation("graph is disconnected".into()));
        }
        Ok(g)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    /// Edges `(u, v)` with `u < v`, sorted; the position is the edge index.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn neighbors(&self, x: u32) -> &[u32] {
        &self.adj[x as usize]
    }

    pub fn degree(&self, x: u32) -> usize {
        self.adj[x as usize].len()
    }

    pub fn adjacent(&self, x: u32, y: u32) -> bool {
        self.neighbor_position(x, y).is_some()
    }

    /// Position of `y` in the sorted neighbor list of `x`.
    pub fn neighbor_position(&self, x: u32, y: u32) -> Option<usize> {
        self.adj[x as usize].binary_search(&y).ok()
    }

    pub fn edge_index(&self, x: u32, y: u32) -> Option<usize> {
        let key = if x < y { (x, y) } else { (y, x) };
        self.edges.binary_search(&key).ok()
    }

    fn is_connected(&self) -> bool {
        self.distances_from(&[0]).iter().all(|d| d.is_some())
    }

    /// Multi-source BFS distances; `None` marks unreachable vertices.
    pub fn distances_from(&self, sources: &[u32]) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s as usize].is_none() {
                dist[s as usize] = Some(0);
                queue.push_back(s);
            }
        }
        while let Some(x) = queue.pop_front() {
            let dx = dist[x as usize].unwrap();
            for &y in self.neighbors(x) {
                if dist[y as usize].is_none() {
                    dist[y as usize] = Some(dx + 1);
                    queue.push_back(y);
                }
            }
        }
        dist
    }

    pub fn distance(&self, x: u32, y: u32) -> usize {
        self.distances_from(&[x])[y as usize].expect("base graphs are connected")
    }

    /// Distance from `x` to the nearest vertex of `set`; `None` for an empty set.
    pub fn distance_to_set(&self, x: u32, set: &[u32]) -> Option<usize> {
        if set.is_empty() {
            return None;
        }
        self.distances_from(set)[x as usize]
    }

    /// Shortest path from `x` to `y` (inclusive), preferring smaller
    /// vertices when breaking ties, avoiding the `avoid` vertices.
    pub fn shortest_path_avoiding(&self, x: u32, y: u32, avoid: &[bool]) -> Option<Vec<u32>> {
        let mut prev = vec![u32::MAX; self.n()];
        let mut seen = vec![false; self.n()];
        let mut queue = VecDeque::new();
        seen[x as usize] = true;
        queue.push_back(x);
        while let Some(a) = queue.pop_front() {
            if a == y {
                break;
            }
            for &b in self.neighbors(a) {
                if !seen[b as usize] && !avoid[b as usize] {
                    seen[b as usize] = true;
                    prev[b as usize] = a;
                    queue.push_back(b);
                }
            }
        }
        if !seen[y as usize] {
            return None;
        }
        let mut path = vec![y];
        let mut cur = y;
        while cur != x {
            cur = prev[cur as usize];
            path.push(cur);
        }
        path.reverse();
        Some(path)
    }

    /// Connected components of the subgraph induced by `vertices`, each
    /// sorted, ordered by their least vertex.
    pub fn induced_components(&self, vertices: &[u32]) -> Vec<Vec<u32>> {
        let mut set: Vec<u32> = vertices.to_vec();
        set.sort_unstable();
        set.dedup();
        let mut seen = vec![false; set.len()];
        let mut comps = Vec::new();
        for start in 0..set.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![set[start]];
            let mut stack = vec![set[start]];
            while let Some(x) = stack.pop() {
                for &y in self.neighbors(x) {
                    if let Ok(pos) = set.binary_search(&y) {
                        if !seen[pos] {
                            seen[pos] = true;
                            comp.push(y);
                            stack.push(y);
                        }
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    /// Exact girth via BFS from every vertex.
    pub fn girth(&self) -> Option<usize> {
        let n = self.n();
        let mut best: Option<usize> = None;
        let mut dist = vec![usize::MAX; n];
        let mut parent = vec![u32::MAX; n];
        for root in 0..n as u32 {
            dist.iter_mut().for_each(|d| *d = usize::MAX);
            dist[root as usize] = 0;
            parent[root as usize] = u32::MAX;
            let mut queue = VecDeque::from([root]);
            while let Some(x) = queue.pop_front() {
                let dx = dist[x as usize];
                if best.is_some_and(|b| 2 * dx + 1 >= b) {
                    break;
                }
                for &y in self.neighbors(x) {
                    if dist[y as usize] == usize::MAX {
                        dist[y as usize] = dx + 1;
                        parent[y as usize] = x;
                        queue.push_back(y);
                    } else if parent[x as usize] != y {
                        let len = dx + dist[y as usize] + 1;
                        best = Some(best.map_or(len, |b| b.min(len)));
                    }
                }
            }
        }
        best
    }

    /// Maximum number of internally vertex-disjoint paths between two
    /// distinct non-adjacent vertices (unit-capacity max-flow on the
    /// split-vertex network).
    pub fn local_connectivity(&self, s: u32, t: u32) -> usize {
        let n = self.n();
        // node 2x = x_in, 2x+1 = x_out
        let mut flow = FlowNetwork::new(2 * n);
        for x in 0..n {
            let cap = if x as u32 == s || x as u32 == t { n } else { 1 };
            flow.add_edge(2 * x, 2 * x + 1, cap);
            for &y in self.neighbors(x as u32) {
                flow.add_edge(2 * x + 1, 2 * y as usize, 1);
            }
        }
        flow.max_flow(2 * s as usize + 1, 2 * t as usize)
    }

    /// Exact vertex connectivity. Complete graphs K_n have connectivity n−1.
    pub fn connectivity(&self) -> usize {
        let n = self.n();
        let mut best = self.adj.iter().map(Vec::len).min().unwrap_or(0);
        let mut i = 0;
        while i < n && i <= best {
            for j in (i + 1)..n {
                if !self.adjacent(i as u32, j as u32) {
                    best = best.min(self.local_connectivity(i as u32, j as u32));
                }
            }
            i += 1;
        }
        best
    }

    pub fn properties(&self) -> GraphReport {
        let degrees: Vec<usize> = self.adj.iter().map(Vec::len).collect();
        let regular_degree = if degrees.windows(2).all(|w| w[0] == w[1]) {
            degrees.first().copied()
        } else {
            None
        };
        GraphReport { degrees, regular_degree, girth: self.girth(), connectivity: self.connectivity() }
    }

    /// Canonical text form: header `n m`, then one `u v` line per edge.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{} {}", self.n(), self.m()).unwrap();
        for &(u, v) in &self.edges {
            writeln!(out, "{u} {v}").unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Decode("empty graph file".into()))?;
        let nums = parse_numbers(header)?;
        let [n, m] = nums[..] else {
            return Err(Error::Decode(format!("bad header line {header:?}")));
        };
        let mut edges = Vec::with_capacity(m as usize);
        for line in lines {
            let e = parse_numbers(line)?;
            let [u, v] = e[..] else {
                return Err(Error::Decode(format!("bad edge line {line:?}")));
            };
            if u >= v {
                return Err(Error::Decode(format!("edge line {line:?} must have u < v")));
            }
            edges.push((u, v));
        }
        if edges.len() != m as usize {
            return Err(Error::Decode(format!("header announces {m} edges, found {}", edges.len())));
        }
        BaseGraph::new(n as usize, &edges)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.json_value()).expect("graph serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GraphJson = serde_json::from_str(text).map_err(|e| Error::Decode(e.to_string()))?;
        doc.into_graph()
    }

    pub(crate) fn json_value(&self) -> GraphJson {
        GraphJson {
            format: GRAPH_FORMAT.to_string(),
            name: self.name.clone(),
            n: self.n(),
            m: self.m(),
            edges: self.edges.iter().map(|&(u, v)| [u, v]).collect(),
        }
    }
}

const GRAPH_FORMAT: &str = "basegraph/1";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct GraphJson {
    format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    n: usize,
    m: usize,
    edges: Vec<[u32; 2]>,
}

impl GraphJson {
    pub(crate) fn into_graph(self) -> Result<BaseGraph> {
        if self.format != GRAPH_FORMAT {
            return Err(Error::Decode(format!("unknown graph format {:?}", self.format)));
        }
        if self.edges.len() != self.m {
            return Err(Error::Decode(format!("m={} but {} edges listed", self.m, self.edges.len())));
        }
        if self.edges.iter().any(|e| e[0] >= e[1]) {
            return Err(Error::Decode("edges must be listed with u < v".into()));
        }
        let edges: Vec<(u32, u32)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        let g = BaseGraph::new(self.n, &edges)?;
        Ok(match self.name {
            Some(name) => g.with_name(name),
            None => g,
        })
    }
}

fn parse_numbers(line: &str) -> Result<Vec<u32>> {
    line.split_whitespace()
        .map(|t| t.parse::<u32>().map_err(|_| Error::Decode(format!("not a vertex number: {t:?}"))))
        .collect()
}

struct FlowNetwork {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<usize>,
}

impl FlowNetwork {
    fn new(n: usize) -> Self {
        FlowNetwork { head: vec![Vec::new(); n], to: Vec::new(), cap: Vec::new() }
    }

    fn add_edge(&mut self, a: usize, b: usize, c: usize) {
        self.head[a].push(self.to.len());
        self.to.push(b);
        self.cap.push(c);
        self.head[b].push(self.to.len());
        self.to.push(a);
        self.cap.push(0);
    }

    fn max_flow(&mut self, s: usize, t: usize) -> usize {
        let n = self.head.len();
        let mut total = 0;
        loop {
            let mut via = vec![usize::MAX; n];
            let mut seen = vec![false; n];
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(x) = queue.pop_front() {
                if x == t {
                    break;
                }
                for &e in &self.head[x] {
                    let y = self.to[e];
                    if self.cap[e] > 0 && !seen[y] {
                        seen[y] = true;
                        via[y] = e;
                        queue.push_back(y);
                    }
                }
            }
            if !seen[t] {
                return total;
            }
            let mut x = t;
            while x != s {
                let e = via[x];
                self.cap[e] -= 1;
                self.cap[e ^ 1] += 1;
                x = self.to[e ^ 1];
            }
            total += 1;
        }
    }
}

/// Vertex at distance greater than `ell` from every vertex in `blocked`,
/// least in the vertex order.
pub fn distant_vertex(g: &BaseGraph, blocked: &[u32], ell: usize) -> Option<u32> {
    if blocked.is_empty() {
        return Some(0);
    }
    let dist = g.distances_from(blocked);
    (0..g.n() as u32).find(|&x| dist[x as usize].is_none_or(|d| d > ell))
}

pub mod catalog {
    //! Named graphs and the regular-graph generator.

    use super::*;

    pub fn complete(n: usize) -> BaseGraph {
        let mut edges = Vec::new();
        for u in 0..n as u32 {
            for v in (u + 1)..n as u32 {
                edges.push((u, v));
            }
        }
        BaseGraph::new(n, &edges).expect("complete graph").with_name(format!("K{n}"))
    }

    /// The `d`-dimensional hypercube; vertex `x` is the bit string of `x`.
    pub fn hypercube(d: usize) -> BaseGraph {
        let n = 1usize << d;
        let mut edges = Vec::new();
        for x in 0..n as u32 {
            for b in 0..d {
                let y = x ^ (1 << b);
                if x < y {
                    edges.push((x, y));
                }
            }
        }
        BaseGraph::new(n, &edges).expect("hypercube").with_name(format!("Q{d}"))
    }

    pub fn petersen() -> BaseGraph {
        let mut edges = Vec::new();
        for i in 0..5u32 {
            edges.push((i, (i + 1) % 5));
            edges.push((i, i + 5));
            edges.push((5 + i, 5 + (i + 2) % 5));
        }
        BaseGraph::new(10, &edges).expect("petersen").with_name("petersen")
    }

    /// Graph given by LCF notation: a Hamiltonian cycle plus chords
    /// `i ↔ i + pattern[i mod len]`.
    pub fn lcf(n: usize, pattern: &[i64]) -> Result<BaseGraph> {
        let mut edges = Vec::new();
        for i in 0..n as i64 {
            let j = (i + 1) % n as i64;
            edges.push((i.min(j) as u32, i.max(j) as u32));
            let k = (i + pattern[i as usize % pattern.len()]).rem_euclid(n as i64);
            edges.push((i.min(k) as u32, i.max(k) as u32));
        }
        edges.sort_unstable();
        edges.dedup();
        BaseGraph::new(n, &edges)
    }

    pub fn heawood() -> BaseGraph {
        lcf(14, &[5, -5]).expect("heawood").with_name("heawood")
    }

    pub fn mcgee() -> BaseGraph {
        lcf(24, &[12, 7, -7]).expect("mcgee").with_name("mcgee")
    }

    pub fn tutte_coxeter() -> BaseGraph {
        lcf(30, &[-13, -9, 7, -7, 9, 13]).expect("tutte-coxeter").with_name("tutte-coxeter")
    }

    /// The prism C_n × K_2: outer cycle `0..n`, inner cycle `n..2n`.
    pub fn prism(n: usize) -> BaseGraph {
        let mut edges = Vec::new();
        for i in 0..n as u32 {
            let j = (i + 1) % n as u32;
            edges.push((i.min(j), i.max(j)));
            edges.push((n as u32 + i.min(j), n as u32 + i.max(j)));
            edges.push((i, n as u32 + i));
        }
        BaseGraph::new(2 * n, &edges).expect("prism").with_name(format!("prism{n}"))
    }

    /// Circulant graph C_n(jumps).
    pub fn circulant(n: usize, jumps: &[usize]) -> Result<BaseGraph> {
        let mut edges = Vec::new();
        for i in 0..n {
            for &s in jumps {
                let j = (i + s) % n;
                if i != j {
                    edges.push((i.min(j) as u32, i.max(j) as u32));
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let list: Vec<String> = jumps.iter().map(|s| s.to_string()).collect();
        Ok(BaseGraph::new(n, &edges)?.with_name(format!("C{n}({})", list.join(","))))
    }

    /// Looks up a catalog graph by name: `K<n>`, `Q<d>`, `prism<n>`,
    /// `C<n>(<jumps>)`, `petersen`, `heawood`, `mcgee`, `tutte-coxeter`.
    pub fn by_name(name: &str) -> Result<BaseGraph> {
        let bad = || Error::Argument(format!("unknown catalog graph {name:?}"));
        let number = |s: &str| s.parse::<usize>().map_err(|_| bad());
        match name {
            "petersen" => return Ok(petersen()),
            "heawood" => return Ok(heawood()),
            "mcgee" => return Ok(mcgee()),
            "tutte-coxeter" => return Ok(tutte_coxeter()),
            _ => {}
        }
        if let Some(rest) = name.strip_prefix("prism") {
            let n = number(rest)?;
            return if n >= 3 { Ok(prism(n)) } else { Err(bad()) };
        }
        if let Some(rest) = name.strip_prefix('K') {
            let n = number(rest)?;
            return if (2..=64).contains(&n) { Ok(complete(n)) } else { Err(bad()) };
        }
        if let Some(rest) = name.strip_prefix('Q') {
            let d = number(rest)?;
            return if (1..=12).contains(&d) { Ok(hypercube(d)) } else { Err(bad()) };
        }
        if let Some(rest) = name.strip_prefix('C') {
            let (n, jumps) = rest.split_once('(').ok_or_else(bad)?;
            let jumps = jumps.strip_suffix(')').ok_or_else(bad)?;
            let n = number(n)?;
            let jumps = jumps.split(',').map(|s| number(s.trim())).collect::<Result<Vec<_>>>()?;
            return circulant(n, &jumps);
        }
        Err(bad())
    }

    /// Catalog candidates of the given degree, in search order: complete
    /// graph, hypercube, cubic cages and prisms, then circulants.
    pub fn regular_candidates(degree: usize) -> Vec<BaseGraph> {
        let mut out = vec![complete(degree + 1)];
        if degree <= 12 {
            out.push(hypercube(degree));
        }
        if degree == 3 {
            out.extend([petersen(), heawood(), mcgee(), tutte_coxeter()]);
            out.extend((3..=12).map(prism));
        }
        let half = degree / 2;
        for n in (degree + 2)..=(4 * degree + 4) {
            let mut jumps: Vec<usize> = (1..=half).collect();
            if degree % 2 == 1 {
                if n % 2 == 1 {
                    continue;
                }
                jumps.push(n / 2);
            }
            if let Ok(g) = circulant(n, &jumps) {
                if g.properties().regular_degree == Some(degree) {
                    out.push(g);
                }
            }
        }
        out
    }

    fn meets(g: &BaseGraph, degree: usize, min_girth: usize, min_connectivity: usize) -> bool {
        g.adj.iter().all(|l| l.len() == degree)
            && g.girth().is_none_or(|x| x >= min_girth)
            && g.connectivity() >= min_connectivity
    }

    /// Lower bound on the order of a `d`-regular graph of girth `g`.
    fn moore_bound(d: usize, g: usize) -> usize {
        let r = (g.saturating_sub(1)) / 2;
        let geometric: usize = (0..r).map(|i| (d - 1).pow(i as u32)).sum();
        if g % 2 == 1 {
            1 + d * geometric
        } else {
            2 * geometric
        }
    }

    /// A catalog graph meeting the bounds, or a randomly generated one
    /// (pairing model, rejection on girth then connectivity).
    pub fn catalog_or_generate(
        degree: usize,
        min_girth: usize,
        min_connectivity: usize,
        seed: Option<u64>,
    ) -> Result<BaseGraph> {
        if degree < 3 {
            return Err(Error::Argument(format!("degree {degree} < 3")));
        }
        if let Some(g) = regular_candidates(degree)
            .into_iter()
            .find(|g| meets(g, degree, min_girth, min_connectivity))
        {
            return Ok(g);
        }
        let seed = seed.ok_or_else(|| {
            Error::Argument("no catalog graph meets the bounds and no seed was given for generation".into())
        })?;
        generate_regular(degree, min_girth, min_connectivity, seed, 4000)
    }

    /// Random `degree`-regular graph by the pairing model with rejection.
    pub fn generate_regular(
        degree: usize,
        min_girth: usize,
        min_connectivity: usize,
        seed: u64,
        budget: usize,
    ) -> Result<BaseGraph> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut n = moore_bound(degree, min_girth).max(degree + 1);
        if n * degree % 2 == 1 {
            n += 1;
        }
        let mut best: Option<(usize, BaseGraph)> = None;
        let mut attempts = 0;
        let per_size = 50;
        while attempts < budget {
            for _ in 0..per_size {
                attempts += 1;
                let Some(edges) = pairing(n, degree, &mut rng) else { continue };
                let Ok(g) = BaseGraph::new(n, &edges) else { continue };
                let girth = g.girth().unwrap_or(usize::MAX);
                if best.as_ref().is_none_or(|(b, _)| girth > *b) {
                    best = Some((girth, g.clone()));
                }
                if girth >= min_girth && g.connectivity() >= min_connectivity {
                    return Ok(g.with_name(format!("random-{degree}-regular-{n}-seed{seed}")));
                }
            }
            n += if degree % 2 == 1 { 2 } else { 1 };
        }
        Err(Error::GenerationFailed {
            attempts,
            best_girth: best.as_ref().map(|b| b.0),
            best: best.map(|b| Box::new(b.1)),
        })
    }

    /// One sample of the pairing model in its sequential form: points are
    /// matched one pair at a time, skipping pairs that would create a loop
    /// or a parallel edge. Returns `None` when the process gets stuck.
    fn pairing(n: usize, degree: usize, rng: &mut ChaCha8Rng) -> Option<Vec<(u32, u32)>> {
        let mut points: Vec<u32> = (0..n as u32).flat_map(|x| std::iter::repeat_n(x, degree)).collect();
        points.shuffle(rng);
        let mut present = std::collections::HashSet::new();
        let mut edges = Vec::with_capacity(points.len() / 2);
        while !points.is_empty() {
            let mut matched = false;
            for _ in 0..4 * points.len() {
                let i = rng.gen_range(0..points.len());
                let j = rng.gen_range(0..points.len());
                let (a, b) = (points[i], points[j]);
                if a == b || present.contains(&(a.min(b), a.max(b))) {
                    continue;
                }
                present.insert((a.min(b), a.max(b)));
                edges.push((a.min(b), a.max(b)));
                let (hi, lo) = (i.max(j), i.min(j));
                points.swap_remove(hi);
                points.swap_remove(lo);
                matched = true;
                break;
            }
            if !matched {
                return None;
            }
        }
        edges.sort_unstable();
        Some(edges)
    }
}
