//! Automorphism groups of pebbled CFI structures and their orbits on tuples.
//!
//! Every automorphism of `(CFI(G, g), p̄)` is a family of gadget translations
//! whose values on oriented edges form a circulation: antisymmetric across
//! each edge and summing to zero at each vertex. Pebbled gadgets are fixed
//! pointwise, which pins their incident edges to zero. One unknown per edge
//! (its value in the low→high direction) turns every orbit question into a
//! linear system over Z/2^q.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::basegraph::BaseGraph;
use crate::cfi::{CfiStructure, PartialMap};
use crate::ring::Modulus;
use crate::zmod::{Elimination, ZMatrix};
use crate::{Error, Result};

/// Largest number of k-tuples an [`OrbitPartition`] will enumerate.
pub const MAX_TUPLES: usize = 1 << 24;

/// Linear system for translation families with prescribed values on a
/// fixed set of gadgets and conservation everywhere else.
///
/// The same coefficient matrix serves maps between differently twisted
/// structures: a twist change `δ` only moves the right-hand side.
#[derive(Clone, Debug)]
pub struct CirculationSolver {
    base: Arc<BaseGraph>,
    modulus: Modulus,
    prescribed: Vec<bool>,
    row_start: Vec<usize>,
    rows: usize,
    elim: Elimination,
}

impl CirculationSolver {
    pub fn new(base: Arc<BaseGraph>, modulus: Modulus, prescribed: &[u32]) -> Self {
        let n = base.n();
        let mut is_prescribed = vec![false; n];
        for &x in prescribed {
            is_prescribed[x as usize] = true;
        }
        let mut row_start = Vec::with_capacity(n + 1);
        let mut rows = 0;
        for x in 0..n as u32 {
            row_start.push(rows);
            rows += if is_prescribed[x as usize] { base.degree(x) } else { 1 };
        }
        row_start.push(rows);
        let mut a = ZMatrix::zeros(modulus, rows, base.m());
        for x in 0..n as u32 {
            for (i, &y) in base.neighbors(x).iter().enumerate() {
                let e = base.edge_index(x, y).unwrap();
                let sign = if x < y { 1 } else { modulus.neg(1) };
                let r = row_start[x as usize] + if is_prescribed[x as usize] { i } else { 0 };
                a.set(r, e, sign);
            }
        }
        let elim = Elimination::new(&a);
        CirculationSolver { base, modulus, prescribed: is_prescribed, row_start, rows, elim }
    }

    /// Kernel generators: circulations vanishing on the prescribed gadgets.
    pub fn kernel(&self) -> Vec<Vec<u32>> {
        self.elim.kernel()
    }

    pub fn kernel_order_log2(&self) -> u32 {
        self.elim.kernel_order_log2()
    }

    /// A translation family mapping `CFI(f)` onto `CFI(f + δ)` whose value at
    /// each prescribed gadget `x` is `targets[x]` (zero if absent).
    pub fn solve(&self, targets: &BTreeMap<u32, Vec<u32>>, delta: Option<&[u32]>) -> Option<PartialMap> {
        let m = self.modulus;
        let base = &self.base;
        let delta_at = |e: usize| delta.map_or(0, |d| d[e]);
        let mut rhs = vec![0u32; self.rows];
        for x in 0..base.n() as u32 {
            let start = self.row_start[x as usize];
            if self.prescribed[x as usize] {
                let target = targets.get(&x);
                for (i, &y) in base.neighbors(x).iter().enumerate() {
                    let want = target.map_or(0, |t| t[i]);
                    rhs[start + i] = if x < y {
                        want
                    } else {
                        m.sub(want, delta_at(base.edge_index(x, y).unwrap()))
                    };
                }
            } else {
                let mut acc = 0;
                for &y in base.neighbors(x).iter().filter(|&&y| y < x) {
                    acc = m.add(acc, delta_at(base.edge_index(x, y).unwrap()));
                }
                rhs[start] = m.neg(acc);
            }
        }
        if targets.keys().any(|&x| !self.prescribed[x as usize]) {
            return None;
        }
        let flow = self.elim.solve(&rhs)?;
        Some(circulation_map(base, m, &flow, delta))
    }
}

/// The translation family `d_u(v) = F_e`, `d_v(u) = δ_e − F_e` for each
/// edge `e = {u < v}`.
pub fn circulation_map(base: &BaseGraph, modulus: Modulus, flow: &[u32], delta: Option<&[u32]>) -> PartialMap {
    let mut d = vec![None; base.n()];
    for x in 0..base.n() as u32 {
        let t: Vec<u32> = base
            .neighbors(x)
            .iter()
            .map(|&y| {
                let e = base.edge_index(x, y).unwrap();
                if x < y {
                    flow[e]
                } else {
                    modulus.sub(delta.map_or(0, |d| d[e]), flow[e])
                }
            })
            .collect();
        d[x as usize] = Some(t);
    }
    PartialMap::from_translations(base, modulus, d).expect("circulations conserve flow")
}

/// Generators of `Aut((CFI(G, g), p̄))` as circulations.
#[derive(Clone, Debug)]
pub struct CirculationBasis {
    base: Arc<BaseGraph>,
    modulus: Modulus,
    blocked: Vec<u32>,
    generators: Vec<Vec<u32>>,
    order_log2: u32,
}

impl CirculationBasis {
    /// One value per edge, in the low→high direction.
    pub fn generators(&self) -> &[Vec<u32>] {
        &self.generators
    }

    pub fn blocked(&self) -> &[u32] {
        &self.blocked
    }

    pub fn modulus(&self) -> Modulus {
        self.modulus
    }

    /// log2 of the group order.
    pub fn order_log2(&self) -> u32 {
        self.order_log2
    }

    /// Value of generator `i` on the oriented edge `x → y`.
    pub fn value(&self, i: usize, x: u32, y: u32) -> u32 {
        let e = self.base.edge_index(x, y).expect("edge");
        let v = self.generators[i][e];
        if x < y {
            v
        } else {
            self.modulus.neg(v)
        }
    }

    pub fn map(&self, i: usize) -> PartialMap {
        circulation_map(&self.base, self.modulus, &self.generators[i], None)
    }

    /// Each generator as a permutation of the universe of `s`.
    pub fn permutations(&self, s: &CfiStructure) -> Vec<Vec<u32>> {
        (0..self.generators.len())
            .map(|i| {
                let m = self.map(i);
                (0..s.universe_len() as u32).map(|u| m.apply(s, u)).collect()
            })
            .collect()
    }
}

fn origins_of(s: &CfiStructure, tuple: &[u32]) -> Vec<u32> {
    let set: BTreeSet<u32> = tuple.iter().map(|&u| s.origin(u)).collect();
    set.into_iter().collect()
}

pub fn aut_generators(s: &CfiStructure, pebbles: &[u32]) -> CirculationBasis {
    let blocked = origins_of(s, pebbles);
    let solver = CirculationSolver::new(s.base().clone(), s.modulus(), &blocked);
    CirculationBasis {
        base: s.base().clone(),
        modulus: s.modulus(),
        generators: solver.kernel(),
        order_log2: solver.kernel_order_log2(),
        blocked,
    }
}

/// Solvers keyed by their prescribed vertex set, shared between queries.
#[derive(Debug, Default)]
pub struct SolverCache {
    solvers: Mutex<BTreeMap<(usize, Vec<u32>), Arc<CirculationSolver>>>,
}

impl SolverCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, base: &Arc<BaseGraph>, modulus: Modulus, prescribed: &[u32]) -> Arc<CirculationSolver> {
        let key = (Arc::as_ptr(base) as usize ^ modulus.q() as usize, prescribed.to_vec());
        let mut map = self.solvers.lock().expect("solver cache poisoned");
        map.entry(key)
            .or_insert_with(|| Arc::new(CirculationSolver::new(base.clone(), modulus, prescribed)))
            .clone()
    }
}

/// The automorphism of `(s, p̄)` mapping `u` to `v` entrywise, if any.
pub fn orbit_map(s: &CfiStructure, pebbles: &[u32], u: &[u32], v: &[u32], cache: Option<&SolverCache>) -> Option<PartialMap> {
    if u.len() != v.len() {
        return None;
    }
    let m = s.modulus();
    let mut targets: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for &p in pebbles {
        targets.insert(s.origin(p), vec![0; s.base().degree(s.origin(p))]);
    }
    for (&a, &b) in u.iter().zip(v) {
        let x = s.origin(a);
        if x != s.origin(b) {
            return None;
        }
        let d: Vec<u32> = s.values(b).iter().zip(s.values(a)).map(|(&bv, &av)| m.sub(bv, av)).collect();
        match targets.get(&x) {
            Some(prev) if *prev != d => return None,
            Some(_) => {}
            None => {
                targets.insert(x, d);
            }
        }
    }
    let prescribed: Vec<u32> = targets.keys().copied().collect();
    match cache {
        Some(c) => c.get(s.base(), m, &prescribed).solve(&targets, None),
        None => CirculationSolver::new(s.base().clone(), m, &prescribed).solve(&targets, None),
    }
}

/// Whether some automorphism of `(s, p̄)` maps `u` to `v`.
pub fn same_orbit(s: &CfiStructure, pebbles: &[u32], u: &[u32], v: &[u32]) -> bool {
    orbit_map(s, pebbles, u, v, None).is_some()
}

/// Translation-invariant description of the type of `p̄u`.
///
/// `offsets` lists, for every position whose origin already occurred at an
/// earlier position, that earlier position and the value difference;
/// `edges` lists the edge-relation index between the first entries of every
/// two adjacent origins.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TypeDescriptor {
    pub orig: Vec<u32>,
    pub offsets: Vec<(u32, u32, Vec<u32>)>,
    pub edges: Vec<(u32, u32, u32)>,
}

/// Type of the tuple `p̄u`, where `pebbles` is `p̄`.
pub fn tuple_type(s: &CfiStructure, pebbles: &[u32], u: &[u32]) -> TypeDescriptor {
    let w: Vec<u32> = pebbles.iter().chain(u).copied().collect();
    let m = s.modulus();
    let orig: Vec<u32> = w.iter().map(|&a| s.origin(a)).collect();
    let mut first: BTreeMap<u32, usize> = BTreeMap::new();
    let mut offsets = Vec::new();
    for (i, &x) in orig.iter().enumerate() {
        match first.get(&x) {
            Some(&j) => {
                let d = s.values(w[i]).iter().zip(s.values(w[j])).map(|(&a, &b)| m.sub(a, b)).collect();
                offsets.push((i as u32, j as u32, d));
            }
            None => {
                first.insert(x, i);
            }
        }
    }
    let firsts: Vec<usize> = {
        let mut f: Vec<usize> = first.values().copied().collect();
        f.sort_unstable();
        f
    };
    let mut edges = Vec::new();
    for (a, &i) in firsts.iter().enumerate() {
        for &j in &firsts[a + 1..] {
            if let Some(c) = s.edge_relation_index(w[i], w[j]) {
                edges.push((i as u32, j as u32, c));
            }
        }
    }
    TypeDescriptor { orig, offsets, edges }
}

/// The k-orbits of a group acting on `{0..universe}^k`, with per-block
/// descriptors. Tuples are numbered lexicographically.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrbitPartition {
    universe: usize,
    k: usize,
    block_of: Vec<u32>,
    pos_in_block: Vec<u32>,
    blocks: Vec<Vec<u32>>,
    descriptors: Vec<TypeDescriptor>,
}

fn tuple_count(universe: usize, k: usize) -> Option<usize> {
    let mut total = 1usize;
    for _ in 0..k {
        total = total.checked_mul(universe)?;
        if total > MAX_TUPLES {
            return None;
        }
    }
    Some(total)
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[parent[x as usize] as usize];
        parent[x as usize] = p;
        x = p;
    }
    x
}

impl OrbitPartition {
    /// Closes all k-tuples under the entrywise action of the given universe
    /// permutations; `describe` labels each block from its least member.
    pub fn from_permutations(
        universe: usize,
        k: usize,
        perms: &[Vec<u32>],
        describe: impl Fn(&[u32]) -> TypeDescriptor,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::Argument("tuple length k must be at least 1".into()));
        }
        let total = tuple_count(universe, k)
            .ok_or_else(|| Error::Resource(format!("{universe}^{k} tuples exceed the enumeration limit {MAX_TUPLES}")))?;
        let mut parent: Vec<u32> = (0..total as u32).collect();
        let mut digits = vec![0u32; k];
        for perm in perms {
            for t in 0..total as u32 {
                decode_into(universe, t, &mut digits);
                let mut image = 0u32;
                for &d in &digits {
                    image = image * universe as u32 + perm[d as usize];
                }
                let (a, b) = (find(&mut parent, t), find(&mut parent, image));
                if a != b {
                    let (lo, hi) = (a.min(b), a.max(b));
                    parent[hi as usize] = lo;
                }
            }
        }
        let mut block_of = vec![u32::MAX; total];
        let mut pos_in_block = vec![0u32; total];
        let mut blocks: Vec<Vec<u32>> = Vec::new();
        let mut root_block: BTreeMap<u32, u32> = BTreeMap::new();
        for t in 0..total as u32 {
            let r = find(&mut parent, t);
            let b = *root_block.entry(r).or_insert_with(|| {
                blocks.push(Vec::new());
                blocks.len() as u32 - 1
            });
            block_of[t as usize] = b;
            pos_in_block[t as usize] = blocks[b as usize].len() as u32;
            blocks[b as usize].push(t);
        }
        let descriptors = blocks
            .iter()
            .map(|b| {
                decode_into(universe, b[0], &mut digits);
                describe(&digits)
            })
            .collect();
        Ok(OrbitPartition { universe, k, block_of, pos_in_block, blocks, descriptors })
    }

    /// A partition given explicitly by its blocks (each a list of tuple
    /// indices); blocks are renumbered by least member.
    pub fn from_blocks(universe: usize, k: usize, blocks: Vec<(Vec<u32>, TypeDescriptor)>) -> Result<Self> {
        let total = tuple_count(universe, k).ok_or_else(|| Error::Resource("too many tuples".into()))?;
        let mut blocks: Vec<(Vec<u32>, TypeDescriptor)> = blocks
            .into_iter()
            .map(|(mut b, d)| {
                b.sort_unstable();
                (b, d)
            })
            .collect();
        if blocks.iter().any(|b| b.0.is_empty()) {
            return Err(Error::Argument("empty block".into()));
        }
        blocks.sort_by_key(|b| b.0[0]);
        let mut block_of = vec![u32::MAX; total];
        let mut pos_in_block = vec![0u32; total];
        for (i, (b, _)) in blocks.iter().enumerate() {
            for (p, &t) in b.iter().enumerate() {
                let slot = block_of
                    .get_mut(t as usize)
                    .ok_or_else(|| Error::Argument(format!("tuple index {t} out of range")))?;
                if *slot != u32::MAX {
                    return Err(Error::Argument(format!("tuple index {t} in two blocks")));
                }
                *slot = i as u32;
                pos_in_block[t as usize] = p as u32;
            }
        }
        if block_of.contains(&u32::MAX) {
            return Err(Error::Argument("blocks do not cover every tuple".into()));
        }
        let (blocks, descriptors) = blocks.into_iter().unzip();
        Ok(OrbitPartition { universe, k, block_of, pos_in_block, blocks, descriptors })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn universe_len(&self) -> usize {
        self.universe
    }

    pub fn tuple_count(&self) -> usize {
        self.block_of.len()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Tuple indices of block `b`, ascending.
    pub fn block(&self, b: usize) -> &[u32] {
        &self.blocks[b]
    }

    pub fn descriptor(&self, b: usize) -> &TypeDescriptor {
        &self.descriptors[b]
    }

    #[inline]
    pub fn block_of(&self, t: u32) -> u32 {
        self.block_of[t as usize]
    }

    #[inline]
    pub fn position(&self, t: u32) -> u32 {
        self.pos_in_block[t as usize]
    }

    pub fn encode(&self, tuple: &[u32]) -> u32 {
        debug_assert_eq!(tuple.len(), self.k);
        tuple.iter().fold(0u32, |acc, &d| acc * self.universe as u32 + d)
    }

    pub fn decode(&self, t: u32) -> Vec<u32> {
        let mut digits = vec![0; self.k];
        decode_into(self.universe, t, &mut digits);
        digits
    }

    pub fn block_of_tuple(&self, tuple: &[u32]) -> u32 {
        self.block_of(self.encode(tuple))
    }

    /// Members of block `b` as tuples.
    pub fn tuples(&self, b: usize) -> impl Iterator<Item = Vec<u32>> + '_ {
        self.blocks[b].iter().map(|&t| self.decode(t))
    }

    /// Block whose descriptor equals `d`.
    pub fn find_descriptor(&self, d: &TypeDescriptor) -> Option<usize> {
        self.descriptors.iter().position(|x| x == d)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Block<'a> {
            tuples: Vec<Vec<u32>>,
            descriptor: &'a TypeDescriptor,
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            k: usize,
            universe: usize,
            blocks: Vec<Block<'a>>,
        }
        let doc = Doc {
            k: self.k,
            universe: self.universe,
            blocks: (0..self.len())
                .map(|b| Block { tuples: self.tuples(b).collect(), descriptor: &self.descriptors[b] })
                .collect(),
        };
        let mut s = serde_json::to_string(&doc).expect("partition serialises");
        s.push('\n');
        s
    }
}

fn decode_into(universe: usize, mut t: u32, digits: &mut [u32]) {
    for d in digits.iter_mut().rev() {
        *d = t % universe as u32;
        t /= universe as u32;
    }
}

/// The k-orbits of `Aut((s, p̄))`, labelled by type.
pub fn orbit_partition(s: &CfiStructure, pebbles: &[u32], k: usize) -> Result<OrbitPartition> {
    let perms = aut_generators(s, pebbles).permutations(s);
    OrbitPartition::from_permutations(s.universe_len(), k, &perms, |u| tuple_type(s, pebbles, u))
}

/// Fixes the positions `positions` of the members of block `b` to the
/// universe elements `values` (all at one origin) and projects onto the
/// remaining positions. The result is an orbit of the extended pebble tuple
/// or empty.
pub fn fix_vertex_orbit(
    s: &CfiStructure,
    partition: &OrbitPartition,
    b: usize,
    positions: &[usize],
    values: &[u32],
) -> Result<Vec<Vec<u32>>> {
    if positions.len() != values.len() {
        return Err(Error::Argument("one value per fixed position expected".into()));
    }
    if positions.iter().any(|&p| p >= partition.k()) {
        return Err(Error::Argument("fixed position out of range".into()));
    }
    let first = partition.decode(partition.block(b)[0]);
    let origins: BTreeSet<u32> = positions.iter().map(|&p| s.origin(first[p])).collect();
    if origins.len() > 1 {
        return Err(Error::Argument("fixed positions must share a single origin".into()));
    }
    let rest: Vec<usize> = (0..partition.k()).filter(|p| !positions.contains(p)).collect();
    let mut out: Vec<Vec<u32>> = partition
        .tuples(b)
        .filter(|t| positions.iter().zip(values).all(|(&p, &v)| t[p] == v))
        .map(|t| rest.iter().map(|&p| t[p]).collect())
        .collect();
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// A block restricted to a subset of positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitBlock {
    pub positions: Vec<usize>,
    pub tuples: BTreeSet<Vec<u32>>,
}

/// Splits block `b` into its restrictions to the positions whose origin lies
/// in `m` and to the others. `m` must be a union of connected components of
/// `G[orig(P)]`.
pub fn component_split(
    s: &CfiStructure,
    partition: &OrbitPartition,
    b: usize,
    m: &[u32],
) -> Result<(SplitBlock, SplitBlock)> {
    let first = partition.decode(partition.block(b)[0]);
    let orig = origins_of(s, &first);
    let comps = s.base().induced_components(&orig);
    let in_m: BTreeSet<u32> = m.iter().copied().collect();
    if in_m.iter().any(|x| !orig.contains(x)) {
        return Err(Error::Argument("M contains vertices outside orig(P)".into()));
    }
    for c in &comps {
        let inside = c.iter().filter(|x| in_m.contains(x)).count();
        if inside != 0 && inside != c.len() {
            return Err(Error::Argument("M splits a connected component of G[orig(P)]".into()));
        }
    }
    let (pm, pn): (Vec<usize>, Vec<usize>) = (0..partition.k()).partition(|&p| in_m.contains(&s.origin(first[p])));
    let project = |pos: &[usize]| -> BTreeSet<Vec<u32>> {
        partition.tuples(b).map(|t| pos.iter().map(|&p| t[p]).collect()).collect()
    };
    Ok((
        SplitBlock { tuples: project(&pm), positions: pm },
        SplitBlock { tuples: project(&pn), positions: pn },
    ))
}

/// Interleaves two split blocks back into full tuples.
pub fn recombine(m: &SplitBlock, n: &SplitBlock) -> Vec<Vec<u32>> {
    let k = m.positions.len() + n.positions.len();
    let mut out = Vec::with_capacity(m.tuples.len() * n.tuples.len());
    for a in &m.tuples {
        for b in &n.tuples {
            let mut t = vec![0u32; k];
            for (&p, &v) in m.positions.iter().zip(a) {
                t[p] = v;
            }
            for (&p, &v) in n.positions.iter().zip(b) {
                t[p] = v;
            }
            out.push(t);
        }
    }
    out.sort_unstable();
    out
}
