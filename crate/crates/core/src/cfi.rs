//! CFI structures over Z/2^q and their translation isomorphisms.
//!
//! The universe of `CFI(G, g)` is the disjoint union of the gadgets
//! `A_x = {a ∈ Z_{2^q}^{N(x)} : Σa = 0}`, listed by origin and then
//! lexicographically by the value vector in neighbor order. Relations are
//! evaluated arithmetically from the values; the explicit tuple lists only
//! exist in the JSON encoding.

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basegraph::{BaseGraph, GraphJson};
use crate::ring::{Modulus, RingValue};
use crate::{Error, Result};

/// Upper bound on the universe size of a materialised structure.
pub const MAX_UNIVERSE: usize = 1 << 24;

/// Edge labelling `g: E → Z/2^q`, indexed by the base graph's edge order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TwistFunction {
    modulus: Modulus,
    values: Vec<u32>,
}

impl TwistFunction {
    pub fn zero(base: &BaseGraph, modulus: Modulus) -> Self {
        TwistFunction { modulus, values: vec![0; base.m()] }
    }

    pub fn from_values(base: &BaseGraph, modulus: Modulus, values: Vec<u32>) -> Result<Self> {
        if values.len() != base.m() {
            return Err(Error::Argument(format!(
                "twist has {} values for {} edges",
                values.len(),
                base.m()
            )));
        }
        let values = values.into_iter().map(|v| v & modulus.mask()).collect();
        Ok(TwistFunction { modulus, values })
    }

    pub fn random<R: Rng>(base: &BaseGraph, modulus: Modulus, rng: &mut R) -> Self {
        let values = (0..base.m()).map(|_| rng.gen_range(0..modulus.order())).collect();
        TwistFunction { modulus, values }
    }

    /// Adds `v` to the value of edge `{x, y}`.
    pub fn twisted(mut self, base: &BaseGraph, x: u32, y: u32, v: u32) -> Result<Self> {
        let e = base
            .edge_index(x, y)
            .ok_or_else(|| Error::Argument(format!("{x}-{y} is not an edge")))?;
        self.values[e] = self.modulus.add(self.values[e], v);
        Ok(self)
    }

    pub fn modulus(&self) -> Modulus {
        self.modulus
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, edge: usize) -> u32 {
        self.values[edge]
    }

    /// Sum of all edge values.
    pub fn total(&self) -> RingValue {
        self.modulus.value(self.modulus.sum(self.values.iter().copied()))
    }

    /// Edgewise difference `self − other`.
    pub fn difference(&self, other: &TwistFunction) -> Vec<u32> {
        assert_eq!(self.modulus, other.modulus);
        self.values.iter().zip(&other.values).map(|(&a, &b)| self.modulus.sub(a, b)).collect()
    }
}

pub fn total_twist(g: &TwistFunction) -> RingValue {
    g.total()
}

/// The structure `CFI_{2^q}(G, g)`.
#[derive(Clone, Debug)]
pub struct CfiStructure {
    base: Arc<BaseGraph>,
    modulus: Modulus,
    twist: TwistFunction,
    gadget_start: Vec<u32>,
    value_start: Vec<usize>,
    origin: Vec<u32>,
    values: Vec<u32>,
}

impl PartialEq for CfiStructure {
    fn eq(&self, other: &Self) -> bool {
        self.base == other.base && self.twist == other.twist
    }
}

impl CfiStructure {
    pub fn build(base: Arc<BaseGraph>, twist: TwistFunction) -> Result<Self> {
        if twist.values.len() != base.m() {
            return Err(Error::Argument("twist function does not match the base graph".into()));
        }
        let modulus = twist.modulus;
        let r = modulus.order() as usize;
        let mut gadget_start = Vec::with_capacity(base.n() + 1);
        let mut value_start = Vec::with_capacity(base.n() + 1);
        let mut total = 0usize;
        let mut total_values = 0usize;
        for x in 0..base.n() as u32 {
            gadget_start.push(total as u32);
            value_start.push(total_values);
            let d = base.degree(x);
            let size = (d - 1) as u32 * modulus.q();
            if size >= 25 || total + (1usize << size) > MAX_UNIVERSE {
                return Err(Error::Resource(format!(
                    "universe of CFI structure exceeds {MAX_UNIVERSE} vertices"
                )));
            }
            total += 1 << size;
            total_values += (1usize << size) * d;
        }
        gadget_start.push(total as u32);
        value_start.push(total_values);
        let mut origin = Vec::with_capacity(total);
        let mut values = Vec::with_capacity(total_values);
        for x in 0..base.n() as u32 {
            let d = base.degree(x);
            let count = r.pow(d as u32 - 1);
            for idx in 0..count {
                origin.push(x);
                let start = values.len();
                let mut rest = idx;
                values.resize(start + d, 0);
                for i in (0..d - 1).rev() {
                    values[start + i] = (rest % r) as u32;
                    rest /= r;
                }
                let partial = modulus.sum(values[start..start + d - 1].iter().copied());
                values[start + d - 1] = modulus.neg(partial);
            }
        }
        Ok(CfiStructure { base, modulus, twist, gadget_start, value_start, origin, values })
    }

    pub fn base(&self) -> &Arc<BaseGraph> {
        &self.base
    }

    pub fn modulus(&self) -> Modulus {
        self.modulus
    }

    pub fn twist(&self) -> &TwistFunction {
        &self.twist
    }

    pub fn universe_len(&self) -> usize {
        self.origin.len()
    }

    pub fn gadget(&self, x: u32) -> Range<u32> {
        self.gadget_start[x as usize]..self.gadget_start[x as usize + 1]
    }

    #[inline]
    pub fn origin(&self, u: u32) -> u32 {
        self.origin[u as usize]
    }

    /// Value vector of `u` in the neighbor order of its origin.
    #[inline]
    pub fn values(&self, u: u32) -> &[u32] {
        let x = self.origin[u as usize] as usize;
        let d = self.base.degree(x as u32);
        let off = self.value_start[x] + (u - self.gadget_start[x]) as usize * d;
        &self.values[off..off + d]
    }

    /// The coordinate `u(y)` for a neighbor `y` of `orig(u)`.
    pub fn value_toward(&self, u: u32, y: u32) -> Option<u32> {
        let pos = self.base.neighbor_position(self.origin(u), y)?;
        Some(self.values(u)[pos])
    }

    /// Universe index of the gadget vertex `(x, vals)`; `None` unless
    /// `vals` is a sum-zero vector of the right length.
    pub fn index_of(&self, x: u32, vals: &[u32]) -> Option<u32> {
        let d = self.base.degree(x);
        if vals.len() != d || self.modulus.sum(vals.iter().copied()) != 0 {
            return None;
        }
        let r = self.modulus.order();
        let mut idx = 0u32;
        for &v in &vals[..d - 1] {
            if v >= r {
                return None;
            }
            idx = idx * r + v;
        }
        Some(self.gadget_start[x as usize] + idx)
    }

    /// Applies the gadget translation `u ↦ u + d` (`d` indexed like `N(orig u)`).
    #[inline]
    pub fn translate(&self, u: u32, d: &[u32]) -> u32 {
        let x = self.origin(u);
        let vals = self.values(u);
        let r = self.modulus.order();
        let mask = self.modulus.mask();
        let mut idx = 0u32;
        for i in 0..vals.len() - 1 {
            idx = idx * r + (vals[i].wrapping_add(d[i]) & mask);
        }
        self.gadget_start[x as usize] + idx
    }

    /// The `c` with `{a, b} ∈ R_{E,c}`, if `orig(a)` and `orig(b)` are adjacent.
    pub fn edge_relation_index(&self, a: u32, b: u32) -> Option<u32> {
        let (x, y) = (self.origin(a), self.origin(b));
        let e = self.base.edge_index(x, y)?;
        let ay = self.value_toward(a, y)?;
        let bx = self.value_toward(b, x)?;
        Some(self.modulus.sub(self.modulus.add(ay, bx), self.twist.get(e)))
    }

    pub fn in_edge_relation(&self, a: u32, b: u32, c: u32) -> bool {
        self.edge_relation_index(a, b) == Some(c & self.modulus.mask())
    }

    /// The preorder `a ⪯ b` iff `orig(a) ≤ orig(b)`.
    pub fn precedes(&self, a: u32, b: u32) -> bool {
        self.origin(a) <= self.origin(b)
    }

    /// `{(x, y) : (a, b) ∈ I_{x,y}}`, sorted.
    pub fn i_label(&self, a: u32, b: u32) -> Vec<(u32, u32)> {
        self.label(a, b, 0)
    }

    /// `{(x, y) : (a, b) ∈ C_{x,y}}`, sorted.
    pub fn c_label(&self, a: u32, b: u32) -> Vec<(u32, u32)> {
        self.label(a, b, 1)
    }

    fn label(&self, a: u32, b: u32, shift: u32) -> Vec<(u32, u32)> {
        let x = self.origin(a);
        if x != self.origin(b) {
            return Vec::new();
        }
        let (va, vb) = (self.values(a), self.values(b));
        self.base
            .neighbors(x)
            .iter()
            .enumerate()
            .filter(|&(i, _)| self.modulus.add(va[i], shift) == vb[i])
            .map(|(_, &y)| (x, y))
            .collect()
    }

    /// Membership of `(a, b, a2, b2)` in the arity-4 relation `R_I`.
    pub fn in_ri(&self, a: u32, b: u32, a2: u32, b2: u32) -> bool {
        self.i_label(a, b) <= self.i_label(a2, b2)
    }

    /// Membership of `(a, b, a2, b2)` in the arity-4 relation `R_C`.
    pub fn in_rc(&self, a: u32, b: u32, a2: u32, b2: u32) -> bool {
        self.c_label(a, b) <= self.c_label(a2, b2)
    }

    fn pair_classes(&self, shift: u32) -> Vec<PairClass> {
        let mut classes: BTreeMap<Vec<(u32, u32)>, Vec<[u32; 2]>> = BTreeMap::new();
        for x in 0..self.base.n() as u32 {
            for a in self.gadget(x) {
                for b in self.gadget(x) {
                    let label = self.label(a, b, shift);
                    if !label.is_empty() {
                        classes.entry(label).or_default().push([a, b]);
                    }
                }
            }
        }
        classes
            .into_iter()
            .map(|(label, pairs)| PairClass { label: label.into_iter().map(|(x, y)| [x, y]).collect(), pairs })
            .collect()
    }

    fn relations_json(&self) -> RelationsJson {
        let pre = (0..self.base.n() as u32).map(|x| self.gadget(x).collect()).collect();
        let mut re: BTreeMap<String, Vec<[u32; 2]>> =
            (0..self.modulus.order()).map(|c| (format!("RE{c}"), Vec::new())).collect();
        for &(x, y) in self.base.edges() {
            for a in self.gadget(x) {
                for b in self.gadget(y) {
                    let c = self.edge_relation_index(a, b).expect("adjacent gadgets");
                    re.get_mut(&format!("RE{c}")).unwrap().push([a, b]);
                }
            }
        }
        for list in re.values_mut() {
            list.sort_unstable();
        }
        RelationsJson { pre, ri: self.pair_classes(0), rc: self.pair_classes(1), re }
    }

    fn json_doc(&self, stripped: bool) -> CfiJson {
        CfiJson {
            format: CFI_FORMAT.to_string(),
            base: self.base.json_value(),
            q: self.modulus.q(),
            twist: (!stripped).then(|| self.twist.values.clone()),
            vertices: (0..self.universe_len() as u32)
                .map(|u| VertexJson(self.origin(u), self.values(u).to_vec()))
                .collect(),
            relations: self.relations_json(),
        }
    }

    /// JSON encoding with explicit relation tuples; `stripped` omits the twist.
    pub fn to_json(&self, stripped: bool) -> String {
        let mut s = serde_json::to_string(&self.json_doc(stripped)).expect("structure serialises");
        s.push('\n');
        s
    }

    /// Decodes a full (non-stripped) document and checks every listed
    /// relation tuple against the rebuilt structure.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CfiJson = serde_json::from_str(text).map_err(|e| Error::Decode(e.to_string()))?;
        if doc.format != CFI_FORMAT {
            return Err(Error::Decode(format!("unknown structure format {:?}", doc.format)));
        }
        let base = Arc::new(doc.base.clone().into_graph()?);
        let modulus = Modulus::new(doc.q).map_err(|e| Error::Decode(e.to_string()))?;
        let values = doc
            .twist
            .clone()
            .ok_or_else(|| Error::Decode("stripped structure has no twist function".into()))?;
        if values.iter().any(|&v| v > modulus.mask()) {
            return Err(Error::Decode("twist value out of range".into()));
        }
        let twist = TwistFunction::from_values(&base, modulus, values).map_err(|e| Error::Decode(e.to_string()))?;
        let s = CfiStructure::build(base, twist)?;
        if s.json_doc(false) != doc {
            return Err(Error::Decode("relation tuples disagree with the declared twist".into()));
        }
        Ok(s)
    }

    /// The relational view handed to [`cfi_query_solve`].
    pub fn strip(&self) -> RelationalCfi {
        RelationalCfi::from_doc(&self.json_doc(true)).expect("own encoding decodes")
    }
}

const CFI_FORMAT: &str = "cfi/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct VertexJson(u32, Vec<u32>);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct PairClass {
    label: Vec<[u32; 2]>,
    pairs: Vec<[u32; 2]>,
}

/// `RI`/`RC` list the classes of their total preorder on pairs by increasing
/// label; pairs with the empty label form the implicit least class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RelationsJson {
    #[serde(rename = "PRE")]
    pre: Vec<Vec<u32>>,
    #[serde(rename = "RI")]
    ri: Vec<PairClass>,
    #[serde(rename = "RC")]
    rc: Vec<PairClass>,
    #[serde(flatten)]
    re: BTreeMap<String, Vec<[u32; 2]>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CfiJson {
    format: String,
    base: GraphJson,
    q: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    twist: Option<Vec<u32>>,
    vertices: Vec<VertexJson>,
    relations: RelationsJson,
}

impl PartialEq for CfiJson {
    fn eq(&self, other: &Self) -> bool {
        self.format == other.format
            && self.q == other.q
            && self.twist == other.twist
            && self.vertices == other.vertices
            && self.relations == other.relations
            && serde_json::to_string(&self.base).ok() == serde_json::to_string(&other.base).ok()
    }
}

/// A CFI structure known only through its relations `⪯` and `R_{E,c}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationalCfi {
    universe: usize,
    gadgets: Vec<Vec<u32>>,
    edge_relations: Vec<Vec<[u32; 2]>>,
}

impl RelationalCfi {
    fn from_doc(doc: &CfiJson) -> Result<Self> {
        let rel = &doc.relations;
        let count = rel.re.len();
        if count < 2 || !count.is_power_of_two() {
            return Err(Error::Decode(format!("{count} edge relations is not a power of two ≥ 2")));
        }
        let mut edge_relations = Vec::with_capacity(count);
        for c in 0..count {
            let list = rel
                .re
                .get(&format!("RE{c}"))
                .ok_or_else(|| Error::Decode(format!("relation RE{c} missing")))?;
            edge_relations.push(list.clone());
        }
        Ok(RelationalCfi { universe: doc.vertices.len(), gadgets: rel.pre.clone(), edge_relations })
    }

    /// Decodes a stripped (or full) structure document.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CfiJson = serde_json::from_str(text).map_err(|e| Error::Decode(e.to_string()))?;
        if doc.format != CFI_FORMAT {
            return Err(Error::Decode(format!("unknown structure format {:?}", doc.format)));
        }
        Self::from_doc(&doc)
    }

    /// Renames every universe element through `perm`.
    pub fn relabel(&self, perm: &[u32]) -> Self {
        let gadgets = self
            .gadgets
            .iter()
            .map(|g| {
                let mut g: Vec<u32> = g.iter().map(|&u| perm[u as usize]).collect();
                g.sort_unstable();
                g
            })
            .collect();
        let edge_relations = self
            .edge_relations
            .iter()
            .map(|list| {
                let mut l: Vec<[u32; 2]> = list.iter().map(|p| [perm[p[0] as usize], perm[p[1] as usize]]).collect();
                l.sort_unstable();
                l
            })
            .collect();
        RelationalCfi { universe: self.universe, gadgets, edge_relations }
    }

    pub fn gadgets(&self) -> &[Vec<u32>] {
        &self.gadgets
    }

    /// Solves the CFI query with the given reference vertex per gadget.
    pub fn solve_with_references(&self, refs: &[u32]) -> Result<RingValue> {
        let q = self.edge_relations.len().trailing_zeros();
        let modulus = Modulus::new(q).map_err(|e| Error::Decode(e.to_string()))?;
        let mut gadget_of = vec![u32::MAX; self.universe];
        for (i, g) in self.gadgets.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::Decode(format!("gadget {i} is empty")));
            }
            for &u in g {
                let slot = gadget_of
                    .get_mut(u as usize)
                    .ok_or_else(|| Error::Decode(format!("vertex {u} outside the universe")))?;
                if *slot != u32::MAX {
                    return Err(Error::Decode(format!("vertex {u} lies in two gadgets")));
                }
                *slot = i as u32;
            }
        }
        if gadget_of.contains(&u32::MAX) {
            return Err(Error::Decode("some vertex lies in no gadget".into()));
        }
        if refs.len() != self.gadgets.len() || refs.iter().enumerate().any(|(i, r)| gadget_of.get(*r as usize) != Some(&(i as u32))) {
            return Err(Error::Argument("reference vertices must pick one vertex per gadget".into()));
        }
        let mut observed: BTreeMap<(u32, u32), Option<u32>> = BTreeMap::new();
        for (c, list) in self.edge_relations.iter().enumerate() {
            for &[a, b] in list {
                let (ga, gb) = (
                    *gadget_of.get(a as usize).ok_or_else(|| Error::Decode(format!("vertex {a} unknown")))?,
                    *gadget_of.get(b as usize).ok_or_else(|| Error::Decode(format!("vertex {b} unknown")))?,
                );
                if ga == gb {
                    return Err(Error::Decode(format!("edge relation pair {a},{b} inside one gadget")));
                }
                let key = (ga.min(gb), ga.max(gb));
                let slot = observed.entry(key).or_insert(None);
                if refs[ga as usize] == a && refs[gb as usize] == b {
                    if slot.is_some() {
                        return Err(Error::Decode(format!("reference pair of gadgets {key:?} in two relations")));
                    }
                    *slot = Some(c as u32);
                }
            }
        }
        let mut degree = vec![0u32; self.gadgets.len()];
        let mut total = 0u32;
        for (&(x, y), c) in &observed {
            let c = c.ok_or_else(|| Error::Decode(format!("no edge relation holds between the references of gadgets {x} and {y}")))?;
            degree[x as usize] += 1;
            degree[y as usize] += 1;
            total = modulus.add(total, c);
        }
        for (i, g) in self.gadgets.iter().enumerate() {
            let expected = (degree[i].max(1) - 1) as u64 * q as u64;
            if expected >= 40 || g.len() as u64 != 1u64 << expected {
                return Err(Error::Decode(format!(
                    "gadget {i} has {} vertices but {} neighboring gadgets",
                    g.len(),
                    degree[i]
                )));
            }
        }
        Ok(modulus.value(modulus.neg(total)))
    }
}

/// Decides the CFI query: the total twist of any twist function realising
/// the given relations. Uses the least vertex of each gadget as reference.
pub fn cfi_query_solve(s: &RelationalCfi) -> Result<RingValue> {
    let refs: Vec<u32> = s.gadgets.iter().map(|g| g.iter().copied().min().unwrap_or(0)).collect();
    s.solve_with_references(&refs)
}

/// A family of gadget translations `d_x` with `Σ d_x = 0`, acting by
/// `u ↦ u + d_{orig(u)}`. Absent entries act as the identity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialMap {
    modulus: Modulus,
    d: Vec<Option<Vec<u32>>>,
}

impl PartialMap {
    pub fn identity(base: &BaseGraph, modulus: Modulus) -> Self {
        PartialMap { modulus, d: vec![None; base.n()] }
    }

    pub fn from_translations(base: &BaseGraph, modulus: Modulus, d: Vec<Option<Vec<u32>>>) -> Result<Self> {
        if d.len() != base.n() {
            return Err(Error::Argument("one translation slot per base vertex expected".into()));
        }
        let mut map = PartialMap::identity(base, modulus);
        for (x, t) in d.into_iter().enumerate() {
            if let Some(t) = t {
                map.set(base, x as u32, t)?;
            }
        }
        Ok(map)
    }

    /// Sets `d_x`; rejects vectors of the wrong length or nonzero sum.
    pub fn set(&mut self, base: &BaseGraph, x: u32, t: Vec<u32>) -> Result<()> {
        if t.len() != base.degree(x) {
            return Err(Error::Argument(format!("translation at {x} has wrong length")));
        }
        let t: Vec<u32> = t.into_iter().map(|v| v & self.modulus.mask()).collect();
        if self.modulus.sum(t.iter().copied()) != 0 {
            return Err(Error::Argument(format!("translation at {x} does not sum to zero")));
        }
        self.d[x as usize] = if t.iter().all(|&v| v == 0) { None } else { Some(t) };
        Ok(())
    }

    pub fn modulus(&self) -> Modulus {
        self.modulus
    }

    pub fn translation(&self, x: u32) -> Option<&[u32]> {
        self.d[x as usize].as_deref()
    }

    pub fn is_identity(&self) -> bool {
        self.d.iter().all(Option::is_none)
    }

    /// Pointwise sum of the translation families (the maps commute).
    pub fn compose(&self, other: &PartialMap) -> PartialMap {
        assert_eq!(self.modulus, other.modulus, "maps over different rings");
        let m = self.modulus;
        let d = self
            .d
            .iter()
            .zip(&other.d)
            .map(|(a, b)| match (a, b) {
                (None, None) => None,
                (Some(a), None) => Some(a.clone()),
                (None, Some(b)) => Some(b.clone()),
                (Some(a), Some(b)) => {
                    let s: Vec<u32> = a.iter().zip(b).map(|(&x, &y)| m.add(x, y)).collect();
                    (!s.iter().all(|&v| v == 0)).then_some(s)
                }
            })
            .collect();
        PartialMap { modulus: m, d }
    }

    pub fn inverse(&self) -> PartialMap {
        let m = self.modulus;
        PartialMap {
            modulus: m,
            d: self.d.iter().map(|t| t.as_ref().map(|t| t.iter().map(|&v| m.neg(v)).collect())).collect(),
        }
    }

    #[inline]
    pub fn apply(&self, s: &CfiStructure, u: u32) -> u32 {
        match &self.d[s.origin(u) as usize] {
            Some(t) => s.translate(u, t),
            None => u,
        }
    }

    pub fn apply_tuple(&self, s: &CfiStructure, u: &[u32]) -> Vec<u32> {
        u.iter().map(|&x| self.apply(s, x)).collect()
    }

    /// Edge offsets `d_x(y) + d_y(x)` of the map, i.e. the twist change
    /// it realises.
    pub fn twist_shift(&self, base: &BaseGraph) -> Vec<u32> {
        let m = self.modulus;
        base.edges()
            .iter()
            .map(|&(x, y)| {
                let dx = self.translation(x).map_or(0, |t| t[base.neighbor_position(x, y).unwrap()]);
                let dy = self.translation(y).map_or(0, |t| t[base.neighbor_position(y, x).unwrap()]);
                m.add(dx, dy)
            })
            .collect()
    }
}

fn check_simple_path(base: &BaseGraph, path: &[u32]) -> Result<()> {
    if path.len() < 2 {
        return Err(Error::Argument("path needs at least two vertices".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for &x in path {
        if x as usize >= base.n() || !seen.insert(x) {
            return Err(Error::Argument(format!("path {path:?} is not simple")));
        }
    }
    if path.windows(2).any(|w| !base.adjacent(w[0], w[1])) {
        return Err(Error::Argument(format!("path {path:?} uses a non-edge")));
    }
    Ok(())
}

/// The path isomorphism `π[c, (x_1, …, x_n)]`: interior vertices get `c`
/// toward the predecessor and `−c` toward the successor. It maps `CFI(f)`
/// onto `CFI(f')` where `f'` adds `c` on the first edge and `−c` on the last.
pub fn path_isomorphism(base: &BaseGraph, c: RingValue, path: &[u32]) -> Result<PartialMap> {
    check_simple_path(base, path)?;
    let m = c.modulus();
    let mut map = PartialMap::identity(base, m);
    for i in 1..path.len() - 1 {
        let x = path[i];
        let mut t = vec![0u32; base.degree(x)];
        t[base.neighbor_position(x, path[i - 1]).unwrap()] = c.value();
        t[base.neighbor_position(x, path[i + 1]).unwrap()] = m.neg(c.value());
        map.set(base, x, t)?;
    }
    Ok(map)
}

/// The star isomorphism for paths `s_i = (x^i_1, …, x^i_{ℓ_i} = z)` that
/// share only their last vertex `z`. Adds `c_i` on the first edge of `s_i`.
pub fn star_isomorphism(base: &BaseGraph, c: &[RingValue], paths: &[Vec<u32>]) -> Result<PartialMap> {
    if c.len() != paths.len() || c.is_empty() {
        return Err(Error::Argument("one coefficient per path expected".into()));
    }
    let m = c[0].modulus();
    if c.iter().any(|v| v.modulus() != m) {
        return Err(Error::Argument("coefficients over different rings".into()));
    }
    if m.sum(c.iter().map(|v| v.value())) != 0 {
        return Err(Error::Argument("star coefficients must sum to zero".into()));
    }
    let z = *paths[0].last().ok_or_else(|| Error::Argument("empty path".into()))?;
    let mut used = std::collections::BTreeSet::new();
    for p in paths {
        check_simple_path(base, p)?;
        if *p.last().unwrap() != z {
            return Err(Error::Argument("star paths must end at a common center".into()));
        }
        for &x in &p[..p.len() - 1] {
            if !used.insert(x) {
                return Err(Error::Argument(format!("star paths overlap at {x}")));
            }
        }
    }
    let mut map = PartialMap::identity(base, m);
    let mut center = vec![0u32; base.degree(z)];
    for (p, ci) in paths.iter().zip(c) {
        let arm = path_isomorphism(base, *ci, p)?;
        map = map.compose(&arm);
        let pos = base.neighbor_position(z, p[p.len() - 2]).unwrap();
        center[pos] = m.add(center[pos], ci.value());
    }
    map.set(base, z, center)?;
    Ok(map)
}

/// Exhaustively checks that `m` is an isomorphism `a → b`: a bijection that
/// preserves `⪯`, `R_I`, `R_C` and every `R_{E,c}` in both directions.
///
/// For the arity-4 relations this compares the induced map on pair labels:
/// preserving `R_I` on all quadruples is the same as the label map being
/// well defined, injective and monotone.
pub fn verify_isomorphism(m: &PartialMap, a: &CfiStructure, b: &CfiStructure) -> bool {
    if a.base != b.base || a.modulus != b.modulus || m.modulus != a.modulus {
        return false;
    }
    let n = a.universe_len();
    let image: Vec<u32> = (0..n as u32).map(|u| m.apply(a, u)).collect();
    let mut hit = vec![false; n];
    for (u, &v) in image.iter().enumerate() {
        if hit[v as usize] || a.origin(u as u32) != b.origin(v) {
            return false;
        }
        hit[v as usize] = true;
    }
    for shift in [0u32, 1] {
        let mut label_map: BTreeMap<Vec<(u32, u32)>, Vec<(u32, u32)>> = BTreeMap::new();
        for x in 0..a.base.n() as u32 {
            for u in a.gadget(x) {
                for v in a.gadget(x) {
                    let la = a.label(u, v, shift);
                    let lb = b.label(image[u as usize], image[v as usize], shift);
                    match label_map.get(&la) {
                        Some(prev) if *prev != lb => return false,
                        Some(_) => {}
                        None => {
                            label_map.insert(la, lb);
                        }
                    }
                }
            }
        }
        // Cross-gadget pairs carry the empty label on both sides.
        let empty = Vec::new();
        if label_map.get(&empty).is_some_and(|l| !l.is_empty()) {
            return false;
        }
        let targets: Vec<&Vec<(u32, u32)>> = label_map.values().collect();
        if targets.windows(2).any(|w| w[0] >= w[1]) {
            return false;
        }
    }
    for &(x, y) in a.base.edges() {
        for u in a.gadget(x) {
            for v in a.gadget(y) {
                if a.edge_relation_index(u, v) != b.edge_relation_index(image[u as usize], image[v as usize]) {
                    return false;
                }
            }
        }
    }
    true
}

/// An isomorphism `CFI(f) → CFI(g)` composed from path isomorphisms along a
/// BFS spanning tree, or `None` when the total twists differ.
pub fn find_isomorphism(base: &BaseGraph, f: &TwistFunction, g: &TwistFunction) -> Option<PartialMap> {
    let m = f.modulus;
    let n = base.n();
    let mut parent = vec![u32::MAX; n];
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    seen[0] = true;
    let mut queue = std::collections::VecDeque::from([0u32]);
    while let Some(x) = queue.pop_front() {
        order.push(x);
        for &y in base.neighbors(x) {
            if !seen[y as usize] {
                seen[y as usize] = true;
                parent[y as usize] = x;
                queue.push_back(y);
            }
        }
    }
    let mut delta = g.difference(f);
    let mut map = PartialMap::identity(base, m);
    let mut push = |delta: &mut Vec<u32>, path: &[u32]| {
        let e = base.edge_index(path[0], path[1]).unwrap();
        let c = delta[e];
        if c == 0 {
            return;
        }
        let arm = path_isomorphism(base, m.value(c), path).expect("tree paths are simple");
        let last = base.edge_index(path[path.len() - 2], path[path.len() - 1]).unwrap();
        delta[e] = 0;
        delta[last] = m.add(delta[last], c);
        map = map.compose(&arm);
    };
    let is_tree = |x: u32, y: u32| parent[x as usize] == y || parent[y as usize] == x;
    for &(x, y) in base.edges() {
        if is_tree(x, y) {
            continue;
        }
        let path = if parent[x as usize] != u32::MAX { [y, x, parent[x as usize]] } else { [x, y, parent[y as usize]] };
        push(&mut delta, &path);
    }
    let root = order[0];
    for &x in order.iter().rev() {
        let p = parent[x as usize];
        if p == u32::MAX || p == root {
            continue;
        }
        push(&mut delta, &[x, p, parent[p as usize]]);
    }
    let children: Vec<u32> = base.neighbors(root).iter().copied().filter(|&y| parent[y as usize] == root).collect();
    for w in children.windows(2) {
        push(&mut delta, &[w[0], root, w[1]]);
    }
    delta.iter().all(|&v| v == 0).then_some(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basegraph::catalog;

    fn k4() -> Arc<BaseGraph> {
        Arc::new(catalog::complete(4))
    }

    #[test]
    fn universe_sizes() {
        let m2 = Modulus::new(2).unwrap();
        let s = CfiStructure::build(k4(), TwistFunction::zero(&k4(), m2)).unwrap();
        assert_eq!(s.universe_len(), 64);
        let m1 = Modulus::new(1).unwrap();
        assert_eq!(CfiStructure::build(k4(), TwistFunction::zero(&k4(), m1)).unwrap().universe_len(), 16);
        let q4 = Arc::new(catalog::hypercube(4));
        assert_eq!(CfiStructure::build(q4.clone(), TwistFunction::zero(&q4, m2)).unwrap().universe_len(), 1024);
    }

    #[test]
    fn universe_is_sorted_and_sum_zero() {
        let m = Modulus::new(2).unwrap();
        let s = CfiStructure::build(k4(), TwistFunction::zero(&k4(), m)).unwrap();
        for u in 1..s.universe_len() as u32 {
            let prev = (s.origin(u - 1), s.values(u - 1));
            assert!(prev < (s.origin(u), s.values(u)));
        }
        for u in 0..s.universe_len() as u32 {
            assert_eq!(m.sum(s.values(u).iter().copied()), 0);
            assert_eq!(s.index_of(s.origin(u), s.values(u)), Some(u));
        }
    }

    #[test]
    fn total_twist_examples() {
        let g = k4();
        let m = Modulus::new(2).unwrap();
        assert_eq!(TwistFunction::zero(&g, m).total().value(), 0);
        let one = TwistFunction::zero(&g, m).twisted(&g, 0, 1, 3).unwrap();
        assert_eq!(one.total().value(), 3);
        assert_eq!(one.twisted(&g, 2, 3, 1).unwrap().total().value(), 0);
    }

    #[test]
    fn path_isomorphism_expansion_on_k4() {
        let g = k4();
        let m = Modulus::new(2).unwrap();
        // path (t', t, u) = (1, 0, 2)
        let p = path_isomorphism(&g, m.value(2), &[1, 0, 2]).unwrap();
        assert_eq!(p.translation(0), Some(&[2, 2, 0][..]));
        assert!(path_isomorphism(&g, m.value(0), &[1, 0, 2]).unwrap().is_identity());
        let back = path_isomorphism(&g, m.value(2).neg_value(), &[1, 0, 2]).unwrap();
        assert!(p.compose(&back).is_identity());
        assert!(path_isomorphism(&g, m.value(1), &[1, 0, 1]).is_err());
    }

    #[test]
    fn query_sign_convention() {
        let g = k4();
        let m = Modulus::new(2).unwrap();
        let f = TwistFunction::zero(&g, m).twisted(&g, 0, 1, 3).unwrap();
        let s = CfiStructure::build(g, f).unwrap();
        assert_eq!(cfi_query_solve(&s.strip()).unwrap().value(), 3);
    }

    impl RingValue {
        fn neg_value(self) -> RingValue {
            -self
        }
    }
}
