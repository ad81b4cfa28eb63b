//! Similarity matrices that blur a twist, the star maps `τ_a` and `ψ_ξ`,
//! component classification and active-region certificates.
//!
//! Every builder audits the hypotheses it relies on and returns the audit
//! alongside the matrix. Under [`AuditPolicy::Enforce`] a failed hypothesis
//! is an error; under [`AuditPolicy::Override`] the matrix is still built
//! and the report is marked as overridden, so experimental output can never
//! pass for an audited instance.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::basegraph::BaseGraph;
use crate::blurer::{blurer_for, theta, Blurer};
use crate::cfi::{path_isomorphism, star_isomorphism, CfiStructure, PartialMap, TwistFunction};
use crate::gf2::BlockMatrix;
use crate::orbits::{orbit_partition, OrbitPartition};
use crate::ring::RingValue;
use crate::{Error, Result};

/// Whether failed hypotheses abort construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AuditPolicy {
    #[default]
    Enforce,
    Override,
}

/// One audited hypothesis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AuditCheck {
    pub hypothesis: String,
    pub required: String,
    pub actual: String,
    pub holds: bool,
}

/// Machine-readable record of the hypotheses behind a construction.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub subject: String,
    pub checks: Vec<AuditCheck>,
    /// Set when the construction went ahead despite failures.
    pub overridden: bool,
}

impl AuditReport {
    pub fn new(subject: impl Into<String>) -> Self {
        AuditReport { subject: subject.into(), ..Default::default() }
    }

    pub fn check(&mut self, hypothesis: &str, required: impl fmt::Display, actual: impl fmt::Display, holds: bool) {
        self.checks.push(AuditCheck {
            hypothesis: hypothesis.to_string(),
            required: required.to_string(),
            actual: actual.to_string(),
            holds,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AuditCheck> {
        self.checks.iter().filter(|c| !c.holds)
    }

    /// Copies the failing checks of a nested construction, prefixed.
    /// Identical failures are recorded once.
    pub fn absorb(&mut self, prefix: &str, nested: &AuditReport) {
        for c in nested.failures() {
            let hypothesis = format!("{prefix}: {}", c.hypothesis);
            if !self.checks.iter().any(|x| x.hypothesis == hypothesis && x.actual == c.actual) {
                self.checks.push(AuditCheck { hypothesis, ..c.clone() });
            }
        }
    }

    fn finish(mut self, policy: AuditPolicy) -> Result<Self> {
        if self.passed() {
            return Ok(self);
        }
        match policy {
            AuditPolicy::Enforce => Err(Error::Audit(Box::new(self))),
            AuditPolicy::Override => {
                self.overridden = true;
                Ok(self)
            }
        }
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let failing: Vec<&AuditCheck> = self.failures().collect();
        write!(f, "{}: {} of {} hypotheses hold", self.subject, self.checks.len() - failing.len(), self.checks.len())?;
        for c in failing {
            write!(f, "; {} (required {}, got {})", c.hypothesis, c.required, c.actual)?;
        }
        Ok(())
    }
}

/// `r(k)`: `r(1) = 1`, `r(k) = max(4·r(k−1) + 2, 2k + 2)`.
pub fn r_bound(k: usize) -> usize {
    assert!(k >= 1);
    (2..=k).fold(1usize, |r, j| r.saturating_mul(4).saturating_add(2).max(2 * j + 2))
}

/// `d(k, m)`: `d(1, m) = 3 + m`, `d(k, m) = max(2^{i+1} + m − 1, d(k−1, m+1))`
/// where `2^{i−1} − 1 < k ≤ 2^i − 1`.
pub fn d_bound(k: usize, m: usize) -> usize {
    assert!(k >= 1);
    if k == 1 {
        return 3 + m;
    }
    let i = crate::blurer::level(k);
    ((1usize << (i + 1)) + m - 1).max(d_bound(k - 1, m + 1))
}

/// `q(k) = 1 + θ(k)`.
pub fn q_bound(k: usize) -> u32 {
    1 + theta(k)
}

/// The bound functions evaluated at `(k, m)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BoundParams {
    pub k: usize,
    pub m: usize,
    pub r: usize,
    pub r_next: usize,
    pub theta: u32,
    pub degree: usize,
    pub q: u32,
    pub connectivity: usize,
    pub girth: usize,
}

impl BoundParams {
    pub fn new(k: usize, m: usize) -> Self {
        let r_next = r_bound(k + 1);
        BoundParams {
            k,
            m,
            r: r_bound(k),
            r_next,
            theta: theta(k),
            degree: d_bound(k, m),
            q: q_bound(k),
            connectivity: m + 2 * k + 1,
            girth: r_next.saturating_mul(2),
        }
    }
}

/// Paths `s_i = (z, …, e_i, e_i')` that share only their first vertex.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StarLayout {
    paths: Vec<Vec<u32>>,
}

impl StarLayout {
    pub fn new(base: &BaseGraph, paths: Vec<Vec<u32>>) -> Result<Self> {
        let z = *paths
            .first()
            .and_then(|p| p.first())
            .ok_or_else(|| Error::Argument("a star needs at least one path".into()))?;
        let mut used = BTreeSet::from([z]);
        for p in &paths {
            if p.len() < 3 || p[0] != z {
                return Err(Error::Argument("every star path starts at z and has at least two edges".into()));
            }
            if p.iter().any(|&x| x as usize >= base.n()) || p.windows(2).any(|w| !base.adjacent(w[0], w[1])) {
                return Err(Error::Argument(format!("star path {p:?} is not a path of the base graph")));
            }
            for &x in &p[1..] {
                if !used.insert(x) {
                    return Err(Error::Argument(format!("star paths meet at {x}")));
                }
            }
        }
        Ok(StarLayout { paths })
    }

    /// Finds a star whose first path ends with `(…, t, t2)` and has `len`
    /// edges, with one path through every neighbour of the centre and no
    /// vertex in `blocked`. Stars whose paths are shortest paths up to
    /// their tips are preferred; otherwise any simple paths are accepted.
    /// Centres and paths are tried in vertex order.
    pub fn search(base: &BaseGraph, t: u32, t2: u32, len: usize, blocked: &[u32]) -> Option<Self> {
        if len < 2 || !base.adjacent(t, t2) {
            return None;
        }
        let blocked: BTreeSet<u32> = blocked.iter().copied().collect();
        [true, false].into_iter().find_map(|geodesic| search_star(base, t, t2, len, &blocked, geodesic))
    }

    pub fn z(&self) -> u32 {
        self.paths[0][0]
    }

    pub fn d(&self) -> usize {
        self.paths.len()
    }

    pub fn paths(&self) -> &[Vec<u32>] {
        &self.paths
    }

    /// `e_i`.
    pub fn tip(&self, i: usize) -> u32 {
        let p = &self.paths[i];
        p[p.len() - 2]
    }

    /// `e_i'`.
    pub fn tip_end(&self, i: usize) -> u32 {
        *self.paths[i].last().unwrap()
    }

    fn reversed(&self, i: usize) -> Vec<u32> {
        self.paths[i].iter().rev().copied().collect()
    }

    fn path_of(&self) -> BTreeMap<u32, usize> {
        let mut m = BTreeMap::new();
        for (i, p) in self.paths.iter().enumerate() {
            for &x in &p[1..] {
                m.insert(x, i);
            }
        }
        m
    }
}

/// Upper bound on candidate paths enumerated from one start vertex.
const PATH_CANDIDATE_LIMIT: usize = 10_000;

fn search_star(base: &BaseGraph, t: u32, t2: u32, len: usize, blocked: &BTreeSet<u32>, geodesic: bool) -> Option<StarLayout> {
    for z in 0..base.n() as u32 {
        if blocked.contains(&z) || z == t || z == t2 {
            continue;
        }
        let dist = base.distances_from(&[z]);
        if geodesic && (dist[t as usize] != Some(len - 1) || dist[t2 as usize] != Some(len)) {
            continue;
        }
        let mut used = BTreeSet::from([z]);
        for &n in base.neighbors(z) {
            let firsts: Vec<Vec<u32>> = star_paths(base, &dist, len, z, n, blocked, &used, geodesic)
                .into_iter()
                .filter(|p| p[len - 1] == t && p[len] == t2)
                .collect();
            let others: Vec<u32> = base.neighbors(z).iter().copied().filter(|&x| x != n).collect();
            for first in firsts {
                used.extend(first[1..].iter().copied());
                let mut paths = vec![first.clone()];
                if extend_star(base, &dist, len, &others, blocked, &mut used, &mut paths, geodesic) {
                    return StarLayout::new(base, paths).ok();
                }
                for x in &first[1..] {
                    used.remove(x);
                }
            }
        }
    }
    None
}

/// Simple paths `(z, start, …)` with `len` edges avoiding `used` and
/// `blocked`, in lexicographic order. In geodesic mode every vertex
/// before the last lies at its own depth from `z`.
#[allow(clippy::too_many_arguments)]
fn star_paths(
    base: &BaseGraph,
    dist: &[Option<usize>],
    len: usize,
    z: u32,
    start: u32,
    blocked: &BTreeSet<u32>,
    used: &BTreeSet<u32>,
    geodesic: bool,
) -> Vec<Vec<u32>> {
    let mut stack = vec![vec![z, start]];
    let mut out = Vec::new();
    while let Some(p) = stack.pop() {
        let last = *p.last().unwrap();
        let depth = p.len() - 1;
        if used.contains(&last) || blocked.contains(&last) || p[..depth].contains(&last) {
            continue;
        }
        if geodesic && depth < len && dist[last as usize] != Some(depth) {
            continue;
        }
        if depth == len {
            out.push(p);
            if out.len() >= PATH_CANDIDATE_LIMIT {
                break;
            }
            continue;
        }
        for &y in base.neighbors(last).iter().rev() {
            let mut q = p.clone();
            q.push(y);
            stack.push(q);
        }
    }
    out.sort();
    out
}

#[allow(clippy::too_many_arguments)]
fn extend_star(
    base: &BaseGraph,
    dist: &[Option<usize>],
    len: usize,
    starts: &[u32],
    blocked: &BTreeSet<u32>,
    used: &mut BTreeSet<u32>,
    paths: &mut Vec<Vec<u32>>,
    geodesic: bool,
) -> bool {
    let Some((&first, rest)) = starts.split_first() else { return true };
    let z = paths[0][0];
    for p in star_paths(base, dist, len, z, first, blocked, used, geodesic) {
        used.extend(p[1..].iter().copied());
        paths.push(p.clone());
        if extend_star(base, dist, len, rest, blocked, used, paths, geodesic) {
            return true;
        }
        paths.pop();
        for x in &p[1..] {
            used.remove(x);
        }
    }
    false
}

/// Position of a component relative to the star.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ComponentClass {
    /// Contains `e_i` and `e_i'`.
    Tip(usize),
    /// A star component meeting only the path `s_i`.
    IStar(usize),
    /// A star component meeting several paths (in particular `z`).
    StarCenter,
    Sky,
}

impl ComponentClass {
    pub fn is_star(self) -> bool {
        matches!(self, ComponentClass::IStar(_) | ComponentClass::StarCenter)
    }
}

/// Classifies a connected vertex set against the star.
pub fn classify_component(base: &BaseGraph, layout: &StarLayout, c: &[u32]) -> Result<ComponentClass> {
    if c.is_empty() || base.induced_components(c).len() != 1 {
        return Err(Error::Argument(format!("{c:?} does not induce a connected subgraph")));
    }
    Ok(classify_unchecked(layout, &layout.path_of(), c))
}

fn classify_unchecked(layout: &StarLayout, path_of: &BTreeMap<u32, usize>, c: &[u32]) -> ComponentClass {
    let set: BTreeSet<u32> = c.iter().copied().collect();
    for i in 0..layout.d() {
        if set.contains(&layout.tip(i)) && set.contains(&layout.tip_end(i)) {
            return ComponentClass::Tip(i);
        }
    }
    if (0..layout.d()).any(|i| set.contains(&layout.tip_end(i))) {
        return ComponentClass::Sky;
    }
    let mut met = BTreeSet::new();
    for &x in &set {
        if x == layout.z() {
            return ComponentClass::StarCenter;
        }
        if let Some(&i) = path_of.get(&x) {
            met.insert(i);
        }
    }
    match met.len() {
        0 => ComponentClass::Sky,
        1 => ComponentClass::IStar(*met.first().unwrap()),
        _ => ComponentClass::StarCenter,
    }
}

/// Positions of a tuple grouped by the connected component of
/// `G[orig(u)]` their origin lies in, with the component's vertices.
pub fn tuple_components(s: &CfiStructure, u: &[u32]) -> Vec<(Vec<u32>, Vec<usize>)> {
    let orig: Vec<u32> = u.iter().map(|&a| s.origin(a)).collect();
    s.base()
        .induced_components(&orig)
        .into_iter()
        .map(|c| {
            let pos = (0..u.len()).filter(|&p| c.binary_search(&orig[p]).is_ok()).collect();
            (c, pos)
        })
        .collect()
}

/// Per-position component classes of tuples, cached by origin vector.
struct Classifier<'a> {
    s: &'a CfiStructure,
    layout: &'a StarLayout,
    path_of: BTreeMap<u32, usize>,
    cache: HashMap<Vec<u32>, Vec<ComponentClass>>,
}

impl<'a> Classifier<'a> {
    fn new(s: &'a CfiStructure, layout: &'a StarLayout) -> Self {
        Classifier { s, layout, path_of: layout.path_of(), cache: HashMap::new() }
    }

    fn classes(&mut self, u: &[u32]) -> Vec<ComponentClass> {
        let orig: Vec<u32> = u.iter().map(|&a| self.s.origin(a)).collect();
        if let Some(c) = self.cache.get(&orig) {
            return c.clone();
        }
        let mut out = vec![ComponentClass::Sky; u.len()];
        for (c, pos) in tuple_components(self.s, u) {
            let class = classify_unchecked(self.layout, &self.path_of, &c);
            for p in pos {
                out[p] = class;
            }
        }
        self.cache.insert(orig, out.clone());
        out
    }
}

/// The path isomorphisms `π[a_i, s_i]`, each adding `a_i` on `{e_i, e_i'}`.
fn tip_maps(s: &CfiStructure, layout: &StarLayout, a: &[u32]) -> Result<Vec<PartialMap>> {
    if a.len() != layout.d() {
        return Err(Error::Argument(format!("expected {} star coefficients, got {}", layout.d(), a.len())));
    }
    let m = s.modulus();
    a.iter()
        .enumerate()
        .map(|(i, &ai)| path_isomorphism(s.base(), m.value(ai), &layout.reversed(i)))
        .collect()
}

/// The star isomorphism `φ_ξ`, adding `ξ_i` on every `{e_i, e_i'}`.
fn star_map(s: &CfiStructure, layout: &StarLayout, xi: &[u32]) -> Result<PartialMap> {
    if xi.len() != layout.d() {
        return Err(Error::Argument(format!("expected {} star coefficients, got {}", layout.d(), xi.len())));
    }
    let m = s.modulus();
    let c: Vec<RingValue> = xi.iter().map(|&v| m.value(v)).collect();
    let paths: Vec<Vec<u32>> = (0..layout.d()).map(|i| layout.reversed(i)).collect();
    star_isomorphism(s.base(), &c, &paths)
}

fn apply_tips(s: &CfiStructure, classes: &[ComponentClass], maps: &[PartialMap], u: &[u32]) -> Vec<u32> {
    u.iter()
        .zip(classes)
        .map(|(&x, c)| match c {
            ComponentClass::Tip(i) => maps[*i].apply(s, x),
            _ => x,
        })
        .collect()
}

fn apply_star(s: &CfiStructure, classes: &[ComponentClass], phi: &PartialMap, u: &[u32]) -> Vec<u32> {
    u.iter().zip(classes).map(|(&x, c)| if c.is_star() { phi.apply(s, x) } else { x }).collect()
}

/// `τ_a(u)`: applies `π[a_i, s_i]` to the entries lying in `i`-tip
/// components and leaves all others fixed.
pub fn tau_map(s: &CfiStructure, layout: &StarLayout, a: &[u32], u: &[u32]) -> Result<Vec<u32>> {
    let maps = tip_maps(s, layout, a)?;
    let classes = Classifier::new(s, layout).classes(u);
    Ok(apply_tips(s, &classes, &maps, u))
}

/// `ψ_ξ(u)`: applies the star isomorphism `φ_ξ` to the entries lying in
/// star components and leaves all others fixed.
pub fn psi_xi(s: &CfiStructure, layout: &StarLayout, xi: &[u32], u: &[u32]) -> Result<Vec<u32>> {
    let phi = star_map(s, layout, xi)?;
    let classes = Classifier::new(s, layout).classes(u);
    Ok(apply_star(s, &classes, &phi, u))
}

/// The single edge on which two twists differ and the difference there.
fn single_edge_difference(a: &CfiStructure, b: &CfiStructure, t: u32, t2: u32) -> Result<(usize, u32, Vec<usize>)> {
    if a.base() != b.base() || a.modulus() != b.modulus() {
        return Err(Error::Argument("structures over different base graphs or rings".into()));
    }
    let e = a
        .base()
        .edge_index(t, t2)
        .ok_or_else(|| Error::Argument(format!("{t}-{t2} is not an edge")))?;
    let diff = b.twist().difference(a.twist());
    let others: Vec<usize> = (0..diff.len()).filter(|&i| i != e && diff[i] != 0).collect();
    Ok((e, diff[e], others))
}

fn pebble_distance(base: &BaseGraph, s: &CfiStructure, t: u32, pebbles: &[u32]) -> Option<usize> {
    let origins: Vec<u32> = pebbles.iter().map(|&p| s.origin(p)).collect();
    base.distance_to_set(t, &origins)
}

fn show_distance(d: Option<usize>) -> String {
    d.map_or_else(|| "∞".to_string(), |d| d.to_string())
}

/// The hypotheses of the arity-1 construction.
pub fn audit_1ary(a: &CfiStructure, b: &CfiStructure, pebbles: &[u32], t: u32, t2: u32, blurer: &Blurer) -> Result<AuditReport> {
    let base = a.base();
    let (_, theta, others) = single_edge_difference(a, b, t, t2)?;
    let m = pebbles.len();
    let mut r = AuditReport::new(format!("arity-1 blur at {t}-{t2}"));
    r.check("twist differs only at {t,t'}", "no other edge", format!("{} other edges", others.len()), others.is_empty());
    r.check("twist is even", "θ ∈ 2·Z", theta, theta % 2 == 0);
    r.check("blurer arity", 1, blurer.k(), blurer.k() == 1);
    r.check("blurer ring", a.modulus().q(), blurer.q(), blurer.q() == a.modulus().q());
    r.check("blurer value matches twist", theta, blurer.a(), blurer.a() == theta);
    r.check("blurer length equals deg(t)", base.degree(t), blurer.d(), blurer.d() == base.degree(t));
    r.check("deg(t)", "≥ 3", base.degree(t), base.degree(t) >= 3);
    let dist = pebble_distance(base, a, t, pebbles);
    r.check("dist(t, orig(p))", "≥ 3", show_distance(dist), dist.is_none_or(|d| d >= 3));
    let conn = base.connectivity();
    r.check("connectivity", format!("≥ {}", m + 3), conn, conn >= m + 3);
    Ok(r)
}

/// Neighbour order used to index blurer tuples at `t`: `t2` first, then
/// the remaining neighbours ascending.
fn blurer_order(base: &BaseGraph, t: u32, t2: u32) -> Vec<usize> {
    let first = base.neighbor_position(t, t2).expect("t2 adjacent to t");
    std::iter::once(first).chain((0..base.degree(t)).filter(|&i| i != first)).collect()
}

/// The arity-1 matrix: identity off gadget `t`, and `u ↦ u + ξ` summed
/// over `Ξ` on gadget `t`.
fn one_ary_matrix(
    s: &CfiStructure,
    rows: Arc<OrbitPartition>,
    cols: Arc<OrbitPartition>,
    t: u32,
    t2: u32,
    tuples: &[Vec<u32>],
) -> Result<BlockMatrix> {
    let base = s.base();
    let d = base.degree(t);
    if tuples.iter().any(|xi| xi.len() != d) {
        return Err(Error::Argument(format!("blurer tuples must have length deg({t}) = {d}")));
    }
    if rows.k() != 1 || cols.k() != 1 {
        return Err(Error::Argument("arity-1 matrix needs 1-tuple partitions".into()));
    }
    let order = blurer_order(base, t, t2);
    let shifts: Vec<Vec<u32>> = tuples
        .iter()
        .map(|xi| {
            let mut sh = vec![0u32; d];
            for (i, &p) in order.iter().enumerate() {
                sh[p] = xi[i];
            }
            sh
        })
        .collect();
    let gadget = s.gadget(t);
    let entries = (0..s.universe_len() as u32).flat_map(|u| {
        let targets: Vec<u32> = if gadget.contains(&u) {
            shifts.iter().map(|sh| s.translate(u, sh)).collect()
        } else {
            vec![u]
        };
        targets.into_iter().map(move |v| (u, v))
    });
    Ok(BlockMatrix::from_entries(rows, cols, entries))
}

/// An arity-1 blur matrix together with its audit.
#[derive(Clone, Debug)]
pub struct OneAryBlur {
    pub matrix: BlockMatrix,
    pub audit: AuditReport,
}

/// The arity-1 similarity matrix between `a` and `b = a + θ·{t, t2}`
/// built from the blurer `Ξ` (tuples indexed by `t2` first, then the
/// other neighbours of `t` ascending).
pub fn build_s_1ary(
    a: &CfiStructure,
    b: &CfiStructure,
    pebbles: &[u32],
    t: u32,
    t2: u32,
    blurer: &Blurer,
    policy: AuditPolicy,
) -> Result<OneAryBlur> {
    let audit = audit_1ary(a, b, pebbles, t, t2, blurer)?.finish(policy)?;
    let rows = Arc::new(orbit_partition(a, pebbles, 1)?);
    let cols = Arc::new(orbit_partition(b, pebbles, 1)?);
    let matrix = one_ary_matrix(a, rows, cols, t, t2, blurer.tuples())?;
    Ok(OneAryBlur { matrix, audit })
}

/// The 2k-orbit partitions of both structures and the type-preserving
/// bijection between them, as consumed by [`crate::gf2::verify_blur`].
pub fn pair_orbits(
    a: &CfiStructure,
    b: &CfiStructure,
    pebbles: &[u32],
    k: usize,
) -> Result<(OrbitPartition, OrbitPartition, Vec<u32>)> {
    let pa = orbit_partition(a, pebbles, 2 * k)?;
    let pb = orbit_partition(b, pebbles, 2 * k)?;
    let f = crate::gf2::type_map(&pa, &pb)?;
    Ok((pa, pb, f))
}

/// Outcome of [`active_region_check`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionCheck {
    /// An entry `S(u, v) = 1` with `u_C ≠ v_C` on a component `C` outside
    /// the claimed set: `(u, v, C)`.
    pub active_outside: Option<(Vec<u32>, Vec<u32>, Vec<u32>)>,
    /// Two index pairs that agree on the claimed components and are equal
    /// elsewhere, but carry different entries.
    pub substitution_conflict: Option<((Vec<u32>, Vec<u32>), (Vec<u32>, Vec<u32>))>,
}

impl RegionCheck {
    pub fn holds(&self) -> bool {
        self.active_outside.is_none() && self.substitution_conflict.is_none()
    }
}

/// Certifies that the active region of the orbit-diagonal matrix `m` lies
/// inside `claimed`, by checking both defining conditions with `claimed` in
/// place of the active region. The structure `s` supplies origins.
pub fn active_region_check(s: &CfiStructure, m: &BlockMatrix, claimed: &[u32]) -> RegionCheck {
    let claimed: BTreeSet<u32> = claimed.iter().copied().collect();
    let rows = m.row_partition();
    let cols = m.col_partition();
    let mut col_by_type: BTreeMap<_, Vec<usize>> = BTreeMap::new();
    for q in 0..cols.len() {
        col_by_type.entry(cols.descriptor(q)).or_default().push(q);
    }
    type Key = (Vec<(usize, u32)>, Vec<(usize, u32)>);
    let mut seen: HashMap<Key, (bool, (Vec<u32>, Vec<u32>))> = HashMap::new();
    let mut out = RegionCheck { active_outside: None, substitution_conflict: None };
    for p in 0..rows.len() {
        let Some(qs) = col_by_type.get(rows.descriptor(p)) else { continue };
        let first = rows.decode(rows.block(p)[0]);
        let comps = tuple_components(s, &first);
        let (inside, outside): (Vec<_>, Vec<_>) = comps.into_iter().partition(|(c, _)| c.iter().all(|x| claimed.contains(x)));
        let a_pos: Vec<usize> = {
            let mut v: Vec<usize> = inside.iter().flat_map(|(_, p)| p.iter().copied()).collect();
            v.sort_unstable();
            v
        };
        let n_pos: Vec<usize> = outside.iter().flat_map(|(_, p)| p.iter().copied()).collect();
        for &q in qs {
            for u in rows.tuples(p) {
                for v in cols.tuples(q) {
                    let value = m.get(rows.encode(&u), cols.encode(&v));
                    if value && out.active_outside.is_none() {
                        if let Some((c, _)) = outside.iter().find(|(_, pos)| pos.iter().any(|&i| u[i] != v[i])) {
                            out.active_outside = Some((u.clone(), v.clone(), c.clone()));
                        }
                    }
                    if out.substitution_conflict.is_none() && n_pos.iter().all(|&i| u[i] == v[i]) {
                        let key = (
                            a_pos.iter().map(|&i| (i, u[i])).collect(),
                            a_pos.iter().map(|&i| (i, v[i])).collect(),
                        );
                        match seen.get(&key) {
                            Some((prev, witness)) if *prev != value => {
                                out.substitution_conflict = Some((witness.clone(), (u.clone(), v.clone())));
                            }
                            Some(_) => {}
                            None => {
                                seen.insert(key, (value, (u.clone(), v.clone())));
                            }
                        }
                    }
                    if !out.holds() {
                        return out;
                    }
                }
            }
        }
    }
    out
}

/// Structures and orbit partitions shared across a recursive build.
struct BuildCache {
    base: Arc<BaseGraph>,
    structures: BTreeMap<Vec<u32>, Arc<CfiStructure>>,
    partitions: BTreeMap<(Vec<u32>, Vec<u32>, usize), Arc<OrbitPartition>>,
}

impl BuildCache {
    fn new(base: Arc<BaseGraph>) -> Self {
        BuildCache { base, structures: BTreeMap::new(), partitions: BTreeMap::new() }
    }

    fn structure(&mut self, twist: &TwistFunction) -> Result<Arc<CfiStructure>> {
        if let Some(s) = self.structures.get(twist.values()) {
            return Ok(s.clone());
        }
        let s = Arc::new(CfiStructure::build(self.base.clone(), twist.clone())?);
        self.structures.insert(twist.values().to_vec(), s.clone());
        Ok(s)
    }

    fn partition(&mut self, twist: &TwistFunction, pebbles: &[u32], k: usize) -> Result<Arc<OrbitPartition>> {
        let key = (twist.values().to_vec(), pebbles.to_vec(), k);
        if let Some(p) = self.partitions.get(&key) {
            return Ok(p.clone());
        }
        let s = self.structure(twist)?;
        let p = Arc::new(orbit_partition(&s, pebbles, k)?);
        self.partitions.insert(key, p.clone());
        Ok(p)
    }
}

/// Construction choices for [`build_s_kary`].
#[derive(Clone, Debug, Default)]
pub struct KaryOptions {
    /// Star for the top level; searched for when absent.
    pub layout: Option<StarLayout>,
    /// Blurer for the top level; derived with [`blurer_for`] when absent.
    pub blurer: Option<Blurer>,
    pub policy: AuditPolicy,
}

/// An arity-k blur matrix with its audit and construction statistics.
#[derive(Clone, Debug)]
pub struct KaryBlur {
    pub matrix: BlockMatrix,
    pub audit: AuditReport,
    pub layout: Option<StarLayout>,
    /// Entries that would have left the block `P × τ(P)`; they are only
    /// possible when the audit failed.
    pub dropped: usize,
    pub blurable_rows: usize,
    pub non_blurable_rows: usize,
    /// Non-identity factors `S^ξ_j` built across the recursion.
    pub factors: usize,
}

/// The hypotheses of the arity-k construction at the top level.
pub fn audit_kary(
    a: &CfiStructure,
    b: &CfiStructure,
    pebbles: &[u32],
    t: u32,
    t2: u32,
    k: usize,
    layout: &StarLayout,
    blurer: &Blurer,
) -> Result<AuditReport> {
    let base = a.base();
    let (_, theta_val, others) = single_edge_difference(a, b, t, t2)?;
    let params = BoundParams::new(k, pebbles.len());
    let report = base.properties();
    let mut r = AuditReport::new(format!("arity-{k} blur at {t}-{t2}"));
    r.check("twist differs only at {t,t'}", "no other edge", format!("{} other edges", others.len()), others.is_empty());
    let degrees: BTreeSet<usize> = (0..base.n() as u32).map(|x| base.degree(x)).collect();
    r.check("regular", "one degree", format!("{degrees:?}"), degrees.len() == 1);
    let min_degree = degrees.first().copied().unwrap_or(0);
    r.check("degree", format!("≥ d(k,m) = {}", params.degree), min_degree, min_degree >= params.degree);
    r.check("connectivity", format!("≥ m+2k+1 = {}", params.connectivity), report.connectivity, report.connectivity >= params.connectivity);
    let girth = report.girth.unwrap_or(usize::MAX);
    r.check("girth", format!("≥ 2r(k+1) = {}", params.girth), show_distance(report.girth), girth >= params.girth);
    let q = a.modulus().q();
    r.check("ring", format!("q ≥ q(k) = {}", params.q), q, q >= params.q);
    let divides = params.theta >= 32 || theta_val % (1u32 << params.theta) == 0;
    r.check("twist value", format!("θ ∈ 2^{}·Z", params.theta), theta_val, divides);
    let dist = pebble_distance(base, a, t, pebbles);
    r.check("dist(t, orig(p))", format!("> r(k+1) = {}", params.r_next), show_distance(dist), dist.is_none_or(|d| d > params.r_next));
    r.check("blurer arity", k, blurer.k(), blurer.k() == k);
    r.check("blurer value matches twist", theta_val, blurer.a(), blurer.a() == theta_val);
    r.check("blurer length", layout.d(), blurer.d(), blurer.d() == layout.d());
    let z = layout.z();
    r.check("star starts at {t,t'}", format!("({t},{t2})"), format!("({},{})", layout.tip(0), layout.tip_end(0)), layout.tip(0) == t && layout.tip_end(0) == t2);
    let dz = base.distances_from(&[z]);
    let radii_ok = (0..layout.d()).all(|i| dz[layout.tip(i) as usize] == Some(params.r + 1));
    r.check("dist(z, e_i)", format!("= r(k)+1 = {}", params.r + 1), format!("{:?}", (0..layout.d()).map(|i| dz[layout.tip(i) as usize]).collect::<Vec<_>>()), radii_ok);
    r.check("dist(z, t')", params.r + 2, show_distance(dz[t2 as usize]), dz[t2 as usize] == Some(params.r + 2));
    let lengths_ok = layout.paths().iter().all(|p| p.len() == params.r + 3);
    r.check("star path length", params.r + 2, format!("{:?}", layout.paths().iter().map(|p| p.len() - 1).collect::<Vec<_>>()), lengths_ok);
    let balls: Vec<BTreeSet<u32>> = (0..layout.d())
        .map(|i| {
            let d = base.distances_from(&[layout.tip(i)]);
            (0..base.n() as u32).filter(|&x| d[x as usize].is_some_and(|d| d <= params.r)).collect()
        })
        .collect();
    let disjoint = balls.iter().enumerate().all(|(i, a)| balls[i + 1..].iter().all(|b| a.is_disjoint(b)));
    r.check("neighbourhoods N_i pairwise disjoint", "disjoint", if disjoint { "disjoint" } else { "overlapping" }, disjoint);
    Ok(r)
}

/// Builds the arity-k similarity matrix between `a` and
/// `b = a + θ·{t, t2}`. Arity 1 delegates to [`build_s_1ary`]; higher
/// arities follow the blurable / non-blurable case split and recurse into
/// arity `k − 1` with the extra pebble `p_z`.
pub fn build_s_kary(
    a: &CfiStructure,
    b: &CfiStructure,
    pebbles: &[u32],
    t: u32,
    t2: u32,
    k: usize,
    options: &KaryOptions,
) -> Result<KaryBlur> {
    let mut cache = BuildCache::new(a.base().clone());
    kary(&mut cache, a, b, pebbles, t, t2, k, options)
}

#[allow(clippy::too_many_arguments)]
fn kary(
    cache: &mut BuildCache,
    a: &CfiStructure,
    b: &CfiStructure,
    pebbles: &[u32],
    t: u32,
    t2: u32,
    k: usize,
    options: &KaryOptions,
) -> Result<KaryBlur> {
    if k == 0 {
        return Err(Error::Argument("arity must be at least 1".into()));
    }
    let base = a.base().clone();
    let md = a.modulus();
    let (_, theta_val, _) = single_edge_difference(a, b, t, t2)?;
    if k == 1 {
        let blurer = match &options.blurer {
            Some(b) => b.clone(),
            None => blurer_for(1, md.q(), theta_val, base.degree(t))?,
        };
        let audit = audit_1ary(a, b, pebbles, t, t2, &blurer)?.finish(options.policy)?;
        let rows = cache.partition(a.twist(), pebbles, 1)?;
        let cols = cache.partition(b.twist(), pebbles, 1)?;
        let matrix = one_ary_matrix(a, rows, cols, t, t2, blurer.tuples())?;
        let n = a.universe_len();
        return Ok(KaryBlur { matrix, audit, layout: None, dropped: 0, blurable_rows: n, non_blurable_rows: 0, factors: 1 });
    }
    let params = BoundParams::new(k, pebbles.len());
    let pebble_origins: Vec<u32> = pebbles.iter().map(|&p| a.origin(p)).collect();
    let layout = match &options.layout {
        Some(l) => l.clone(),
        None => StarLayout::search(&base, t, t2, params.r + 2, &pebble_origins)
            .ok_or_else(|| Error::NotFound(format!("no star of radius {} around edge {t}-{t2}", params.r + 2)))?,
    };
    let blurer = match &options.blurer {
        Some(b) => b.clone(),
        None => blurer_for(k, md.q(), theta_val, layout.d())?,
    };
    if blurer.d() != layout.d() || blurer.q() != md.q() {
        return Err(Error::Argument(format!(
            "blurer of length {} over Z/2^{} does not fit a star of {} paths over Z/2^{}",
            blurer.d(),
            blurer.q(),
            layout.d(),
            md.q()
        )));
    }
    let mut audit = audit_kary(a, b, pebbles, t, t2, k, &layout, &blurer)?;
    if !audit.passed() && options.policy == AuditPolicy::Enforce {
        return Err(Error::Audit(Box::new(audit)));
    }
    let rows = cache.partition(a.twist(), pebbles, k)?;
    let cols = cache.partition(b.twist(), pebbles, k)?;
    let z = layout.z();
    let p_z = a.gadget(z).start;
    let inner_pebbles: Vec<u32> = pebbles.iter().copied().chain([p_z]).collect();

    let mut tau_a = vec![0u32; layout.d()];
    tau_a[0] = theta_val;
    let tau = tip_maps(a, &layout, &tau_a)?;
    struct XiData {
        phi: PartialMap,
        tau: Vec<PartialMap>,
        inner: Option<(BlockMatrix, crate::gf2::Csr)>,
    }
    let mut factors = 0;
    let mut xi_data = Vec::with_capacity(blurer.len());
    for xi in blurer.tuples() {
        let inner_options = KaryOptions { layout: None, blurer: None, policy: options.policy };
        let (matrix, count, nested) = build_xi(cache, a, theta_val, &layout, xi, &inner_pebbles, k - 1, &inner_options)?;
        factors += count;
        audit.absorb("S^ξ", &nested);
        let csr = matrix.csr();
        xi_data.push(XiData { phi: star_map(a, &layout, xi)?, tau: tip_maps(a, &layout, xi)?, inner: Some((matrix, csr)) });
    }
    let audit = audit.finish(options.policy)?;

    let mut classifier = Classifier::new(a, &layout);
    let mut entries = Vec::new();
    let (mut dropped, mut blurable_rows, mut non_blurable_rows) = (0usize, 0usize, 0usize);
    for ui in 0..rows.tuple_count() as u32 {
        let u = rows.decode(ui);
        let classes = classifier.classes(&u);
        let target = cols.block_of_tuple(&apply_tips(a, &classes, &tau, &u));
        let mut push = |v: Vec<u32>, entries: &mut Vec<(u32, u32)>| {
            if cols.block_of_tuple(&v) == target {
                entries.push((ui, cols.encode(&v)));
            } else {
                dropped += 1;
            }
        };
        match u.iter().position(|&x| a.origin(x) == z) {
            None => {
                blurable_rows += 1;
                for data in &xi_data {
                    let moved = apply_star(a, &classes, &data.phi, &u);
                    push(apply_tips(a, &classes, &tau, &moved), &mut entries);
                }
            }
            Some(pos) => {
                non_blurable_rows += 1;
                let mut rest = u.clone();
                let u_z = rest.remove(pos);
                let rest_classes = classifier.classes(&rest);
                for data in &xi_data {
                    let v_z = data.phi.apply(a, u_z);
                    let x = apply_star(a, &rest_classes, &data.phi, &rest);
                    let (inner, csr) = data.inner.as_ref().expect("inner matrix built");
                    let xi_idx = inner.row_partition().encode(&x);
                    for &yi in csr.targets(xi_idx) {
                        let y = inner.col_partition().decode(yi);
                        let y_classes = classifier.classes(&y);
                        let mut v = apply_tips(a, &y_classes, &data.tau, &y);
                        v.insert(pos, v_z);
                        push(v, &mut entries);
                    }
                }
            }
        }
    }
    let matrix = BlockMatrix::from_entries(rows, cols, entries);
    Ok(KaryBlur { matrix, audit, layout: Some(layout), dropped, blurable_rows, non_blurable_rows, factors })
}

/// The twist sequence `g^1 = f, …, g^{d+1} = g − ξ` that changes one star
/// edge at a time, where `g = f + θ·{e_1, e_1'}`.
pub fn interpolating_twists(a: &CfiStructure, theta_val: u32, layout: &StarLayout, xi: &[u32]) -> Result<Vec<TwistFunction>> {
    let base = a.base();
    let md = a.modulus();
    if xi.len() != layout.d() {
        return Err(Error::Argument("ξ must have one entry per star path".into()));
    }
    let mut seq = vec![a.twist().clone()];
    for (j, &x) in xi.iter().enumerate() {
        let delta = if j == 0 { md.sub(theta_val, x) } else { md.neg(x) };
        let next = seq[j].clone().twisted(base, layout.tip(j), layout.tip_end(j), delta)?;
        seq.push(next);
    }
    Ok(seq)
}

/// The matrix `S^ξ = S^ξ_1 ⋯ S^ξ_d` over `(k−1)`-tuples, where `S^ξ_j`
/// blurs the twist change at `{e_j, e_j'}`; factors with no change are the
/// identity. Returns the product, the number of non-identity factors and
/// the merged audit of the factors.
#[allow(clippy::too_many_arguments)]
pub fn build_s_xi(
    a: &CfiStructure,
    theta_val: u32,
    layout: &StarLayout,
    xi: &[u32],
    pebbles: &[u32],
    arity: usize,
    policy: AuditPolicy,
) -> Result<(BlockMatrix, usize, AuditReport)> {
    let mut cache = BuildCache::new(a.base().clone());
    let options = KaryOptions { layout: None, blurer: None, policy };
    build_xi(&mut cache, a, theta_val, layout, xi, pebbles, arity, &options)
}

#[allow(clippy::too_many_arguments)]
fn build_xi(
    cache: &mut BuildCache,
    a: &CfiStructure,
    theta_val: u32,
    layout: &StarLayout,
    xi: &[u32],
    pebbles: &[u32],
    arity: usize,
    options: &KaryOptions,
) -> Result<(BlockMatrix, usize, AuditReport)> {
    if arity == 0 {
        return Err(Error::Argument("recursive arity must be at least 1".into()));
    }
    let twists = interpolating_twists(a, theta_val, layout, xi)?;
    let mut audit = AuditReport::new(format!("S^ξ for ξ = {xi:?}"));
    let mut product: Option<BlockMatrix> = None;
    let mut count = 0;
    for j in 0..layout.d() {
        let (from, to) = (&twists[j], &twists[j + 1]);
        let factor = if from == to {
            None
        } else {
            let sa = cache.structure(from)?;
            let sb = cache.structure(to)?;
            let r = kary(cache, &sa, &sb, pebbles, layout.tip(j), layout.tip_end(j), arity, options)?;
            audit.absorb(&format!("factor {}", j + 1), &r.audit);
            count += r.factors;
            Some(r.matrix)
        };
        product = match (product, factor) {
            (None, f) => f,
            (Some(p), None) => Some(p),
            (Some(p), Some(f)) => Some(p.multiply(&f)?),
        };
    }
    let matrix = match product {
        Some(p) => p,
        None => BlockMatrix::identity(cache.partition(&twists[0], pebbles, arity)?),
    };
    Ok((matrix, count, audit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basegraph::catalog;
    use crate::orbits::{aut_generators, same_orbit};

    #[test]
    fn bound_values() {
        assert_eq!((r_bound(1), r_bound(2), r_bound(3)), (1, 6, 26));
        assert_eq!(BoundParams::new(2, 0).girth, 52);
        assert_eq!((q_bound(1), q_bound(2)), (2, 4));
        assert_eq!(d_bound(1, 0), 3);
        assert_eq!(d_bound(2, 0), 7);
    }

    fn petersen_star() -> (Arc<BaseGraph>, StarLayout) {
        let g = Arc::new(catalog::petersen());
        let layout = StarLayout::search(&g, 2, 7, 3, &[]).expect("star on the Petersen graph");
        (g, layout)
    }

    #[test]
    fn star_search_and_classes() {
        let (g, layout) = petersen_star();
        assert_eq!(layout.d(), 3);
        assert_eq!(layout.paths()[0], vec![0, 1, 2, 7]);
        let z = layout.z();
        assert_eq!(classify_component(&g, &layout, &[z]).unwrap(), ComponentClass::StarCenter);
        assert_eq!(classify_component(&g, &layout, &[2, 7]).unwrap(), ComponentClass::Tip(0));
        assert_eq!(classify_component(&g, &layout, &[1]).unwrap(), ComponentClass::IStar(0));
        assert_eq!(classify_component(&g, &layout, &[7]).unwrap(), ComponentClass::Sky);
        assert!(classify_component(&g, &layout, &[0, 2]).is_err());
    }

    #[test]
    fn star_maps_are_orbit_automorphisms() {
        let (g, layout) = petersen_star();
        let m = crate::ring::Modulus::new(2).unwrap();
        let s = CfiStructure::build(g.clone(), TwistFunction::zero(&g, m)).unwrap();
        let xi = [2, 2, 0];
        let pebbles = [s.gadget(5).start];
        for u in [vec![s.gadget(0).start + 3], vec![s.gadget(1).start + 5, s.gadget(6).start], vec![s.gadget(2).start + 1]] {
            let image = psi_xi(&s, &layout, &xi, &u).unwrap();
            assert!(same_orbit(&s, &pebbles, &u, &image), "{u:?}");
        }
        assert_eq!(psi_xi(&s, &layout, &[0, 0, 0], &[17]).unwrap(), vec![17]);
        assert_eq!(tau_map(&s, &layout, &[0, 0, 0], &[17, 40]).unwrap(), vec![17, 40]);
    }

    #[test]
    fn one_ary_on_k4_has_expected_rows() {
        let g = Arc::new(catalog::complete(4));
        let m = crate::ring::Modulus::new(2).unwrap();
        let a = CfiStructure::build(g.clone(), TwistFunction::zero(&g, m)).unwrap();
        let b = CfiStructure::build(g.clone(), TwistFunction::zero(&g, m).twisted(&g, 0, 1, 2).unwrap()).unwrap();
        let blurer = Blurer::arity1(2, 3).unwrap();
        let s = build_s_1ary(&a, &b, &[], 0, 1, &blurer, AuditPolicy::Enforce).unwrap();
        assert!(s.audit.passed());
        for u in 0..64u32 {
            let w = s.matrix.row_support(u).len();
            assert_eq!(w, if a.origin(u) == 0 { 3 } else { 1 });
        }
        let gens = aut_generators(&a, &[]).permutations(&a);
        assert!(crate::gf2::matrix_predicates(&s.matrix, &gens).all());
        assert!(active_region_check(&a, &s.matrix, &[0]).holds());
        assert!(!active_region_check(&a, &s.matrix, &[]).holds());
    }

    #[test]
    fn audit_failures_are_reported() {
        let g = Arc::new(catalog::complete(4));
        let m = crate::ring::Modulus::new(2).unwrap();
        let a = CfiStructure::build(g.clone(), TwistFunction::zero(&g, m)).unwrap();
        let b = CfiStructure::build(g.clone(), TwistFunction::zero(&g, m).twisted(&g, 0, 1, 2).unwrap()).unwrap();
        let blurer = Blurer::arity1(2, 3).unwrap();
        let pebbles = [a.gadget(2).start];
        let err = build_s_1ary(&a, &b, &pebbles, 0, 1, &blurer, AuditPolicy::Enforce).unwrap_err();
        let Error::Audit(report) = err else { panic!("expected an audit failure") };
        assert!(report.failures().any(|c| c.hypothesis.starts_with("dist")));
        let s = build_s_1ary(&a, &b, &pebbles, 0, 1, &blurer, AuditPolicy::Override).unwrap();
        assert!(s.audit.overridden);
    }
}
