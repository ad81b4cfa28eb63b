//! Blurers: odd families `Ξ ⊆ (Z/2^q)^d` of sum-zero vectors whose parities
//! on any `k` coordinates look like the single vector `(a, 0, …, 0)`.
//!
//! Coordinates are 0-based here; coordinate 0 is the distinguished one that
//! carries `a`. Every constructor returns a verified family, and every
//! failed verification reports the first violated condition.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::gf2::BitMatrix;
use crate::ring::Modulus;
use crate::{Error, Result};

/// The first place where a candidate family fails to be a blurer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    /// Condition number: 1 sum-zero, 2 distinguished restriction with
    /// coordinate 0, 3 zero restriction without it, 4 any other parity,
    /// 0 malformed parameters.
    pub condition: u8,
    pub subset: Vec<usize>,
    pub value: Vec<u32>,
    pub tuple: Option<Vec<u32>>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.condition {
            0 => write!(f, "malformed parameters"),
            1 => write!(f, "condition 1: tuple {:?} does not sum to zero", self.tuple.as_deref().unwrap_or(&[])),
            c => write!(f, "condition {c}: parity over N={:?} at b={:?} is wrong", self.subset, self.value),
        }
    }
}

/// A verified `(k, q, a, d)`-blurer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Blurer {
    k: usize,
    modulus: Modulus,
    a: u32,
    d: usize,
    tuples: Vec<Vec<u32>>,
    provenance: Vec<String>,
}

/// Parity of `|{c ∈ Ξ : c|_N = b}|`.
pub fn count_vects(tuples: &[Vec<u32>], n: &[usize], b: &[u32]) -> bool {
    assert_eq!(n.len(), b.len(), "index set and value differ in length");
    tuples.iter().filter(|c| n.iter().zip(b).all(|(&i, &v)| c[i] == v)).count() % 2 == 1
}

/// Calls `f` on every `k`-subset of `0..d` in lexicographic order until it
/// returns `false`.
fn for_each_subset(d: usize, k: usize, mut f: impl FnMut(&[usize]) -> bool) {
    if k > d {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if !f(&idx) {
            return;
        }
        let Some(i) = (0..k).rev().find(|&i| idx[i] < d - k + i) else { return };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exhaustive check of the four blurer conditions.
pub fn verify_blurer(k: usize, modulus: Modulus, a: u32, d: usize, tuples: &[Vec<u32>]) -> std::result::Result<(), Violation> {
    let malformed = || Violation { condition: 0, subset: vec![], value: vec![], tuple: None };
    if k == 0 || d < k || a > modulus.mask() {
        return Err(malformed());
    }
    for t in tuples {
        if t.len() != d || t.iter().any(|&v| v > modulus.mask()) {
            return Err(Violation { tuple: Some(t.clone()), ..malformed() });
        }
    }
    for t in tuples {
        if modulus.sum(t.iter().copied()) != 0 {
            return Err(Violation { condition: 1, subset: vec![], value: vec![], tuple: Some(t.clone()) });
        }
    }
    let mut violation = None;
    for_each_subset(d, k, |n| {
        let mut parity: BTreeMap<Vec<u32>, bool> = BTreeMap::new();
        for t in tuples {
            let r: Vec<u32> = n.iter().map(|&i| t[i]).collect();
            *parity.entry(r).or_default() ^= true;
        }
        let mut fixed = vec![0u32; k];
        let has_first = n[0] == 0;
        if has_first {
            fixed[0] = a;
        }
        if !parity.get(&fixed).copied().unwrap_or(false) {
            violation = Some(Violation {
                condition: if has_first { 2 } else { 3 },
                subset: n.to_vec(),
                value: fixed.clone(),
                tuple: None,
            });
            return false;
        }
        if let Some((b, _)) = parity.iter().find(|(b, &odd)| odd && **b != fixed) {
            violation = Some(Violation { condition: 4, subset: n.to_vec(), value: b.clone(), tuple: None });
            return false;
        }
        true
    });
    violation.map_or(Ok(()), Err)
}

/// `θ(k)` with `θ(0) = 0`.
pub fn theta(k: usize) -> u32 {
    (1..=k).map(|j| if j == 1 { 1 } else { level(j) }).sum()
}

/// The `i` with `2^{i−1} − 1 < k ≤ 2^i − 1`.
pub fn level(k: usize) -> u32 {
    assert!(k >= 1);
    usize::BITS - k.leading_zeros()
}

/// Parity of `binom(n, m)` by Lucas' theorem.
pub fn binomial_is_odd(n: u64, m: u64) -> bool {
    m <= n && (m & !n) == 0
}

impl Blurer {
    /// Verifies and wraps a family; the tuples are treated as a set.
    pub fn new(k: usize, modulus: Modulus, a: u32, d: usize, tuples: Vec<Vec<u32>>) -> std::result::Result<Self, Violation> {
        Self::with_provenance(k, modulus, a, d, tuples, vec!["given".to_string()])
    }

    fn with_provenance(
        k: usize,
        modulus: Modulus,
        a: u32,
        d: usize,
        tuples: Vec<Vec<u32>>,
        provenance: Vec<String>,
    ) -> std::result::Result<Self, Violation> {
        let set: BTreeSet<Vec<u32>> = tuples.into_iter().collect();
        let tuples: Vec<Vec<u32>> = set.into_iter().collect();
        verify_blurer(k, modulus, a, d, &tuples)?;
        Ok(Blurer { k, modulus, a, d, tuples, provenance })
    }

    fn derive(&self, step: String, k: usize, modulus: Modulus, a: u32, d: usize, tuples: Vec<Vec<u32>>) -> Result<Self> {
        let mut provenance = self.provenance.clone();
        provenance.push(step.clone());
        Self::with_provenance(k, modulus, a, d, tuples, provenance)
            .map_err(|violation| Error::Construction { step, violation })
    }

    /// `2^{q−2} · {(3,0,1,0…), (3,1,0,0…), (2,1,1,0…)}`, a `(1, q, 2^{q−1}, d)`-blurer.
    pub fn arity1(q: u32, d: usize) -> Result<Self> {
        if q < 2 || d < 3 {
            return Err(Error::Argument(format!("arity-1 family needs q ≥ 2 and d ≥ 3, got q={q}, d={d}")));
        }
        let m = Modulus::new(q)?;
        let s = 1u32 << (q - 2);
        let tuples = [[3, 0, 1], [3, 1, 0], [2, 1, 1]]
            .iter()
            .map(|row| {
                let mut t: Vec<u32> = row.iter().map(|&v| m.mul(v, s)).collect();
                t.resize(d, 0);
                t
            })
            .collect();
        Self::with_provenance(1, m, 1 << (q - 1), d, tuples, vec![format!("arity1(q={q}, d={d})")])
            .map_err(|violation| Error::Construction { step: "arity1".into(), violation })
    }

    /// The `(2^{i−1} − 1, i, 2^{i−1}, 2^i − 1)`-blurer built from 0/1 tails.
    pub fn kary(i: u32) -> Result<Self> {
        if !(2..=5).contains(&i) {
            return Err(Error::Argument(format!("k-ary family supported for 2 ≤ i ≤ 5, got {i}")));
        }
        let m = Modulus::new(i)?;
        let half = 1u32 << (i - 1);
        let d = (1usize << i) - 1;
        let mut tuples = Vec::new();
        for mask in 0u32..1 << (d - 1) {
            let ones = mask.count_ones();
            let first = if ones == half {
                half
            } else if ones == half - 1 {
                half + 1
            } else {
                continue;
            };
            let mut t = vec![first];
            t.extend((0..d - 1).map(|j| (mask >> (d - 2 - j)) & 1));
            tuples.push(t);
        }
        Self::with_provenance(half as usize - 1, m, half, d, tuples, vec![format!("kary(i={i})")])
            .map_err(|violation| Error::Construction { step: "kary".into(), violation })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn q(&self) -> u32 {
        self.modulus.q()
    }

    pub fn modulus(&self) -> Modulus {
        self.modulus
    }

    pub fn a(&self) -> u32 {
        self.a
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn tuples(&self) -> &[Vec<u32>] {
        &self.tuples
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    /// `ξ_fix = (a, 0, …, 0)`.
    pub fn xi_fix(&self) -> Vec<u32> {
        let mut v = vec![0; self.d];
        v[0] = self.a;
        v
    }

    /// Fills every tuple with zeros up to length `d2`.
    pub fn pad(&self, d2: usize) -> Result<Self> {
        if d2 < self.d {
            return Err(Error::Argument(format!("cannot pad from d={} down to {d2}", self.d)));
        }
        let tuples = self
            .tuples
            .iter()
            .map(|t| {
                let mut t = t.clone();
                t.resize(d2, 0);
                t
            })
            .collect();
        self.derive(format!("pad({d2})"), self.k, self.modulus, self.a, d2, tuples)
    }

    /// The same family read as a blurer of smaller arity.
    pub fn restrict_k(&self, k2: usize) -> Result<Self> {
        if k2 == 0 || k2 > self.k {
            return Err(Error::Argument(format!("arity {k2} outside 1..={}", self.k)));
        }
        self.derive(format!("restrict_k({k2})"), k2, self.modulus, self.a, self.d, self.tuples.clone())
    }

    /// `{c·ξ}` with `a ↦ c·a`. Images that coincide are counted with
    /// multiplicity and cancel in pairs.
    pub fn scale(&self, c: u32) -> Result<Self> {
        let m = self.modulus;
        let mut parity: BTreeMap<Vec<u32>, bool> = BTreeMap::new();
        for t in &self.tuples {
            *parity.entry(t.iter().map(|&v| m.mul(v, c)).collect()).or_default() ^= true;
        }
        let tuples = parity.into_iter().filter(|(_, odd)| *odd).map(|(t, _)| t).collect();
        self.derive(format!("scale({})", c & m.mask()), self.k, m, m.mul(self.a, c), self.d, tuples)
    }

    /// Embeds `Z/2^q` into `Z/2^{q+ℓ}` by `x ↦ 2^ℓ x`.
    pub fn embed(&self, ell: u32) -> Result<Self> {
        let m2 = Modulus::new(self.modulus.q() + ell)?;
        let tuples = self.tuples.iter().map(|t| t.iter().map(|&v| v << ell).collect()).collect();
        self.derive(format!("embed({ell})"), self.k, m2, self.a << ell, self.d, tuples)
    }

    /// Lifts the `kary(i)` family to `Z/2^{i+ℓ}` keeping `a = 2^{i−1}`, via
    /// `ξ ↦ (−c·Σ_{j≥1} ξ_j, c·ξ_1, …, c·ξ_{d−1})` for an odd `c`.
    ///
    /// The textbook constant `c = 2^{ℓ−i+1} − 1` is tried first when it is
    /// an odd integer; otherwise, or if it fails, odd `c` are tried in
    /// increasing order. Verification needs `c ≡ −1 (mod 2^{ℓ+1})`.
    pub fn larger_field(i: u32, ell: u32) -> Result<Self> {
        let base = Self::kary(i)?;
        let m = Modulus::new(i + ell)?;
        let lift = |c: u32| -> Vec<Vec<u32>> {
            base.tuples
                .iter()
                .map(|t| {
                    let tail: Vec<u32> = t[1..].iter().map(|&v| m.mul(c, v)).collect();
                    let mut out = vec![m.neg(m.sum(tail.iter().copied()))];
                    out.extend(tail);
                    out
                })
                .collect()
        };
        let exponent = ell as i64 - i as i64 + 1;
        let textbook = (1..32).contains(&exponent).then(|| (1u64 << exponent) - 1).filter(|c| c % 2 == 1);
        let mut tried = Vec::new();
        if let Some(c) = textbook {
            let c = c as u32 & m.mask();
            tried.push(c);
            if let Ok(b) = base.derive(format!("larger_field(i={i}, ell={ell}, c={c})"), base.k, m, base.a, base.d, lift(c)) {
                return Ok(b);
            }
        }
        let mut last = None;
        for c in (1..m.order()).step_by(2) {
            if tried.contains(&c) {
                continue;
            }
            match base.derive(format!("larger_field(i={i}, ell={ell}, c={c})"), base.k, m, base.a, base.d, lift(c)) {
                Ok(b) => return Ok(b),
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap_or_else(|| Error::NotFound("no odd multiplier".into())))
    }

    /// Checks `Σ_{ξ ∈ Ξ} f(ξ|_K) = f(ξ_fix|_K)` over F2.
    pub fn sum_check(&self, kset: &[usize], f: impl Fn(&[u32]) -> bool) -> Result<bool> {
        if kset.len() != self.k || kset.iter().any(|&i| i >= self.d) {
            return Err(Error::Argument(format!("index set must have {} coordinates below {}", self.k, self.d)));
        }
        let restrict = |t: &[u32]| -> Vec<u32> { kset.iter().map(|&i| t[i]).collect() };
        let lhs = self.tuples.iter().fold(false, |acc, t| acc ^ f(&restrict(t)));
        Ok(lhs == f(&restrict(&self.xi_fix())))
    }

    pub fn to_json(&self) -> String {
        let doc = BlurerJson {
            k: self.k,
            q: self.modulus.q(),
            a: self.a,
            d: self.d,
            tuples: self.tuples.clone(),
            provenance: self.provenance.clone(),
        };
        let mut s = serde_json::to_string(&doc).expect("blurer serialises");
        s.push('\n');
        s
    }

    /// Decodes and verifies a blurer document.
    pub fn from_json(text: &str) -> Result<std::result::Result<Self, Violation>> {
        let doc: BlurerJson = serde_json::from_str(text).map_err(|e| Error::Decode(e.to_string()))?;
        let m = Modulus::new(doc.q).map_err(|e| Error::Decode(e.to_string()))?;
        Ok(Self::with_provenance(doc.k, m, doc.a, doc.d, doc.tuples, doc.provenance))
    }
}

#[derive(Serialize, Deserialize)]
struct BlurerJson {
    k: usize,
    q: u32,
    a: u32,
    d: usize,
    tuples: Vec<Vec<u32>>,
    #[serde(default)]
    provenance: Vec<String>,
}

/// A verified `(k, q, target, d)`-blurer: the recipe
/// `larger_field → embed → restrict_k → pad → scale` is tried first (over
/// every intermediate field that fits), then [`search_blurer`].
pub fn blurer_for(k: usize, q: u32, target: u32, d: usize) -> Result<Blurer> {
    let m = Modulus::new(q)?;
    let target = target & m.mask();
    if k == 0 || d < k {
        return Err(Error::Argument(format!("need 1 ≤ k ≤ d, got k={k}, d={d}")));
    }
    let mut last_err = None;
    for ell in (0..q).rev() {
        if !target.is_multiple_of(1 << ell) {
            continue;
        }
        match recipe(k, q - ell, target >> ell, d).and_then(|b| if ell > 0 { b.embed(ell) } else { Ok(b) }) {
            Ok(b) => return Ok(b),
            Err(e) => last_err = Some(e),
        }
    }
    if let Some(b) = search_blurer(k, q, target, d, SearchBudget::default()) {
        return Ok(b);
    }
    Err(Error::NotFound(format!(
        "no ({k},{q},{target},{d})-blurer from the recipe ({}) or the search",
        last_err.map_or_else(|| "not applicable".to_string(), |e| e.to_string())
    )))
}

fn recipe(k: usize, q: u32, target: u32, d: usize) -> Result<Blurer> {
    let i = level(k);
    let shift = theta(k - 1);
    let need = i + 1 + shift;
    if q < need {
        return Err(Error::Argument(format!("q={q} below the recipe's minimum {need}")));
    }
    let power = i + shift;
    if power >= q || !target.is_multiple_of(1 << power) {
        return Err(Error::Argument(format!("target {target} is not a multiple of 2^{power}")));
    }
    let lifted = Blurer::larger_field(i + 1, q - shift - (i + 1))?;
    let b = lifted.embed(shift)?.restrict_k(k)?;
    let b = if d > b.d { b.pad(d)? } else { b };
    if d < b.d {
        return Err(Error::Argument(format!("recipe needs d ≥ {}", b.d)));
    }
    b.scale(target >> power)
}

/// Limits for [`search_blurer`].
#[derive(Clone, Copy, Debug)]
pub struct SearchBudget {
    /// Largest candidate pool solved as one linear system.
    pub max_pool: usize,
    /// Largest system, in matrix bits.
    pub max_bits: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget { max_pool: 1 << 12, max_bits: 1 << 28 }
    }
}

/// Searches for a `(k, q, a, d)`-blurer by solving the parity conditions
/// as a linear system over F2 on a pool of sum-zero candidate vectors.
/// Structured pools (tails in `{0, ±2^s}`) are tried before the full space.
pub fn search_blurer(k: usize, q: u32, a: u32, d: usize, budget: SearchBudget) -> Option<Blurer> {
    let m = Modulus::new(q).ok()?;
    if k == 0 || d < k {
        return None;
    }
    let mut pools: Vec<(String, Vec<Vec<u32>>)> = Vec::new();
    for s in 0..q {
        for sign in [1u32, m.neg(1)] {
            let step = m.mul(sign, 1 << s);
            if sign != 1 && step == 1 << s {
                continue;
            }
            pools.push((format!("tails in {{0,{step}}}"), structured_pool(m, d, step)));
        }
    }
    let full_size = (m.order() as u128).checked_pow(d as u32 - 1);
    if full_size.is_some_and(|n| n <= budget.max_pool as u128) {
        pools.push(("all sum-zero vectors".into(), full_pool(m, d)));
    }
    for (name, pool) in pools {
        if pool.len() > budget.max_pool {
            continue;
        }
        if let Some(tuples) = solve_pool(k, a & m.mask(), d, &pool, budget) {
            let b = Blurer::with_provenance(k, m, a & m.mask(), d, tuples, vec![format!("search({name})")]);
            if let Ok(b) = b {
                return Some(b);
            }
        }
    }
    None
}

fn structured_pool(m: Modulus, d: usize, step: u32) -> Vec<Vec<u32>> {
    (0u32..1 << (d - 1))
        .map(|mask| {
            let tail: Vec<u32> = (0..d - 1).map(|j| if mask >> (d - 2 - j) & 1 == 1 { step } else { 0 }).collect();
            let mut t = vec![m.neg(m.sum(tail.iter().copied()))];
            t.extend(tail);
            t
        })
        .collect()
}

fn full_pool(m: Modulus, d: usize) -> Vec<Vec<u32>> {
    let r = m.order() as usize;
    let count = r.pow(d as u32 - 1);
    (0..count)
        .map(|mut idx| {
            let mut tail = vec![0u32; d - 1];
            for v in tail.iter_mut().rev() {
                *v = (idx % r) as u32;
                idx /= r;
            }
            let mut t = vec![m.neg(m.sum(tail.iter().copied()))];
            t.extend(tail);
            t
        })
        .collect()
}

fn solve_pool(k: usize, a: u32, d: usize, pool: &[Vec<u32>], budget: SearchBudget) -> Option<Vec<Vec<u32>>> {
    // One equation per (N, restriction value) that occurs, plus the
    // distinguished value of every N.
    let mut equations: BTreeMap<(Vec<usize>, Vec<u32>), Vec<usize>> = BTreeMap::new();
    let mut targets: BTreeSet<(Vec<usize>, Vec<u32>)> = BTreeSet::new();
    for_each_subset(d, k, |n| {
        let mut fixed = vec![0u32; k];
        if n[0] == 0 {
            fixed[0] = a;
        }
        targets.insert((n.to_vec(), fixed.clone()));
        equations.entry((n.to_vec(), fixed)).or_default();
        for (j, t) in pool.iter().enumerate() {
            let r: Vec<u32> = n.iter().map(|&i| t[i]).collect();
            equations.entry((n.to_vec(), r)).or_default().push(j);
        }
        true
    });
    let cols = pool.len() + 1;
    if equations.len().saturating_mul(cols) > budget.max_bits {
        return None;
    }
    let mut sys = BitMatrix::zeros(equations.len(), cols);
    for (r, (key, members)) in equations.iter().enumerate() {
        for &j in members {
            sys.toggle(r, j);
        }
        if targets.contains(key) {
            sys.set(r, pool.len(), true);
        }
    }
    let x = solve_f2(&sys, pool.len())?;
    Some(pool.iter().zip(x).filter(|(_, on)| *on).map(|(t, _)| t.clone()).collect())
}

/// Solves the augmented system `[A | b]` over F2 (free variables zero).
fn solve_f2(sys: &BitMatrix, vars: usize) -> Option<Vec<bool>> {
    let mut m = sys.clone();
    let mut pivots = Vec::new();
    let mut row = 0;
    for c in 0..vars {
        let Some(p) = (row..m.rows()).find(|&r| m.get(r, c)) else { continue };
        if p != row {
            for cc in 0..m.cols() {
                let (x, y) = (m.get(p, cc), m.get(row, cc));
                m.set(p, cc, y);
                m.set(row, cc, x);
            }
        }
        let pivot: Vec<usize> = m.row_support(row).collect();
        for r in 0..m.rows() {
            if r != row && m.get(r, c) {
                for &cc in &pivot {
                    m.toggle(r, cc);
                }
            }
        }
        pivots.push(c);
        row += 1;
    }
    if (row..m.rows()).any(|r| m.get(r, vars)) {
        return None;
    }
    let mut x = vec![false; vars];
    for (r, &c) in pivots.iter().enumerate() {
        x[c] = m.get(r, vars);
    }
    Some(x)
}
