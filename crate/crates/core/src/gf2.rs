//! Matrices over F2 indexed by orbit-partitioned tuple sets.
//!
//! A [`BlockMatrix`] stores one dense [`BitMatrix`] per nonzero
//! (row orbit, column orbit) pair. Row and column indices are tuple indices
//! of the attached [`OrbitPartition`]s; inside a block, rows and columns are
//! ordered by position in the orbit.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use crate::orbits::OrbitPartition;
use crate::{Error, Result};

/// Dense bit matrix with rows packed into 64-bit words.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words = cols.div_ceil(64);
        BitMatrix { rows, cols, words, data: vec![0; rows * words] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.words + c / 64] >> (c % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        let w = &mut self.data[r * self.words + c / 64];
        if v {
            *w |= 1 << (c % 64);
        } else {
            *w &= !(1 << (c % 64));
        }
    }

    #[inline]
    pub fn toggle(&mut self, r: usize, c: usize) {
        self.data[r * self.words + c / 64] ^= 1 << (c % 64);
    }

    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.words..(r + 1) * self.words]
    }

    fn row_mut(&mut self, r: usize) -> &mut [u64] {
        &mut self.data[r * self.words..(r + 1) * self.words]
    }

    pub fn row_weight(&self, r: usize) -> u32 {
        self.row(r).iter().map(|w| w.count_ones()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&w| w == 0)
    }

    /// Columns holding a one in row `r`, ascending.
    pub fn row_support(&self, r: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(r).iter().enumerate().flat_map(|(i, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(i * 64 + b)
            })
        })
    }

    pub fn multiply(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = BitMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let support: Vec<usize> = self.row_support(r).collect();
            let dst = r * out.words;
            for j in support {
                for (d, &s) in out.data[dst..dst + out.words].iter_mut().zip(other.row(j)) {
                    *d ^= s;
                }
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &BitMatrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a ^= b;
        }
    }

    /// Rank by Gaussian elimination.
    pub fn rank(&self) -> usize {
        let mut m = self.clone();
        let mut rank = 0;
        for c in 0..m.cols {
            let Some(p) = (rank..m.rows).find(|&r| m.get(r, c)) else { continue };
            if p != rank {
                for w in 0..m.words {
                    m.data.swap(p * m.words + w, rank * m.words + w);
                }
            }
            let pivot: Vec<u64> = m.row(rank).to_vec();
            for r in 0..m.rows {
                if r != rank && m.get(r, c) {
                    for (d, s) in m.row_mut(r).iter_mut().zip(&pivot) {
                        *d ^= s;
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    fn hex_row(&self, r: usize) -> String {
        let mut s = String::with_capacity(self.cols.div_ceil(4));
        for nib in 0..self.cols.div_ceil(4) {
            let mut v = 0u8;
            for b in 0..4 {
                let c = nib * 4 + b;
                if c < self.cols && self.get(r, c) {
                    v |= 8 >> b;
                }
            }
            s.push(char::from_digit(v as u32, 16).unwrap());
        }
        s
    }

    fn parse_hex_row(&mut self, r: usize, line: &str) -> Result<()> {
        if line.len() != self.cols.div_ceil(4) {
            return Err(Error::Decode(format!("hex row has {} digits, expected {}", line.len(), self.cols.div_ceil(4))));
        }
        for (nib, ch) in line.chars().enumerate() {
            let v = ch.to_digit(16).ok_or_else(|| Error::Decode(format!("bad hex digit {ch:?}")))?;
            if ch.is_ascii_uppercase() {
                return Err(Error::Decode("hex digits must be lowercase".into()));
            }
            for b in 0..4 {
                if v & (8 >> b) != 0 {
                    let c = nib * 4 + b;
                    if c >= self.cols {
                        return Err(Error::Decode("padding bits must be zero".into()));
                    }
                    self.set(r, c, true);
                }
            }
        }
        Ok(())
    }
}

/// Sparse block matrix over F2 with rows indexed by the tuples of one
/// partition and columns by the tuples of another.
#[derive(Clone, Debug)]
pub struct BlockMatrix {
    rows: Arc<OrbitPartition>,
    cols: Arc<OrbitPartition>,
    blocks: BTreeMap<(u32, u32), BitMatrix>,
}

impl PartialEq for BlockMatrix {
    fn eq(&self, other: &Self) -> bool {
        let nonzero = |m: &BlockMatrix| -> Vec<((u32, u32), BitMatrix)> {
            m.blocks.iter().filter(|(_, b)| !b.is_zero()).map(|(k, b)| (*k, b.clone())).collect()
        };
        (Arc::ptr_eq(&self.rows, &other.rows) || self.rows == other.rows)
            && (Arc::ptr_eq(&self.cols, &other.cols) || self.cols == other.cols)
            && nonzero(self) == nonzero(other)
    }
}

fn same_partition(a: &Arc<OrbitPartition>, b: &Arc<OrbitPartition>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

impl BlockMatrix {
    pub fn zeros(rows: Arc<OrbitPartition>, cols: Arc<OrbitPartition>) -> Self {
        BlockMatrix { rows, cols, blocks: BTreeMap::new() }
    }

    /// Identity on a partition whose blocks are indexed identically on both
    /// sides.
    pub fn identity(p: Arc<OrbitPartition>) -> Self {
        let blocks = (0..p.len()).map(|b| ((b as u32, b as u32), BitMatrix::identity(p.block(b).len()))).collect();
        BlockMatrix { rows: p.clone(), cols: p, blocks }
    }

    /// The matrix with ones exactly at the given (row tuple, column tuple)
    /// index pairs; repeated pairs cancel.
    pub fn from_entries(
        rows: Arc<OrbitPartition>,
        cols: Arc<OrbitPartition>,
        entries: impl IntoIterator<Item = (u32, u32)>,
    ) -> Self {
        let mut m = Self::zeros(rows, cols);
        for (u, v) in entries {
            m.toggle(u, v);
        }
        m
    }

    pub fn row_partition(&self) -> &Arc<OrbitPartition> {
        &self.rows
    }

    pub fn col_partition(&self) -> &Arc<OrbitPartition> {
        &self.cols
    }

    pub fn row_count(&self) -> usize {
        self.rows.tuple_count()
    }

    pub fn col_count(&self) -> usize {
        self.cols.tuple_count()
    }

    pub fn block(&self, p: u32, q: u32) -> Option<&BitMatrix> {
        self.blocks.get(&(p, q))
    }

    /// Stored blocks that contain at least one 1.
    pub fn nonzero_blocks(&self) -> impl Iterator<Item = ((u32, u32), &BitMatrix)> {
        self.blocks.iter().filter(|(_, b)| !b.is_zero()).map(|(k, b)| (*k, b))
    }

    fn block_mut(&mut self, p: u32, q: u32) -> &mut BitMatrix {
        let (rows, cols) = (self.rows.block(p as usize).len(), self.cols.block(q as usize).len());
        self.blocks.entry((p, q)).or_insert_with(|| BitMatrix::zeros(rows, cols))
    }

    pub fn get(&self, u: u32, v: u32) -> bool {
        let (p, q) = (self.rows.block_of(u), self.cols.block_of(v));
        self.blocks
            .get(&(p, q))
            .is_some_and(|b| b.get(self.rows.position(u) as usize, self.cols.position(v) as usize))
    }

    pub fn set(&mut self, u: u32, v: u32, value: bool) {
        let (p, q) = (self.rows.block_of(u), self.cols.block_of(v));
        let (r, c) = (self.rows.position(u) as usize, self.cols.position(v) as usize);
        self.block_mut(p, q).set(r, c, value);
    }

    pub fn toggle(&mut self, u: u32, v: u32) {
        let (p, q) = (self.rows.block_of(u), self.cols.block_of(v));
        let (r, c) = (self.rows.position(u) as usize, self.cols.position(v) as usize);
        self.block_mut(p, q).toggle(r, c);
    }

    /// Column tuple indices with a one in row `u`, ascending.
    pub fn row_support(&self, u: u32) -> Vec<u32> {
        let p = self.rows.block_of(u);
        let r = self.rows.position(u) as usize;
        let mut out: Vec<u32> = self
            .blocks
            .range((p, 0)..=(p, u32::MAX))
            .flat_map(|(&(_, q), b)| b.row_support(r).map(move |c| (q, c)))
            .map(|(q, c)| self.cols.block(q as usize)[c])
            .collect();
        out.sort_unstable();
        out
    }

    /// Row supports of every row as a compressed sparse row table.
    pub fn csr(&self) -> Csr {
        Csr::build(self.row_count(), self.entries())
    }

    /// Column supports as a compressed table indexed by column tuple.
    pub fn csc(&self) -> Csr {
        Csr::build(self.col_count(), self.entries().map(|(u, v)| (v, u)))
    }

    /// All (row tuple, column tuple) pairs holding a one.
    pub fn entries(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.blocks.iter().flat_map(move |(&(p, q), b)| {
            let rows = self.rows.block(p as usize);
            let cols = self.cols.block(q as usize);
            (0..b.rows()).flat_map(move |r| b.row_support(r).map(move |c| (rows[r], cols[c])))
        })
    }

    pub fn count_ones(&self) -> usize {
        self.blocks.values().map(|b| (0..b.rows()).map(|r| b.row_weight(r) as usize).sum::<usize>()).sum()
    }

    pub fn multiply(&self, other: &BlockMatrix) -> Result<BlockMatrix> {
        if !same_partition(&self.cols, &other.rows) {
            return Err(Error::Argument("inner index sets of the product differ".into()));
        }
        let mut out = BlockMatrix::zeros(self.rows.clone(), other.cols.clone());
        for (&(p, q), a) in &self.blocks {
            for (&(_, r), b) in other.blocks.range((q, 0)..=(q, u32::MAX)) {
                let prod = a.multiply(b);
                match out.blocks.get_mut(&(p, r)) {
                    Some(acc) => acc.add_assign(&prod),
                    None => {
                        out.blocks.insert((p, r), prod);
                    }
                }
            }
        }
        out.blocks.retain(|_, b| !b.is_zero());
        Ok(out)
    }

    /// Rank, computed per connected component of the graph whose edges are
    /// the nonzero blocks.
    pub fn rank(&self) -> usize {
        let np = self.rows.len();
        let mut parent: Vec<usize> = (0..np + self.cols.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let nonzero: Vec<(u32, u32)> = self.nonzero_blocks().map(|(k, _)| k).collect();
        for &(p, q) in &nonzero {
            let (a, b) = (find(&mut parent, p as usize), find(&mut parent, np + q as usize));
            parent[a] = b;
        }
        let mut comps: BTreeMap<usize, (BTreeSet<u32>, BTreeSet<u32>)> = BTreeMap::new();
        for &(p, q) in &nonzero {
            let root = find(&mut parent, p as usize);
            let entry = comps.entry(root).or_default();
            entry.0.insert(p);
            entry.1.insert(q);
        }
        let mut total = 0;
        for (row_blocks, col_blocks) in comps.values() {
            if row_blocks.len() == 1 && col_blocks.len() == 1 {
                let (p, q) = (*row_blocks.first().unwrap(), *col_blocks.first().unwrap());
                total += self.blocks[&(p, q)].rank();
                continue;
            }
            let col_offset: BTreeMap<u32, usize> = {
                let mut off = 0;
                col_blocks
                    .iter()
                    .map(|&q| {
                        let o = off;
                        off += self.cols.block(q as usize).len();
                        (q, o)
                    })
                    .collect()
            };
            let width: usize = col_blocks.iter().map(|&q| self.cols.block(q as usize).len()).sum();
            let height: usize = row_blocks.iter().map(|&p| self.rows.block(p as usize).len()).sum();
            let mut dense = BitMatrix::zeros(height, width);
            let mut row_off = 0;
            for &p in row_blocks {
                for (&(_, q), b) in self.blocks.range((p, 0)..=(p, u32::MAX)) {
                    let co = col_offset[&q];
                    for r in 0..b.rows() {
                        for c in b.row_support(r) {
                            dense.set(row_off + r, co + c, true);
                        }
                    }
                }
                row_off += self.rows.block(p as usize).len();
            }
            total += dense.rank();
        }
        total
    }

    pub fn is_invertible(&self) -> bool {
        self.row_count() == self.col_count() && self.rank() == self.row_count()
    }

    /// Hexadecimal exchange format: a header, then per stored block its
    /// orbit ids, row and column tuple-index lists and one hex line per row.
    pub fn to_hex(&self) -> String {
        let stored: Vec<_> = self.nonzero_blocks().collect();
        let mut s = String::new();
        writeln!(s, "gf2-block-matrix/1").unwrap();
        writeln!(s, "rows {} cols {} blocks {}", self.row_count(), self.col_count(), stored.len()).unwrap();
        let join = |xs: &[u32]| xs.iter().map(u32::to_string).collect::<Vec<_>>().join(" ");
        for ((p, q), b) in stored {
            writeln!(s, "block {p} {q} {} {}", b.rows(), b.cols()).unwrap();
            writeln!(s, "rowidx {}", join(self.rows.block(p as usize))).unwrap();
            writeln!(s, "colidx {}", join(self.cols.block(q as usize))).unwrap();
            for r in 0..b.rows() {
                writeln!(s, "{}", b.hex_row(r)).unwrap();
            }
        }
        s
    }

    /// Parses [`BlockMatrix::to_hex`] output against the given partitions.
    pub fn from_hex(text: &str, rows: Arc<OrbitPartition>, cols: Arc<OrbitPartition>) -> Result<BlockMatrix> {
        let mut lines = text.lines();
        let mut next = |what: &str| lines.next().ok_or_else(|| Error::Decode(format!("unexpected end of input, expected {what}")));
        if next("header")? != "gf2-block-matrix/1" {
            return Err(Error::Decode("missing gf2-block-matrix/1 header".into()));
        }
        let dims: Vec<&str> = next("dimensions")?.split(' ').collect();
        let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Decode(format!("bad number {s:?}")));
        if dims.len() != 6 || dims[0] != "rows" || dims[2] != "cols" || dims[4] != "blocks" {
            return Err(Error::Decode("malformed dimension line".into()));
        }
        if num(dims[1])? != rows.tuple_count() || num(dims[3])? != cols.tuple_count() {
            return Err(Error::Decode("matrix dimensions do not match the partitions".into()));
        }
        let count = num(dims[5])?;
        let mut m = BlockMatrix::zeros(rows.clone(), cols.clone());
        for _ in 0..count {
            let head: Vec<&str> = next("block header")?.split(' ').collect();
            if head.len() != 5 || head[0] != "block" {
                return Err(Error::Decode("malformed block header".into()));
            }
            let (p, q, r, c) = (num(head[1])?, num(head[2])?, num(head[3])?, num(head[4])?);
            if p >= rows.len() || q >= cols.len() {
                return Err(Error::Decode(format!("block ({p}, {q}) out of range")));
            }
            if r != rows.block(p).len() || c != cols.block(q).len() {
                return Err(Error::Decode(format!("block ({p}, {q}) has wrong dimensions")));
            }
            let parse_idx = |line: &str, tag: &str| -> Result<Vec<u32>> {
                let rest = line
                    .strip_prefix(tag)
                    .ok_or_else(|| Error::Decode(format!("expected {tag} line")))?;
                rest.split_whitespace()
                    .map(|t| t.parse::<u32>().map_err(|_| Error::Decode(format!("bad index {t:?}"))))
                    .collect()
            };
            if parse_idx(next("row indices")?, "rowidx")? != rows.block(p) {
                return Err(Error::Decode(format!("row index list of block ({p}, {q}) disagrees with the partition")));
            }
            if parse_idx(next("column indices")?, "colidx")? != cols.block(q) {
                return Err(Error::Decode(format!("column index list of block ({p}, {q}) disagrees with the partition")));
            }
            let mut b = BitMatrix::zeros(r, c);
            for i in 0..r {
                b.parse_hex_row(i, next("hex row")?)?;
            }
            if m.blocks.insert((p as u32, q as u32), b).is_some() {
                return Err(Error::Decode(format!("block ({p}, {q}) repeated")));
            }
        }
        if lines.next().is_some() {
            return Err(Error::Decode("trailing data after the last block".into()));
        }
        Ok(m)
    }
}

/// Compressed adjacency lists: `targets(i)` is sorted.
#[derive(Clone, Debug)]
pub struct Csr {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Csr {
    fn build(n: usize, pairs: impl Iterator<Item = (u32, u32)>) -> Self {
        let mut pairs: Vec<(u32, u32)> = pairs.collect();
        pairs.sort_unstable();
        let mut offsets = vec![0usize; n + 1];
        for &(a, _) in &pairs {
            offsets[a as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        Csr { offsets, targets: pairs.into_iter().map(|p| p.1).collect() }
    }

    pub fn targets(&self, i: u32) -> &[u32] {
        &self.targets[self.offsets[i as usize]..self.offsets[i as usize + 1]]
    }
}

/// The characteristic matrix of a 2k-orbit `P`: ones exactly at `(u, w)`
/// with `uw ∈ P`.
pub fn char_matrix(pairs: &OrbitPartition, block: usize, k_part: Arc<OrbitPartition>) -> BlockMatrix {
    let nk = k_part.tuple_count() as u32;
    let entries = pairs.block(block).iter().map(|&t| (t / nk, t % nk));
    BlockMatrix::from_entries(k_part.clone(), k_part, entries)
}

/// Outcome of [`matrix_predicates`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PredicateReport {
    pub orbit_diagonal: bool,
    pub orbit_invariant: bool,
    pub odd_filled: bool,
}

impl PredicateReport {
    pub fn all(&self) -> bool {
        self.orbit_diagonal && self.orbit_invariant && self.odd_filled
    }
}

fn permute_tuple(p: &OrbitPartition, t: u32, perm: &[u32]) -> u32 {
    let n = p.universe_len() as u32;
    let mut rest = t;
    let mut image = 0u32;
    let mut scale = 1u32;
    for _ in 0..p.k() {
        image += perm[(rest % n) as usize] * scale;
        rest /= n;
        scale = scale.wrapping_mul(n);
    }
    image
}

/// Checks the three block predicates. `generators` are permutations of the
/// common universe that generate the automorphism group; invariance is
/// checked for each of them, which suffices.
pub fn matrix_predicates(s: &BlockMatrix, generators: &[Vec<u32>]) -> PredicateReport {
    let (rows, cols) = (&s.rows, &s.cols);
    let nonzero: BTreeSet<(u32, u32)> = s.nonzero_blocks().map(|(k, _)| k).collect();
    let mut orbit_diagonal = nonzero
        .iter()
        .all(|&(p, q)| rows.descriptor(p as usize) == cols.descriptor(q as usize));
    if orbit_diagonal {
        let col_by_type: BTreeMap<_, u32> =
            (0..cols.len()).map(|q| (cols.descriptor(q), q as u32)).collect();
        orbit_diagonal = (0..rows.len()).all(|p| match col_by_type.get(rows.descriptor(p)) {
            Some(&q) => nonzero.contains(&(p as u32, q)),
            None => true,
        });
    }
    let orbit_invariant = generators.iter().all(|perm| {
        s.entries()
            .all(|(u, v)| s.get(permute_tuple(rows, u, perm), permute_tuple(cols, v, perm)))
    });
    let mut weight = vec![0u32; s.row_count()];
    for (&(p, _), b) in &s.blocks {
        for (r, &u) in rows.block(p as usize).iter().enumerate() {
            weight[u as usize] += b.row_weight(r);
        }
    }
    let odd_filled = weight.iter().all(|w| w % 2 == 1);
    PredicateReport { orbit_diagonal, orbit_invariant, odd_filled }
}

/// The type-preserving bijection between the blocks of two partitions, if
/// the descriptors match up one-to-one.
pub fn type_map(a: &OrbitPartition, b: &OrbitPartition) -> Result<Vec<u32>> {
    if a.len() != b.len() {
        return Err(Error::Argument(format!("{} orbits against {}", a.len(), b.len())));
    }
    let index: BTreeMap<_, u32> = (0..b.len()).map(|q| (b.descriptor(q), q as u32)).collect();
    (0..a.len())
        .map(|p| {
            index
                .get(a.descriptor(p))
                .copied()
                .ok_or_else(|| Error::Argument(format!("orbit {p} has no counterpart of the same type")))
        })
        .collect()
}

/// The first entry at which `χ^P · S` and `S · χ^{f(P)}` differ.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlurWitness {
    pub block: u32,
    pub u: Vec<u32>,
    pub v: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlurVerdict {
    pub invertible: bool,
    pub witness: Option<BlurWitness>,
}

impl BlurVerdict {
    pub fn holds(&self) -> bool {
        self.invertible && self.witness.is_none()
    }
}

/// Decides whether `s` k-blurs the twist: `s` is invertible and
/// `χ^P · S = S · χ^{f(P)}` for every 2k-orbit `P` of the first structure.
///
/// `a_pairs` and `b_pairs` are the 2k-orbit partitions; `f` maps blocks of
/// `a_pairs` to blocks of `b_pairs` and must preserve descriptors.
pub fn verify_blur(s: &BlockMatrix, a_pairs: &OrbitPartition, b_pairs: &OrbitPartition, f: &[u32], k: usize) -> Result<BlurVerdict> {
    check_type_map(a_pairs, b_pairs, f, k, s)?;
    let invertible = s.is_invertible();
    let witness = similarity_witness(s, a_pairs, b_pairs, f);
    Ok(BlurVerdict { invertible, witness })
}

fn check_type_map(a_pairs: &OrbitPartition, b_pairs: &OrbitPartition, f: &[u32], k: usize, s: &BlockMatrix) -> Result<()> {
    if a_pairs.k() != 2 * k || b_pairs.k() != 2 * k || s.rows.k() != k || s.cols.k() != k {
        return Err(Error::Argument("partition arities do not match k".into()));
    }
    if f.len() != a_pairs.len() || a_pairs.len() != b_pairs.len() {
        return Err(Error::Argument("type map must be a bijection between the 2k-orbits".into()));
    }
    let mut seen = vec![false; b_pairs.len()];
    for (p, &q) in f.iter().enumerate() {
        if q as usize >= b_pairs.len() || std::mem::replace(&mut seen[q as usize], true) {
            return Err(Error::Argument("type map is not a bijection".into()));
        }
        if a_pairs.descriptor(p) != b_pairs.descriptor(q as usize) {
            return Err(Error::Argument(format!("type map sends orbit {p} to an orbit of another type")));
        }
    }
    Ok(())
}

/// The lexicographically first `(P, u, v)` with
/// `(χ^P · S)(u, v) ≠ (S · χ^{f(P)})(u, v)`, with no conditions on `f`.
pub fn similarity_witness(s: &BlockMatrix, a_pairs: &OrbitPartition, b_pairs: &OrbitPartition, f: &[u32]) -> Option<BlurWitness> {
    let (rows, cols) = (&s.rows, &s.cols);
    let na = rows.tuple_count() as u32;
    let nb = cols.tuple_count() as u32;
    let words = (nb as usize).div_ceil(64);
    let csr = s.csr();
    let csc = s.csc();
    let row_bits = |u: u32, acc: &mut [u64]| {
        for &v in csr.targets(u) {
            acc[v as usize / 64] ^= 1 << (v % 64);
        }
    };
    for (p, &q) in f.iter().enumerate() {
        // Left side: row u of χ^P·S is the sum of the S-rows w with uw ∈ P.
        let mut left: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
        for &t in a_pairs.block(p) {
            let (u, w) = (t / na, t % na);
            let acc = left.entry(u).or_insert_with(|| vec![0; words]);
            row_bits(w, acc);
        }
        // Right side: row u of S·χ^Q is the sum over w ∈ supp(S_u) of the
        // rows {v : wv ∈ Q}.
        let mut q_rows: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for &t in b_pairs.block(q as usize) {
            q_rows.entry(t / nb).or_default().push(t % nb);
        }
        let mut right: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
        for (&w, vs) in &q_rows {
            for &u in csc.targets(w) {
                let acc = right.entry(u).or_insert_with(|| vec![0; words]);
                for &v in vs {
                    acc[v as usize / 64] ^= 1 << (v % 64);
                }
            }
        }
        let candidates: BTreeSet<u32> = left.keys().chain(right.keys()).copied().collect();
        let zero = vec![0u64; words];
        for u in candidates {
            let l = left.get(&u).unwrap_or(&zero);
            let r = right.get(&u).unwrap_or(&zero);
            if let Some(i) = (0..words).find(|&i| l[i] != r[i]) {
                let v = i as u32 * 64 + (l[i] ^ r[i]).trailing_zeros();
                return Some(BlurWitness { block: p as u32, u: rows.decode(u), v: cols.decode(v) });
            }
        }
    }
    None
}
