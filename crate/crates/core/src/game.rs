//! The invertible-map game over F2 between two pebbled CFI structures, with
//! an independent referee, Spoiler policies and the automated Duplicator.
//!
//! A round runs in four steps:
//! 1. Spoiler picks up `2k` pebble labels with [`GameState::pick_up`].
//! 2. [`duplicator_round`] answers with partitions of the `2k`-tuples, a
//!    block bijection and a similarity matrix.
//! 3. [`verify_round`] checks the answer.
//! 4. [`spoiler_move`] places the picked-up pebbles and checks that the
//!    pebbles still define a partial isomorphism.
//!
//! [`play`] drives whole games under a [`SpoilerPolicy`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basegraph::distant_vertex;
use crate::cfi::{CfiStructure, PartialMap, TwistFunction};
use crate::gf2::{type_map, BitMatrix, BlockMatrix};
use crate::orbits::{orbit_partition, CirculationSolver, OrbitPartition};
use crate::similarity::{build_s_kary, AuditPolicy, AuditReport, KaryOptions};
use crate::{Error, Result};

/// A pebble pair: the element carrying the label in each structure.
pub type PebblePair = (u32, u32);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Outcome {
    DuplicatorSurvived { rounds: usize },
    SpoilerWon { round: usize, reason: String },
}

impl Outcome {
    pub fn duplicator_survived(&self) -> bool {
        matches!(self, Outcome::DuplicatorSurvived { .. })
    }
}

/// Position of a game between `(A, ā)` and `(B, b̄)`.
#[derive(Clone, Debug)]
pub struct GameState {
    a: Arc<CfiStructure>,
    b: Arc<CfiStructure>,
    k: usize,
    slots: Vec<Option<PebblePair>>,
    picked: Option<Vec<usize>>,
    round: usize,
    outcome: Option<Outcome>,
    /// Construction choices for the Duplicator's matrices.
    pub policy: AuditPolicy,
}

/// Starts a game with `m` pebble labels; `pebbles[i]` goes on label `i`.
/// Structures of different sizes give a game Spoiler has already won.
pub fn new_game(
    a: Arc<CfiStructure>,
    b: Arc<CfiStructure>,
    k: usize,
    m: usize,
    pebbles: &[PebblePair],
) -> Result<GameState> {
    if k == 0 || 2 * k > m {
        return Err(Error::Argument(format!("need 1 ≤ k and 2k ≤ m, got k = {k}, m = {m}")));
    }
    if pebbles.len() > m {
        return Err(Error::Argument(format!("{} initial pebbles but only {m} labels", pebbles.len())));
    }
    let mut outcome = None;
    if a.universe_len() != b.universe_len() {
        outcome = Some(Outcome::SpoilerWon { round: 0, reason: "universes differ in size".into() });
    } else if a.base() != b.base() || a.modulus() != b.modulus() {
        return Err(Error::Argument("both structures must be CFI structures over one base graph and ring".into()));
    }
    let n = a.universe_len() as u32;
    if pebbles.iter().any(|&(x, y)| x >= n || y >= b.universe_len() as u32) {
        return Err(Error::Argument("pebble outside the universe".into()));
    }
    let mut slots = vec![None; m];
    for (i, &p) in pebbles.iter().enumerate() {
        slots[i] = Some(p);
    }
    let mut state = GameState { a, b, k, slots, picked: None, round: 0, outcome, policy: AuditPolicy::Enforce };
    if state.outcome.is_none() && !partial_isomorphism(&state.a, &state.b, &state.placed()) {
        state.outcome = Some(Outcome::SpoilerWon { round: 0, reason: "initial pebbles are not a partial isomorphism".into() });
    }
    Ok(state)
}

impl GameState {
    pub fn a(&self) -> &Arc<CfiStructure> {
        &self.a
    }

    pub fn b(&self) -> &Arc<CfiStructure> {
        &self.b
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.slots.len()
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn slots(&self) -> &[Option<PebblePair>] {
        &self.slots
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.outcome.as_ref()
    }

    /// Labels picked up in the current round, if any.
    pub fn picked(&self) -> Option<&[usize]> {
        self.picked.as_deref()
    }

    /// Placed pebbles in label order.
    pub fn placed(&self) -> Vec<PebblePair> {
        self.slots.iter().flatten().copied().collect()
    }

    /// Removes the pebbles with the given `2k` labels from both structures.
    pub fn pick_up(&mut self, labels: &[usize]) -> Result<()> {
        if self.outcome.is_some() {
            return Err(Error::Argument("the game is over".into()));
        }
        if self.picked.is_some() {
            return Err(Error::Argument("pebbles were already picked up this round".into()));
        }
        let mut sorted = labels.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != 2 * self.k || sorted.iter().any(|&l| l >= self.m()) {
            return Err(Error::Argument(format!("pick up exactly {} distinct labels below {}", 2 * self.k, self.m())));
        }
        for &l in &sorted {
            self.slots[l] = None;
        }
        self.picked = Some(sorted);
        Ok(())
    }
}

/// Whether the pebble pairs define a partial isomorphism between `a` and
/// `b`: the map is well defined and injective, and it preserves gadget
/// colours, the preorder, every edge relation and the relations `R_I` and
/// `R_C`.
pub fn partial_isomorphism(a: &CfiStructure, b: &CfiStructure, pairs: &[PebblePair]) -> bool {
    let n = pairs.len();
    for (i, &(x, y)) in pairs.iter().enumerate() {
        if a.origin(x) != b.origin(y) {
            return false;
        }
        for &(x2, y2) in &pairs[i + 1..] {
            if (x == x2) != (y == y2) {
                return false;
            }
        }
    }
    let mut i_labels = Vec::with_capacity(n * n);
    let mut c_labels = Vec::with_capacity(n * n);
    for &(x, y) in pairs {
        for &(x2, y2) in pairs {
            if a.precedes(x, x2) != b.precedes(y, y2) || a.edge_relation_index(x, x2) != b.edge_relation_index(y, y2) {
                return false;
            }
            i_labels.push((a.i_label(x, x2), b.i_label(y, y2)));
            c_labels.push((a.c_label(x, x2), b.c_label(y, y2)));
        }
    }
    for labels in [&i_labels, &c_labels] {
        for (la, lb) in labels.iter() {
            for (la2, lb2) in labels.iter() {
                if (la <= la2) != (lb <= lb2) {
                    return false;
                }
            }
        }
    }
    true
}

/// Duplicator's answer in one round.
#[derive(Clone, Debug)]
pub struct RoundProposal {
    /// Partition of `A^k × A^k`.
    pub pairs_a: OrbitPartition,
    /// Partition of `B^k × B^k`.
    pub pairs_b: OrbitPartition,
    /// Block bijection `P ↦ f(P)`.
    pub f: Vec<u32>,
    /// The `A^k × B^k` similarity matrix.
    pub s: BlockMatrix,
    /// Edge carrying the remaining twist after alignment, when there is one.
    pub relocated_edge: Option<(u32, u32)>,
    /// Twist value on the relocated edge.
    pub twist: u32,
    pub audit: Option<AuditReport>,
}

/// Referee verdict on a proposal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundVerdict {
    pub accepted: bool,
    pub reason: Option<String>,
}

impl RoundVerdict {
    fn reject(reason: impl Into<String>) -> Self {
        RoundVerdict { accepted: false, reason: Some(reason.into()) }
    }
}

fn remaining(state: &GameState) -> (Vec<u32>, Vec<u32>) {
    state.slots.iter().flatten().map(|&(x, y)| (x, y)).unzip()
}

/// Checks a proposal from first principles: the partitions cover the
/// `2k`-tuples of each side, `f` is a bijection, `S` is invertible over F2
/// and `χ^P · S = S · χ^{f(P)}` holds for every block.
pub fn verify_round(state: &GameState, proposal: &RoundProposal) -> RoundVerdict {
    let (a, b, k) = (&state.a, &state.b, state.k);
    let (pa, pb) = (&proposal.pairs_a, &proposal.pairs_b);
    if pa.k() != 2 * k || pb.k() != 2 * k || pa.universe_len() != a.universe_len() || pb.universe_len() != b.universe_len() {
        return RoundVerdict::reject("partitions are not over the 2k-tuples of the structures");
    }
    if pa.len() != pb.len() {
        return RoundVerdict::reject(format!("|P| = {} but |Q| = {}", pa.len(), pb.len()));
    }
    let mut hit = vec![false; pb.len()];
    if proposal.f.len() != pa.len() || proposal.f.iter().any(|&q| (q as usize) >= pb.len() || std::mem::replace(&mut hit[q as usize], true)) {
        return RoundVerdict::reject("f is not a bijection between the blocks");
    }
    let s = &proposal.s;
    let Some(n) = a.universe_len().checked_pow(k as u32) else {
        return RoundVerdict::reject("tuple space too large");
    };
    if s.row_count() != n || s.col_count() != n {
        return RoundVerdict::reject("S does not have shape A^k × B^k");
    }
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut dense = BitMatrix::zeros(n, n);
    for (u, v) in s.entries() {
        rows[u as usize].push(v);
        dense.set(u as usize, v as usize, true);
    }
    if dense.rank() != n {
        return RoundVerdict::reject("S is singular");
    }
    let na = a.universe_len() as u32;
    let decode = |mut t: u32| {
        let mut out = vec![0u32; k];
        for d in out.iter_mut().rev() {
            *d = t % na;
            t /= na;
        }
        out
    };
    let tuples: Vec<Vec<u32>> = (0..n as u32).map(decode).collect();
    let pair_block = |p: &OrbitPartition, u: usize, w: usize| {
        let t: Vec<u32> = tuples[u].iter().chain(&tuples[w]).copied().collect();
        p.block_of_tuple(&t)
    };
    let words = n.div_ceil(64);
    for u in 0..n {
        // Row u of χ^P · S, for every block P, against row u of S · χ^{f(P)}.
        let mut left: HashMap<u32, Vec<u64>> = HashMap::new();
        for (w, row) in rows.iter().enumerate() {
            let acc = left.entry(proposal.f[pair_block(pa, u, w) as usize]).or_insert_with(|| vec![0; words]);
            for &v in row {
                acc[v as usize / 64] ^= 1 << (v % 64);
            }
        }
        let mut right: HashMap<u32, Vec<u64>> = HashMap::new();
        for &w in &rows[u] {
            for v in 0..n {
                let acc = right.entry(pair_block(pb, w as usize, v)).or_insert_with(|| vec![0; words]);
                acc[v / 64] ^= 1 << (v % 64);
            }
        }
        let zero = vec![0u64; words];
        for q in left.keys().chain(right.keys()) {
            let l = left.get(q).unwrap_or(&zero);
            let r = right.get(q).unwrap_or(&zero);
            if l != r {
                let v = l.iter().zip(r).enumerate().find(|(_, (x, y))| x != y).map(|(i, (x, y))| i * 64 + (x ^ y).trailing_zeros() as usize).unwrap();
                let p = proposal.f.iter().position(|&x| x == *q).unwrap();
                return RoundVerdict::reject(format!(
                    "χ^P·S ≠ S·χ^f(P) for block {p} at row {:?}, column {:?}",
                    tuples[u],
                    decode(v as u32)
                ));
            }
        }
    }
    RoundVerdict { accepted: true, reason: None }
}

/// The proposal with `S = I` and orbit partitions matched by type. It is
/// accepted exactly when the identity already blurs the twist.
pub fn identity_proposal(state: &GameState) -> Result<RoundProposal> {
    let (wa, wb) = remaining(state);
    let k = state.k;
    let pairs_a = orbit_partition(&state.a, &wa, 2 * k)?;
    let pairs_b = orbit_partition(&state.b, &wb, 2 * k)?;
    let f = type_map(&pairs_a, &pairs_b)?;
    let rows = Arc::new(orbit_partition(&state.a, &wa, k)?);
    let cols = Arc::new(orbit_partition(&state.b, &wb, k)?);
    let s = BlockMatrix::from_entries(rows, cols, (0..state.a.universe_len().pow(k as u32) as u32).map(|u| (u, u)));
    Ok(RoundProposal { pairs_a, pairs_b, f, s, relocated_edge: None, twist: 0, audit: None })
}

fn strategy_failure(step: &str, required: &str, actual: String) -> Error {
    let mut report = AuditReport::new("Duplicator strategy");
    report.check(step, required, actual, false);
    Error::Audit(Box::new(report))
}

/// Duplicator's answer: an isomorphism `π` from `(B, w̄_B)` onto
/// `(B', w̄_A)`, where `B'` differs from `A` only on an edge at distance at
/// least 3 from the remaining pebbles, followed by the matrix that blurs
/// that last difference. `π` is found by solving one circulation system
/// whose prescribed values align the pebbles and whose right-hand side
/// moves the twist.
pub fn duplicator_round(state: &GameState) -> Result<RoundProposal> {
    if state.outcome.is_some() {
        return Err(Error::Argument("the game is over".into()));
    }
    if state.picked.is_none() {
        return Err(Error::Argument("Spoiler has not picked up pebbles yet".into()));
    }
    let (a, b, k) = (&state.a, &state.b, state.k);
    let base = a.base();
    let md = a.modulus();
    let (wa, wb) = remaining(state);
    let orig_w: Vec<u32> = wa.iter().map(|&x| a.origin(x)).collect();

    let t = distant_vertex(base, &orig_w, 2)
        .ok_or_else(|| strategy_failure("relocation target", "vertex at distance ≥ 3 from the pebbles", "none".into()))?;
    let t2 = base.neighbors(t)[0];
    let target_edge = base.edge_index(t, t2).expect("neighbour");
    let theta = md.sub(b.twist().total().value(), a.twist().total().value());

    let mut targets: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (&x, &y) in wa.iter().zip(&wb) {
        let shift: Vec<u32> = a.values(x).iter().zip(b.values(y)).map(|(&p, &q)| md.sub(p, q)).collect();
        if a.origin(x) != b.origin(y) || targets.get(&a.origin(x)).is_some_and(|prev| *prev != shift) {
            return Err(strategy_failure("alignment", "pebbles of equal type", format!("pebble pair ({x}, {y})")));
        }
        targets.insert(a.origin(x), shift);
    }
    let mut wanted = a.twist().values().to_vec();
    wanted[target_edge] = md.add(wanted[target_edge], theta);
    let delta: Vec<u32> = wanted.iter().zip(b.twist().values()).map(|(&w, &f)| md.sub(w, f)).collect();
    let prescribed: Vec<u32> = targets.keys().copied().collect();
    let pi: PartialMap = CirculationSolver::new(base.clone(), md, &prescribed)
        .solve(&targets, Some(&delta))
        .ok_or_else(|| strategy_failure("alignment", "solvable circulation system", "no solution".into()))?;
    let b2 = CfiStructure::build(base.clone(), TwistFunction::from_values(base, md, wanted)?)?;

    let pairs_a = orbit_partition(a, &wa, 2 * k)?;
    let pairs_b = orbit_partition(b, &wb, 2 * k)?;
    let f = type_map(&pairs_a, &pairs_b)?;
    let rows = Arc::new(orbit_partition(a, &wa, k)?);
    let cols = Arc::new(orbit_partition(b, &wb, k)?);
    let (entries, audit): (Vec<(u32, u32)>, Option<AuditReport>) = if theta == 0 {
        ((0..rows.tuple_count() as u32).map(|u| (u, u)).collect(), None)
    } else {
        let options = KaryOptions { layout: None, blurer: None, policy: state.policy };
        let blur = build_s_kary(a, &b2, &wa, t, t2, k, &options)?;
        (blur.matrix.entries().collect(), Some(blur.audit))
    };
    let back = pi.inverse();
    let s = BlockMatrix::from_entries(
        rows.clone(),
        cols.clone(),
        entries.into_iter().map(|(u, v)| (u, cols.encode(&back.apply_tuple(&b2, &rows.decode(v))))),
    );
    Ok(RoundProposal {
        pairs_a,
        pairs_b,
        f,
        s,
        relocated_edge: (theta != 0).then_some((t, t2)),
        twist: theta,
        audit,
    })
}

/// Places the picked-up pebbles on `u` and `v` and reports whether the
/// pebbles define a partial isomorphism. A `false` verdict ends the game.
pub fn spoiler_move(state: &mut GameState, proposal: &RoundProposal, block: usize, u: &[u32], v: &[u32]) -> Result<bool> {
    let Some(picked) = state.picked.clone() else {
        return Err(Error::Argument("Spoiler has not picked up pebbles yet".into()));
    };
    let (pa, pb) = (&proposal.pairs_a, &proposal.pairs_b);
    if block >= pa.len() || u.len() != pa.k() || v.len() != pb.k() {
        return Err(Error::Argument("illegal selection".into()));
    }
    if u.iter().any(|&x| x as usize >= pa.universe_len()) || v.iter().any(|&y| y as usize >= pb.universe_len()) {
        return Err(Error::Argument("selection outside the universe".into()));
    }
    if pa.block_of_tuple(u) as usize != block || pb.block_of_tuple(v) != proposal.f[block] {
        return Err(Error::Argument(format!("selection is not from block {block} and its image")));
    }
    for (i, &l) in picked.iter().enumerate() {
        state.slots[l] = Some((u[i], v[i]));
    }
    state.picked = None;
    state.round += 1;
    let ok = partial_isomorphism(&state.a, &state.b, &state.placed());
    if !ok {
        state.outcome = Some(Outcome::SpoilerWon { round: state.round, reason: "pebbles do not define a partial isomorphism".into() });
    }
    Ok(ok)
}

/// One Spoiler move: labels to pick up and the chosen tuples.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedMove {
    pub pick_up: Vec<usize>,
    pub u: Vec<u32>,
    pub v: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum SpoilerPolicy {
    /// Uniform pick-ups, uniform blocks and uniform tuples in them.
    Random { seed: u64 },
    /// Searches every line of play up to `depth` rounds ahead for a win
    /// and follows one when it exists.
    Exhaustive { depth: usize },
    Scripted { moves: Vec<ScriptedMove> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveRecord {
    pub block: usize,
    pub u: Vec<u32>,
    pub v: Vec<u32>,
    pub partial_isomorphism: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub picked_up: Vec<usize>,
    /// Pebble pairs left on the board while Duplicator answers.
    pub remaining: Vec<Option<PebblePair>>,
    pub relocated_edge: Option<(u32, u32)>,
    pub twist: u32,
    pub blocks: usize,
    pub s_ones: usize,
    pub referee: RoundVerdict,
    pub spoiler: Option<MoveRecord>,
    /// Set when Spoiler's search found a winning line at this round.
    pub spoiler_found_win: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub k: usize,
    pub m: usize,
    pub q: u32,
    pub policy: SpoilerPolicy,
    pub rounds: Vec<RoundRecord>,
    pub outcome: Outcome,
    /// The aligned situation Duplicator answers (remaining pebbles and
    /// relocated twist) recurred, so the strategy repeats itself from then on.
    pub stationary: bool,
}

impl Transcript {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcripts serialise")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Decode(e.to_string()))
    }
}

type SlotKey = Vec<Option<PebblePair>>;

/// Memoised look-ahead for the exhaustive Spoiler. Duplicator's answer
/// depends only on the pebbles left after the pick-up, so results are
/// cached on that position.
struct Lookahead {
    proposals: HashMap<SlotKey, Option<Arc<RoundProposal>>>,
    wins: HashMap<(SlotKey, usize), Option<Vec<ScriptedMove>>>,
}

impl Lookahead {
    fn new() -> Self {
        Lookahead { proposals: HashMap::new(), wins: HashMap::new() }
    }

    /// Duplicator's accepted answer on a post-pick-up position, or `None`
    /// when he has none.
    fn proposal(&mut self, state: &GameState) -> Result<Option<Arc<RoundProposal>>> {
        if let Some(p) = self.proposals.get(&state.slots) {
            return Ok(p.clone());
        }
        let p = match duplicator_round(state) {
            Ok(p) if verify_round(state, &p).accepted => Some(Arc::new(p)),
            Ok(_) | Err(Error::Audit(_)) => None,
            Err(e) => return Err(e),
        };
        self.proposals.insert(state.slots.clone(), p.clone());
        Ok(p)
    }

    /// A line of at most `depth` rounds after which Spoiler has won.
    fn winning_line(&mut self, state: &GameState, depth: usize) -> Result<Option<Vec<ScriptedMove>>> {
        if depth == 0 {
            return Ok(None);
        }
        for pick in label_subsets(state.m(), 2 * state.k) {
            let mut after = state.clone();
            after.pick_up(&pick)?;
            if let Some(mut line) = self.after_pick_up(&after, depth)? {
                line[0].pick_up = pick;
                return Ok(Some(line));
            }
        }
        Ok(None)
    }

    fn after_pick_up(&mut self, state: &GameState, depth: usize) -> Result<Option<Vec<ScriptedMove>>> {
        let key = (state.slots.clone(), depth);
        if let Some(r) = self.wins.get(&key) {
            return Ok(r.clone());
        }
        let picked = state.picked.clone().expect("picked up");
        let result = 'search: {
            let Some(proposal) = self.proposal(state)? else {
                break 'search Some(vec![ScriptedMove { pick_up: picked, u: Vec::new(), v: Vec::new() }]);
            };
            for p in 0..proposal.pairs_a.len() {
                let vs: Vec<Vec<u32>> = proposal.pairs_b.tuples(proposal.f[p] as usize).collect();
                for u in proposal.pairs_a.tuples(p) {
                    for v in &vs {
                        let mut next = state.clone();
                        let mv = ScriptedMove { pick_up: picked.clone(), u: u.clone(), v: v.clone() };
                        if !spoiler_move(&mut next, &proposal, p, &u, v)? {
                            break 'search Some(vec![mv]);
                        }
                        if let Some(rest) = self.winning_line(&next, depth - 1)? {
                            break 'search Some(std::iter::once(mv).chain(rest).collect());
                        }
                    }
                }
            }
            None
        };
        self.wins.insert(key, result.clone());
        Ok(result)
    }
}

fn label_subsets(m: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for l in start..m {
            cur.push(l);
            rec(l + 1, m, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, size, &mut Vec::new(), &mut out);
    out
}

/// Plays up to `rounds` rounds. Duplicator loses a round when his strategy
/// fails its audit or the referee rejects his answer.
pub fn play(state: &mut GameState, policy: &SpoilerPolicy, rounds: usize) -> Result<Transcript> {
    let mut rng = match policy {
        SpoilerPolicy::Random { seed } => Some(ChaCha8Rng::seed_from_u64(*seed)),
        _ => None,
    };
    let mut lookahead = Lookahead::new();
    let mut seen: HashSet<(SlotKey, Option<(u32, u32)>)> = HashSet::new();
    let mut stationary = false;
    let mut records = Vec::new();
    for r in 0..rounds {
        if state.outcome.is_some() {
            break;
        }
        let mut planned: Option<ScriptedMove> = None;
        let mut found_win = None;
        let pick = match policy {
            SpoilerPolicy::Random { .. } => {
                let rng = rng.as_mut().unwrap();
                let mut pick = sample(rng, state.m(), 2 * state.k).into_vec();
                pick.sort_unstable();
                pick
            }
            SpoilerPolicy::Exhaustive { depth } => {
                let line = lookahead.winning_line(state, (*depth).min(rounds - r))?;
                found_win = Some(line.is_some());
                match line {
                    Some(mut line) => {
                        let mv = line.remove(0);
                        let pick = mv.pick_up.clone();
                        planned = Some(mv);
                        pick
                    }
                    None => (0..2 * state.k).collect(),
                }
            }
            SpoilerPolicy::Scripted { moves } => {
                let Some(mv) = moves.get(r) else { break };
                planned = Some(mv.clone());
                mv.pick_up.clone()
            }
        };
        state.pick_up(&pick)?;
        let remaining_slots = state.slots.clone();
        let mut record = RoundRecord {
            round: state.round + 1,
            picked_up: pick,
            remaining: remaining_slots.clone(),
            relocated_edge: None,
            twist: 0,
            blocks: 0,
            s_ones: 0,
            referee: RoundVerdict { accepted: false, reason: None },
            spoiler: None,
            spoiler_found_win: found_win,
        };
        let proposal = match duplicator_round(state) {
            Ok(p) => p,
            Err(Error::Audit(report)) => {
                record.referee = RoundVerdict::reject(format!("Duplicator has no answer: {report}"));
                state.outcome = Some(Outcome::SpoilerWon { round: state.round + 1, reason: "Duplicator strategy audit failed".into() });
                records.push(record);
                break;
            }
            Err(e) => return Err(e),
        };
        record.relocated_edge = proposal.relocated_edge;
        record.twist = proposal.twist;
        record.blocks = proposal.pairs_a.len();
        record.s_ones = proposal.s.count_ones();
        record.referee = verify_round(state, &proposal);
        if !record.referee.accepted {
            state.outcome = Some(Outcome::SpoilerWon { round: state.round + 1, reason: "referee rejected Duplicator's answer".into() });
            records.push(record);
            break;
        }
        stationary |= !seen.insert((remaining_slots, proposal.relocated_edge));
        let (block, u, v) = match planned {
            Some(mv) if !mv.u.is_empty() => {
                let block = proposal.pairs_a.block_of_tuple(&mv.u) as usize;
                (block, mv.u, mv.v)
            }
            _ => match rng.as_mut() {
                Some(rng) => {
                    let p = rng.gen_range(0..proposal.pairs_a.len());
                    let members = proposal.pairs_a.block(p);
                    let images = proposal.pairs_b.block(proposal.f[p] as usize);
                    let u = proposal.pairs_a.decode(members[rng.gen_range(0..members.len())]);
                    let v = proposal.pairs_b.decode(images[rng.gen_range(0..images.len())]);
                    (p, u, v)
                }
                None => {
                    let u = proposal.pairs_a.decode(proposal.pairs_a.block(0)[0]);
                    let v = proposal.pairs_b.decode(proposal.pairs_b.block(proposal.f[0] as usize)[0]);
                    (0, u, v)
                }
            },
        };
        let ok = spoiler_move(state, &proposal, block, &u, &v)?;
        record.spoiler = Some(MoveRecord { block, u, v, partial_isomorphism: ok });
        records.push(record);
    }
    let outcome = state.outcome.clone().unwrap_or(Outcome::DuplicatorSurvived { rounds: state.round });
    Ok(Transcript {
        k: state.k,
        m: state.m(),
        q: state.a.modulus().q(),
        policy: policy.clone(),
        rounds: records,
        outcome,
        stationary,
    })
}
