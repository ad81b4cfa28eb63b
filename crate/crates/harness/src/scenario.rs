//! Scenario documents and the pipeline that runs them.
//!
//! A scenario names every input explicitly: base graph, ring, twist,
//! relocated edge, pebbles, arity, the checks to run, seeds and limits.
//! Running it yields a [`Report`] and a [`Status`].

use std::path::{Path, PathBuf};
use std::sync::Arc;

use cfiblur::basegraph::catalog;
use cfiblur::cfi::cfi_query_solve;
use cfiblur::game::{new_game, play, SpoilerPolicy, Transcript};
use cfiblur::gf2::{matrix_predicates, verify_blur, BlurWitness};
use cfiblur::orbits::aut_generators;
use cfiblur::similarity::{active_region_check, build_s_kary, pair_orbits, AuditPolicy, AuditReport, KaryOptions};
use cfiblur::{BlockMatrix, Blurer, CfiStructure, Modulus, TwistFunction};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::formats::parse_graph;
use crate::{HarnessError, Status};

const BUNDLED: &[(&str, &str)] = &[
    ("k1-K4", include_str!("../scenarios/k1-K4.json")),
    ("k1-K4-q3", include_str!("../scenarios/k1-K4-q3.json")),
    ("k1-Q4-pebble", include_str!("../scenarios/k1-Q4-pebble.json")),
    ("k1-K4-identity", include_str!("../scenarios/k1-K4-identity.json")),
    ("game-K4-exhaustive", include_str!("../scenarios/game-K4-exhaustive.json")),
];

/// Names and documents of the scenarios compiled into the binary.
pub fn bundled() -> impl Iterator<Item = (&'static str, &'static str)> {
    BUNDLED.iter().copied()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum GraphSource {
    Catalog(String),
    /// A graph file, relative to the scenario file.
    Path(PathBuf),
    /// The graph document inline, text or JSON.
    Inline(String),
    Generate { degree: usize, girth: usize, connectivity: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum TwistSource {
    Zero,
    Values(Vec<u32>),
    Random { seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    /// Orbit-diagonal, orbit-invariant and odd-filled.
    Predicates,
    /// `χ^P·S = S·χ^{f(P)}` for every 2k-orbit `P`, and `S` invertible.
    Blur,
    /// The active region lies on the relocated edge's star.
    Region,
    /// The CFI query solver recovers both total twists.
    Query,
    Game,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Injection {
    /// Replace the constructed matrix by the identity.
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    Enforce,
    Override,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSpec {
    pub m: usize,
    pub rounds: usize,
    pub policy: SpoilerPolicy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    /// Upper bound on the number of 2k-tuples of the universe.
    pub max_tuples: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub graph: GraphSource,
    pub q: u32,
    /// Twist of the first structure.
    pub twist: TwistSource,
    /// The second structure adds `theta` on this edge.
    pub edge: [u32; 2],
    pub theta: u32,
    /// Universe elements pebbled identically in both structures.
    pub pebbles: Vec<u32>,
    pub k: usize,
    pub audit: Policy,
    pub blurer: Option<serde_json::Value>,
    pub inject: Option<Injection>,
    pub verify: Vec<Check>,
    pub game: Option<GameSpec>,
    pub limits: Limits,
}

#[derive(Clone, Debug, Serialize)]
pub struct GraphSummary {
    pub name: Option<String>,
    pub n: usize,
    pub m: usize,
    pub girth: Option<usize>,
    pub connectivity: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct MatrixSummary {
    pub rows: usize,
    pub ones: usize,
    pub factors: usize,
    pub dropped: usize,
    pub injected: Option<Injection>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub check: Check,
    pub passed: bool,
    pub detail: String,
    pub witness: Option<serde_json::Value>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub scenario: String,
    pub version: String,
    pub status: Status,
    pub exit_code: i32,
    pub graph: Option<GraphSummary>,
    pub universe: Option<usize>,
    pub audit: Option<AuditReport>,
    pub matrix: Option<MatrixSummary>,
    pub checks: Vec<CheckResult>,
    pub game: Option<Transcript>,
    pub error: Option<String>,
}

impl Report {
    fn new(name: &str) -> Self {
        Report {
            scenario: name.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            status: Status::Pass,
            exit_code: 0,
            graph: None,
            universe: None,
            audit: None,
            matrix: None,
            checks: Vec::new(),
            game: None,
            error: None,
        }
    }

    fn settle(mut self, status: Status) -> Self {
        self.status = status;
        self.exit_code = status.code();
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialise");
        s.push('\n');
        s
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Input(format!("scenario: {e}")))
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf), HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Input(format!("{}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Self::parse(&text)?, dir))
    }

    pub fn bundled(name: &str) -> Result<Self, HarnessError> {
        let (_, text) = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| HarnessError::Input(format!("no bundled scenario {name:?}")))?;
        Self::parse(text)
    }
}

/// Runs a scenario file, or a bundled scenario when `path` names one and
/// no such file exists.
pub fn run_scenario(path: &str) -> Report {
    let loaded = if Path::new(path).is_file() {
        Scenario::load(Path::new(path))
    } else if BUNDLED.iter().any(|(n, _)| *n == path) {
        Scenario::bundled(path).map(|s| (s, PathBuf::new()))
    } else {
        Err(HarnessError::Input(format!("{path}: no such scenario file or bundled scenario")))
    };
    match loaded {
        Ok((s, dir)) => run(&s, &dir),
        Err(e) => {
            let mut r = Report::new(path);
            r.error = Some(e.to_string());
            r.settle(e.status())
        }
    }
}

/// Runs a parsed scenario; relative graph paths resolve against `dir`.
pub fn run(s: &Scenario, dir: &Path) -> Report {
    let mut report = Report::new(&s.name);
    match pipeline(s, dir, &mut report) {
        Ok(()) => {
            let failed = report.checks.iter().any(|c| !c.passed);
            report.settle(if failed { Status::VerdictFail } else { Status::Pass })
        }
        Err(e) => {
            if let HarnessError::Core(cfiblur::Error::Audit(a)) = &e {
                report.audit = Some((**a).clone());
            }
            report.error = Some(e.to_string());
            let status = e.status();
            report.settle(status)
        }
    }
}

fn twist_function(src: &TwistSource, base: &cfiblur::BaseGraph, m: Modulus) -> Result<TwistFunction, HarnessError> {
    Ok(match src {
        TwistSource::Zero => TwistFunction::zero(base, m),
        TwistSource::Values(v) => TwistFunction::from_values(base, m, v.clone())?,
        TwistSource::Random { seed } => TwistFunction::random(base, m, &mut ChaCha8Rng::seed_from_u64(*seed)),
    })
}

fn witness_json(w: &BlurWitness) -> serde_json::Value {
    serde_json::json!({ "block": w.block, "u": w.u, "v": w.v })
}

fn pipeline(s: &Scenario, dir: &Path, report: &mut Report) -> Result<(), HarnessError> {
    let base = match &s.graph {
        GraphSource::Catalog(name) => catalog::by_name(name)?,
        GraphSource::Path(p) => parse_graph(&std::fs::read_to_string(dir.join(p))?)?,
        GraphSource::Inline(text) => parse_graph(text)?,
        GraphSource::Generate { degree, girth, connectivity, seed } => {
            catalog::catalog_or_generate(*degree, *girth, *connectivity, Some(*seed))?
        }
    };
    report.graph = Some(GraphSummary {
        name: base.name().map(str::to_string),
        n: base.n(),
        m: base.m(),
        girth: base.girth(),
        connectivity: base.connectivity(),
    });
    let base = Arc::new(base);
    let md = Modulus::new(s.q)?;
    let [t, t2] = s.edge;
    let fa = twist_function(&s.twist, &base, md)?;
    let fb = fa.clone().twisted(&base, t, t2, s.theta)?;
    let a = Arc::new(CfiStructure::build(base.clone(), fa)?);
    let b = Arc::new(CfiStructure::build(base.clone(), fb)?);
    let n = a.universe_len();
    report.universe = Some(n);
    if let Some(&p) = s.pebbles.iter().find(|&&p| p as usize >= n) {
        return Err(HarnessError::Input(format!("pebble {p} outside the universe of size {n}")));
    }
    let tuples = (n as u64).checked_pow(2 * s.k as u32).unwrap_or(u64::MAX);
    if tuples > s.limits.max_tuples {
        return Err(HarnessError::Resource(format!(
            "{n}^{} = {tuples} tuples exceeds the limit {}",
            2 * s.k,
            s.limits.max_tuples
        )));
    }

    let wants = |c: Check| s.verify.contains(&c);
    if wants(Check::Predicates) || wants(Check::Blur) || wants(Check::Region) {
        let blurer = match &s.blurer {
            Some(v) => Some(
                Blurer::from_json(&v.to_string())?
                    .map_err(|e| HarnessError::Input(format!("scenario blurer is invalid: {e}")))?,
            ),
            None => None,
        };
        let policy = match s.audit {
            Policy::Enforce => AuditPolicy::Enforce,
            Policy::Override => AuditPolicy::Override,
        };
        let options = KaryOptions { layout: None, blurer, policy };
        let blur = build_s_kary(&a, &b, &s.pebbles, t, t2, s.k, &options)?;
        report.audit = Some(blur.audit.clone());
        let matrix = match s.inject {
            Some(Injection::Identity) => {
                let rows = blur.matrix.row_partition().clone();
                let cols = blur.matrix.col_partition().clone();
                BlockMatrix::from_entries(rows, cols.clone(), (0..cols.tuple_count() as u32).map(|u| (u, u)))
            }
            None => blur.matrix,
        };
        report.matrix = Some(MatrixSummary {
            rows: matrix.row_count(),
            ones: matrix.count_ones(),
            factors: blur.factors,
            dropped: blur.dropped,
            injected: s.inject,
        });
        let claimed: Vec<u32> = match &blur.layout {
            Some(l) => {
                let mut v: Vec<u32> = l.paths().iter().flatten().copied().collect();
                v.sort_unstable();
                v.dedup();
                v
            }
            None => vec![t],
        };
        let checks = std::thread::scope(|scope| -> Result<Vec<CheckResult>, HarnessError> {
            let predicates = wants(Check::Predicates).then(|| {
                scope.spawn(|| {
                    let gens = aut_generators(&a, &s.pebbles).permutations(&a);
                    let r = matrix_predicates(&matrix, &gens);
                    CheckResult {
                        check: Check::Predicates,
                        passed: r.all(),
                        detail: format!(
                            "orbit-diagonal {}, orbit-invariant {}, odd-filled {}",
                            r.orbit_diagonal, r.orbit_invariant, r.odd_filled
                        ),
                        witness: None,
                    }
                })
            });
            let region = wants(Check::Region).then(|| {
                scope.spawn(|| {
                    let r = active_region_check(&a, &matrix, &claimed);
                    CheckResult {
                        check: Check::Region,
                        passed: r.holds(),
                        detail: format!("claimed region {claimed:?}"),
                        witness: r.active_outside.map(|(u, v, c)| serde_json::json!({ "u": u, "v": v, "component": c })),
                    }
                })
            });
            let blur_check = if wants(Check::Blur) {
                let (pa, pb, f) = pair_orbits(&a, &b, &s.pebbles, s.k)?;
                let verdict = verify_blur(&matrix, &pa, &pb, &f, s.k)?;
                Some(CheckResult {
                    check: Check::Blur,
                    passed: verdict.holds(),
                    detail: format!("{} orbits of {}-tuples, invertible {}", pa.len(), 2 * s.k, verdict.invertible),
                    witness: verdict.witness.as_ref().map(witness_json),
                })
            } else {
                None
            };
            let mut out = Vec::new();
            if let Some(h) = predicates {
                out.push(h.join().expect("predicate check panicked"));
            }
            out.extend(blur_check);
            if let Some(h) = region {
                out.push(h.join().expect("region check panicked"));
            }
            Ok(out)
        })?;
        report.checks.extend(checks);
    }

    if wants(Check::Query) {
        let got_a = cfi_query_solve(&a.strip())?;
        let got_b = cfi_query_solve(&b.strip())?;
        let ok = got_a == a.twist().total() && got_b == b.twist().total();
        report.checks.push(CheckResult {
            check: Check::Query,
            passed: ok,
            detail: format!("solved totals {} and {}, declared {} and {}", got_a, got_b, a.twist().total(), b.twist().total()),
            witness: None,
        });
    }

    if wants(Check::Game) {
        let spec = s.game.as_ref().ok_or_else(|| HarnessError::Input("game check needs a game section".into()))?;
        let pairs: Vec<(u32, u32)> = s.pebbles.iter().map(|&p| (p, p)).collect();
        let mut state = new_game(a.clone(), b.clone(), s.k, spec.m, &pairs)?;
        let transcript = play(&mut state, &spec.policy, spec.rounds)?;
        report.checks.push(CheckResult {
            check: Check::Game,
            passed: transcript.outcome.duplicator_survived(),
            detail: format!("{:?}", transcript.outcome),
            witness: None,
        });
        report.game = Some(transcript);
    }
    Ok(())
}
