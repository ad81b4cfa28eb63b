use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use cfiblur::basegraph::catalog;
use cfiblur::blurer::{blurer_for, search_blurer, SearchBudget};
use cfiblur::cfi::{cfi_query_solve, RelationalCfi};
use cfiblur::game::{new_game, play, ScriptedMove, SpoilerPolicy};
use cfiblur::orbits::orbit_partition;
use cfiblur::{Blurer, CfiStructure, Modulus, TwistFunction};
use cfiblur_harness::formats::{load_graph, roundtrip};
use cfiblur_harness::scenario::{self, Check, GraphSource, Injection, Limits, Policy, TwistSource};
use cfiblur_harness::{bundled, run_scenario, HarnessError, Scenario, Status};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "cfiblur", version, about = "CFI structures, blurers, blur matrices and the invertible-map game")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect, convert or generate base graphs
    #[command(subcommand)]
    Graph(GraphCmd),
    /// Build a CFI structure and print it as JSON
    Cfi(CfiArgs),
    /// Print the k-orbits of a pebbled CFI structure
    Orbits(OrbitsArgs),
    /// Verify, construct or search for blurers
    #[command(subcommand)]
    Blurer(BlurerCmd),
    /// Build a blur matrix for a one-edge twist and verify it
    Blur(BlurArgs),
    /// Play the invertible-map game
    #[command(subcommand)]
    Game(GameCmd),
    /// Recover the total twist of a (stripped) structure document
    SolveQuery { file: PathBuf },
    /// Run, list or print scenarios
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// Check that a document decodes and re-encodes stably
    Roundtrip { file: PathBuf },
}

#[derive(Subcommand)]
enum GraphCmd {
    /// Degrees, girth and connectivity
    Info { graph: String },
    /// Re-encode a graph in text or JSON form
    Convert {
        graph: String,
        #[arg(long, value_enum)]
        to: GraphFormat,
    },
    /// A catalog graph or a seeded random regular graph with the given bounds
    Generate {
        #[arg(long)]
        degree: usize,
        #[arg(long)]
        girth: usize,
        #[arg(long)]
        connectivity: usize,
        #[arg(long)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphFormat {
    Text,
    Json,
}

/// Where the first structure's twist comes from.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct TwistArgs {
    /// All-zero twist
    #[arg(long)]
    zero: bool,
    /// Uniformly random twist from this seed
    #[arg(long)]
    seed: Option<u64>,
}

impl TwistArgs {
    fn source(&self) -> TwistSource {
        match self.seed {
            Some(seed) => TwistSource::Random { seed },
            None => TwistSource::Zero,
        }
    }
}

#[derive(Args)]
struct CfiArgs {
    #[arg(long)]
    graph: String,
    #[arg(long)]
    q: u32,
    #[command(flatten)]
    twist: TwistArgs,
    /// Omit the twist function from the output
    #[arg(long)]
    stripped: bool,
}

#[derive(Args)]
struct OrbitsArgs {
    #[arg(long)]
    graph: String,
    #[arg(long)]
    q: u32,
    #[arg(long)]
    k: usize,
    #[arg(long, value_delimiter = ',')]
    pebbles: Vec<u32>,
    #[command(flatten)]
    twist: TwistArgs,
}

#[derive(Args)]
struct BlurerParams {
    #[arg(long)]
    k: usize,
    #[arg(long)]
    q: u32,
    #[arg(long)]
    a: u32,
    #[arg(long)]
    d: usize,
}

#[derive(Subcommand)]
enum BlurerCmd {
    /// Exit 0 iff the document is a blurer for its declared parameters
    Verify { file: PathBuf },
    /// Construct a blurer from the named families and transforms
    Make(BlurerParams),
    /// Search for a blurer by solving the parity conditions
    Search {
        #[command(flatten)]
        params: BlurerParams,
        #[arg(long, default_value_t = 1 << 12)]
        max_pool: usize,
    },
}

#[derive(Args)]
struct BlurArgs {
    #[arg(long)]
    graph: String,
    #[arg(long)]
    q: u32,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    theta: u32,
    /// The twisted edge `t,t'`
    #[arg(long, value_parser = parse_edge)]
    edge: [u32; 2],
    #[arg(long, value_delimiter = ',')]
    pebbles: Vec<u32>,
    #[command(flatten)]
    twist: TwistArgs,
    /// Blurer document to use instead of the derived one
    #[arg(long)]
    blurer: Option<PathBuf>,
    /// Replace the matrix by the identity before verifying
    #[arg(long)]
    inject_identity: bool,
    /// Build the matrix even when hypotheses fail
    #[arg(long)]
    override_audit: bool,
    #[arg(long, default_value_t = 1 << 24)]
    max_tuples: u64,
}

fn parse_edge(s: &str) -> Result<[u32; 2], String> {
    let (x, y) = s.split_once(',').ok_or("expected two vertices `t,t'`")?;
    let v = |p: &str| p.trim().parse::<u32>().map_err(|e| format!("{p:?}: {e}"));
    Ok([v(x)?, v(y)?])
}

#[derive(Subcommand)]
enum GameCmd {
    /// Play against a one-edge twisted pair and print the transcript
    Play(PlayArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyKind {
    Random,
    Exhaustive,
    Scripted,
}

#[derive(Args)]
struct PlayArgs {
    #[arg(long)]
    graph: String,
    #[arg(long)]
    q: u32,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    rounds: usize,
    #[arg(long, value_enum)]
    policy: PolicyKind,
    /// Seeds the first twist and the random Spoiler
    #[arg(long)]
    seed: u64,
    /// Twist difference on the first edge; half the ring by default
    #[arg(long)]
    theta: Option<u32>,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// JSON list of scripted moves
    #[arg(long)]
    script: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// Run a scenario file or a bundled scenario by name
    Run {
        scenario: String,
        /// Write the report here instead of standard output
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Names of the bundled scenarios
    List,
    /// Print a bundled scenario document
    Show { name: String },
}

fn print_json<T: serde::Serialize>(v: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn structure(graph: &str, q: u32, twist: &TwistArgs) -> anyhow::Result<CfiStructure> {
    let base = Arc::new(load_graph(graph)?);
    let m = Modulus::new(q)?;
    let f = match twist.seed {
        Some(seed) => TwistFunction::random(&base, m, &mut ChaCha8Rng::seed_from_u64(seed)),
        None => TwistFunction::zero(&base, m),
    };
    Ok(CfiStructure::build(base, f)?)
}

fn graph_cmd(cmd: GraphCmd) -> anyhow::Result<Status> {
    match cmd {
        GraphCmd::Info { graph } => print_json(&load_graph(&graph)?.properties())?,
        GraphCmd::Convert { graph, to } => {
            let g = load_graph(&graph)?;
            match to {
                GraphFormat::Text => print!("{}", g.to_text()),
                GraphFormat::Json => print!("{}", g.to_json()),
            }
        }
        GraphCmd::Generate { degree, girth, connectivity, seed } => {
            print!("{}", catalog::catalog_or_generate(degree, girth, connectivity, Some(seed))?.to_json())
        }
    }
    Ok(Status::Pass)
}

fn blurer_cmd(cmd: BlurerCmd) -> anyhow::Result<Status> {
    match cmd {
        BlurerCmd::Verify { file } => {
            let text = std::fs::read_to_string(&file).with_context(|| file.display().to_string())?;
            match Blurer::from_json(&text)? {
                Ok(b) => {
                    println!("ok: ({}, {}, {}, {})-blurer with {} tuples", b.k(), b.q(), b.a(), b.d(), b.len());
                    Ok(Status::Pass)
                }
                Err(v) => {
                    println!("not a blurer: {v}");
                    Ok(Status::VerdictFail)
                }
            }
        }
        BlurerCmd::Make(p) => match blurer_for(p.k, p.q, p.a, p.d) {
            Ok(b) => {
                print!("{}", b.to_json());
                Ok(Status::Pass)
            }
            Err(e @ cfiblur::Error::Argument(_)) => Err(e.into()),
            Err(e) => {
                eprintln!("{e}");
                Ok(Status::VerdictFail)
            }
        },
        BlurerCmd::Search { params: p, max_pool } => {
            let budget = SearchBudget { max_pool, ..SearchBudget::default() };
            match search_blurer(p.k, p.q, p.a, p.d, budget) {
                Some(b) => {
                    print!("{}", b.to_json());
                    Ok(Status::Pass)
                }
                None => {
                    eprintln!("no ({}, {}, {}, {})-blurer found within the budget", p.k, p.q, p.a, p.d);
                    Ok(Status::VerdictFail)
                }
            }
        }
    }
}

fn blur_cmd(args: BlurArgs) -> anyhow::Result<Status> {
    let blurer = match &args.blurer {
        Some(path) => Some(serde_json::from_str(&std::fs::read_to_string(path)?).map_err(HarnessError::from)?),
        None => None,
    };
    let graph = if std::path::Path::new(&args.graph).is_file() {
        GraphSource::Inline(std::fs::read_to_string(&args.graph)?)
    } else {
        GraphSource::Catalog(args.graph.clone())
    };
    let s = Scenario {
        name: "blur".into(),
        graph,
        q: args.q,
        twist: args.twist.source(),
        edge: args.edge,
        theta: args.theta,
        pebbles: args.pebbles,
        k: args.k,
        audit: if args.override_audit { Policy::Override } else { Policy::Enforce },
        blurer,
        inject: args.inject_identity.then_some(Injection::Identity),
        verify: vec![Check::Predicates, Check::Blur, Check::Region],
        game: None,
        limits: Limits { max_tuples: args.max_tuples },
    };
    let report = scenario::run(&s, std::path::Path::new("."));
    print!("{}", report.to_json());
    Ok(report.status)
}

fn game_cmd(GameCmd::Play(args): GameCmd) -> anyhow::Result<Status> {
    let base = Arc::new(load_graph(&args.graph)?);
    let m = Modulus::new(args.q)?;
    let f = TwistFunction::random(&base, m, &mut ChaCha8Rng::seed_from_u64(args.seed));
    let (x, y) = base.edges().first().copied().context("graph has no edges")?;
    let theta = args.theta.unwrap_or(1 << (args.q - 1));
    let g = f.clone().twisted(&base, x, y, theta)?;
    let a = Arc::new(CfiStructure::build(base.clone(), f)?);
    let b = Arc::new(CfiStructure::build(base, g)?);
    let policy = match args.policy {
        PolicyKind::Random => SpoilerPolicy::Random { seed: args.seed },
        PolicyKind::Exhaustive => SpoilerPolicy::Exhaustive { depth: args.depth },
        PolicyKind::Scripted => {
            let path = args.script.as_ref().context("--policy scripted needs --script")?;
            let moves: Vec<ScriptedMove> = serde_json::from_str(&std::fs::read_to_string(path)?).map_err(HarnessError::from)?;
            SpoilerPolicy::Scripted { moves }
        }
    };
    let mut state = new_game(a, b, args.k, args.m, &[])?;
    let transcript = play(&mut state, &policy, args.rounds)?;
    println!("{}", transcript.to_json());
    Ok(if transcript.outcome.duplicator_survived() { Status::Pass } else { Status::VerdictFail })
}

fn scenario_cmd(cmd: ScenarioCmd) -> anyhow::Result<Status> {
    match cmd {
        ScenarioCmd::Run { scenario, out } => {
            let report = run_scenario(&scenario);
            match out {
                Some(path) => std::fs::write(&path, report.to_json()).map_err(HarnessError::from)?,
                None => print!("{}", report.to_json()),
            }
            if let Some(e) = &report.error {
                eprintln!("{e}");
            }
            Ok(report.status)
        }
        ScenarioCmd::List => {
            for (name, _) in bundled() {
                println!("{name}");
            }
            Ok(Status::Pass)
        }
        ScenarioCmd::Show { name } => {
            let (_, text) = bundled().find(|(n, _)| *n == name).with_context(|| format!("no bundled scenario {name:?}"))
                .map_err(|e| HarnessError::Input(e.to_string()))?;
            print!("{text}");
            Ok(Status::Pass)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<Status> {
    match cli.command {
        Command::Graph(cmd) => graph_cmd(cmd),
        Command::Cfi(args) => {
            let s = structure(&args.graph, args.q, &args.twist)?;
            print!("{}", s.to_json(args.stripped));
            Ok(Status::Pass)
        }
        Command::Orbits(args) => {
            let s = structure(&args.graph, args.q, &args.twist)?;
            if let Some(&p) = args.pebbles.iter().find(|&&p| p as usize >= s.universe_len()) {
                bail!(HarnessError::Input(format!("pebble {p} outside the universe")));
            }
            print!("{}", orbit_partition(&s, &args.pebbles, args.k)?.to_json());
            Ok(Status::Pass)
        }
        Command::Blurer(cmd) => blurer_cmd(cmd),
        Command::Blur(args) => blur_cmd(args),
        Command::Game(cmd) => game_cmd(cmd),
        Command::SolveQuery { file } => {
            let text = std::fs::read_to_string(&file).map_err(HarnessError::from)?;
            let s = RelationalCfi::from_json(&text)?;
            print_json(&serde_json::json!({ "total": cfi_query_solve(&s)?.value() }))?;
            Ok(Status::Pass)
        }
        Command::Scenario(cmd) => scenario_cmd(cmd),
        Command::Roundtrip { file } => {
            let text = std::fs::read_to_string(&file).map_err(HarnessError::from)?;
            let r = roundtrip(&text)?;
            print_json(&r)?;
            Ok(if r.holds() { Status::Pass } else { Status::VerdictFail })
        }
    }
}

/// Exit status for an error that escaped a subcommand.
fn classify(e: &anyhow::Error) -> Status {
    if let Some(h) = e.downcast_ref::<HarnessError>() {
        h.status()
    } else if let Some(c) = e.downcast_ref::<cfiblur::Error>() {
        Status::of_core(c)
    } else {
        Status::Input
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(Status::Input.code() as u8) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(status) => ExitCode::from(status.code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(classify(&e).code() as u8)
        }
    }
}
