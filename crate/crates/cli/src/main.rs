//! `nova`: run, simulate and check the solver from JSON configurations.
//!
//! Exit codes: 0 success, 1 other failure (including failed surrogate
//! verification), 2 configuration or input error, 3 convergence failure,
//! infeasibility or iteration limit.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nova_core::bench::{self, grid_oracle, registry, write_trace, RunConfig, TraceFormat};
use nova_core::inner::NoObserver;
use nova_core::nova::{NovaOutcome, NovaStatus};
use nova_core::sim::{run_distributed, SimMode, Topology, TopologyKind};
use nova_core::surrogate::{verify_surrogate, SurrogatePlan};
use nova_core::{Error, Result};

#[derive(Parser)]
#[command(name = "nova", version, about = "Inner convex approximation solver for nonconvex programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for TraceFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => TraceFormat::Csv,
            FormatArg::Json => TraceFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Dual,
    Primal,
}

#[derive(Clone, Copy, ValueEnum)]
enum TopologyArg {
    ClusterHead,
    FullyDecentralizedStub,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver and optionally write the per-iteration trace.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, value_enum)]
        trace_format: Option<FormatArg>,
        /// Compare analytic gradients with finite differences first.
        #[arg(long)]
        check_oracles: bool,
    },
    /// Run with inner solves executed as simulated agent rounds.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Number of agents; must equal the number of blocks.
        #[arg(long)]
        agents: Option<usize>,
        #[arg(long, value_enum, default_value = "cluster-head")]
        topology: TopologyArg,
        #[arg(long)]
        roundlog: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Check the configured models empirically at an anchor.
    VerifySurrogate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Anchor as comma-separated coordinates (default: the start point).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        anchor: Option<Vec<f64>>,
        /// Check the registered alternative recipes too.
        #[arg(long)]
        all_variants: bool,
    },
    /// Brute-force grid scan of a problem with at most three variables.
    GridOracle {
        #[arg(long, conflicts_with = "problem")]
        config: Option<PathBuf>,
        /// Registered problem id (default parameters).
        #[arg(long)]
        problem: Option<String>,
        #[arg(long)]
        resolution: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        lower: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        upper: Option<Vec<f64>>,
    },
    /// List the registered benchmark problems.
    ListProblems,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Input(_) | Error::Parameter(_) | Error::Config(_) | Error::Json(_) | Error::Unsupported(_) => 2,
        Error::Convergence { .. } | Error::Infeasible(_) => 3,
        Error::Io(_) | Error::Csv(_) => 1,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("NOVA_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("NOVA_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))
}

fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::from_json(&text)
}

fn execute(command: Command) -> Result<u8> {
    match command {
        Command::Run {
            config,
            trace,
            trace_format,
            check_oracles,
        } => run(&config, trace, trace_format, check_oracles),
        Command::Simulate {
            config,
            mode,
            agents,
            topology,
            roundlog,
            trace,
        } => simulate(&config, mode, agents, topology, roundlog, trace),
        Command::VerifySurrogate {
            config,
            samples,
            anchor,
            all_variants,
        } => verify(&config, samples, anchor, all_variants),
        Command::GridOracle {
            config,
            problem,
            resolution,
            lower,
            upper,
        } => grid(config, problem, resolution, lower, upper),
        Command::ListProblems => {
            for e in registry() {
                println!("{:<15} {}", e.id, e.summary);
            }
            Ok(0)
        }
    }
}

fn print_outcome(out: &NovaOutcome) {
    let last = out.trace.last();
    println!("status: {:?}", out.status);
    println!("iterations: {}", out.trace.len());
    if let Some(r) = last {
        println!("objective: {:.12}", r.u);
    }
    println!("point: {:?}", out.point);
    println!("multipliers: {:?}", out.multipliers);
    println!("kkt residual: {:.3e}", out.final_kkt);
    if !out.diagnostics.passed() {
        println!("diagnostics: {:?}", out.diagnostics);
    }
}

fn status_code(out: &NovaOutcome) -> u8 {
    match out.status {
        NovaStatus::Stationary => 0,
        NovaStatus::MaxIter => {
            eprintln!("error: iteration limit reached before the stopping tolerance");
            3
        }
        NovaStatus::InnerFailure => {
            let msg = out.failure.as_deref().unwrap_or("inner solve failed");
            eprintln!("error: {msg}");
            out.failure_error.as_deref().map_or(3, exit_code)
        }
    }
}

fn run(config: &Path, trace: Option<PathBuf>, format: Option<FormatArg>, check_oracles: bool) -> Result<u8> {
    let cfg = load(config)?;
    let prepared = cfg.prepare()?;
    if check_oracles {
        let check = prepared.problem.check_oracles(20, cfg.seed);
        if !check.passed() {
            return Err(Error::Input(format!(
                "gradient check failed: objective error {:.3e}, constraint errors {:?} (tol {:.0e})",
                check.objective_error, check.constraint_errors, check.tolerance
            )));
        }
    }
    let out = prepared.run(&mut NoObserver)?;
    let format = format.map(TraceFormat::from).unwrap_or(cfg.trace.format);
    if let Some(path) = trace.or(cfg.trace.path.clone()) {
        write_trace(&out.trace, &path, format)?;
    }
    print_outcome(&out);
    Ok(status_code(&out))
}

fn simulate(
    config: &Path,
    mode: ModeArg,
    agents: Option<usize>,
    topology: TopologyArg,
    roundlog: Option<PathBuf>,
    trace: Option<PathBuf>,
) -> Result<u8> {
    let cfg = load(config)?;
    let prepared = cfg.prepare()?;
    let blocks = prepared.problem.blocks.as_ref().map_or(1, |b| b.len());
    let topo = Topology {
        kind: match topology {
            TopologyArg::ClusterHead => TopologyKind::ClusterHead,
            TopologyArg::FullyDecentralizedStub => TopologyKind::FullyDecentralizedStub,
        },
        agents: agents.unwrap_or(blocks),
        seed: cfg.seed,
    };
    let mode = match mode {
        ModeArg::Dual => SimMode::Dual,
        ModeArg::Primal => SimMode::Primal,
    };
    let out = run_distributed(&prepared.plan, &prepared.nova, &prepared.solve, mode, topo, &prepared.x0)?;
    if let Some(path) = roundlog {
        let file = std::fs::File::create(&path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), &out.rounds)?;
    }
    if let Some(path) = trace {
        write_trace(&out.run.trace, &path, cfg.trace.format)?;
    }
    print_outcome(&out.run);
    println!("rounds: {}", out.rounds.len());
    println!("messages: {}", out.total_messages);
    println!("payload floats: {}", out.total_floats);
    println!("simulated round time (ms): {:.3}", out.wall_rounds_ms);
    Ok(status_code(&out.run))
}

fn verify(config: &Path, samples: usize, anchor: Option<Vec<f64>>, all_variants: bool) -> Result<u8> {
    let cfg = load(config)?;
    let prepared = cfg.prepare()?;
    let anchor = anchor.unwrap_or_else(|| prepared.x0.clone());
    let mut recipes = vec![("configured".to_string(), prepared.surrogate.clone())];
    if all_variants {
        if let bench::ProblemRef::Registry(r) = &cfg.problem {
            recipes.extend(bench::build_benchmark(&r.id, &r.params)?.variants);
        }
    }
    let mut ok = true;
    for (name, recipe) in recipes {
        let plan = SurrogatePlan::new(&prepared.problem, &recipe)?;
        let (obj, cons) = plan.build(&anchor)?;
        let report = verify_surrogate(&prepared.problem, Some(&obj), &cons, samples, cfg.seed);
        println!("recipe {name}:");
        print!("{report}");
        ok &= report.passed();
    }
    println!("{}", if ok { "all checks passed" } else { "some checks failed" });
    Ok(if ok { 0 } else { 1 })
}

fn grid(
    config: Option<PathBuf>,
    problem: Option<String>,
    resolution: f64,
    lower: Option<Vec<f64>>,
    upper: Option<Vec<f64>>,
) -> Result<u8> {
    let spec = match (config, problem) {
        (Some(path), _) => load(&path)?.prepare()?.problem,
        (None, Some(id)) => bench::build_benchmark(&id, &serde_json::Value::Null)?.problem,
        (None, None) => return Err(Error::Config("give --config or --problem".into())),
    };
    let bounds = match (lower, upper) {
        (Some(l), Some(u)) => Some((l, u)),
        (None, None) => None,
        _ => return Err(Error::Config("give both --lower and --upper, or neither".into())),
    };
    let r = grid_oracle(&spec, resolution, bounds)?;
    println!("points scanned: {}", r.points_scanned);
    match r.best {
        Some((x, v)) => {
            println!("best point: {x:?}");
            println!("best value: {v:.12}");
        }
        None => println!("no feasible grid point"),
    }
    Ok(0)
}
