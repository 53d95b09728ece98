//! Command-line front end: validate, ground, route, compile, benchmark,
//! audits, and the plane-removal sweep.
//!
//! Exit code is 0 iff the requested run completed with no unsafe acceptance
//! and no failed audit assertion.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use leo_intent::compiler::{self, BackendKind, ChatBackend, CompilerConfig, HttpBackend, MockBackend, Shots};
use leo_intent::constellation::{build_snapshot, default_catalog, RegionCatalog, TopologySnapshot, WalkerConfig};
use leo_intent::grounding::{ground, ConstrainedGraph};
use leo_intent::harness::{
    self, load_benchmark_file, AblationMode, BenchmarkEntry,
};
use leo_intent::ir::{parse_program, serialize_program};
use leo_intent::router::{shortest_path, DijkstraRouter};
use leo_intent::validator::{EndpointMode, Outcome, Validator};

#[derive(Parser)]
#[command(name = "leo-intent", version, about = "Intent compilation, validation, and constrained routing for LEO constellations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct TopologyArgs {
    /// Constellation config TOML; defaults to the 20x20 / 550 km / 53 deg shell.
    #[arg(long)]
    topology: Option<PathBuf>,
    /// Snapshot time in seconds.
    #[arg(long, default_value_t = 0.0)]
    time: f64,
    /// Comma-separated active event names.
    #[arg(long)]
    events: Option<String>,
    /// Region catalog CSV; defaults to the shipped 14-region catalog.
    #[arg(long)]
    regions: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the 8-pass validator on a serialized ConstraintProgram.
    Validate {
        program: PathBuf,
        #[command(flatten)]
        topo: TopologyArgs,
        /// Endpoint certification semantics.
        #[arg(long, default_value = "universal")]
        mode: String,
        /// Write the full JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ground a program into topology masks and demands.
    Ground {
        program: PathBuf,
        #[command(flatten)]
        topo: TopologyArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shortest constrained path between two nodes.
    Route {
        src: usize,
        dst: usize,
        /// Optional program whose grounding constrains the graph.
        #[arg(long)]
        program: Option<PathBuf>,
        #[command(flatten)]
        topo: TopologyArgs,
    },
    /// Compile a natural-language intent into a ConstraintProgram.
    Compile {
        intent: String,
        /// rule | llm | mock
        #[arg(long, default_value = "rule")]
        backend: String,
        /// JSON array of scripted responses (mock backend).
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
        /// zero | six
        #[arg(long, default_value = "six")]
        shots: String,
        #[arg(long)]
        max_retries: Option<u32>,
        #[command(flatten)]
        topo: TopologyArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Benchmark operations.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
    /// Safety and performance audits.
    Audit {
        #[command(subcommand)]
        command: AuditCommand,
    },
    /// End-to-end constrained routing over the four standard scenarios.
    Eval {
        #[arg(long, default_value = "1,2,3")]
        seeds: String,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        #[command(flatten)]
        topo: TopologyArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Severity sweeps on the reference router.
    Sweep {
        #[command(subcommand)]
        command: SweepCommand,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Compile and score every benchmark intent.
    Run {
        /// Benchmark JSON; defaults to the shipped 40-entry file.
        #[arg(long)]
        bench: Option<PathBuf>,
        /// full | no-verifier | no-repair | zero-shot
        #[arg(long, default_value = "full")]
        config: String,
        /// rule | llm
        #[arg(long, default_value = "rule")]
        backend: String,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        topo: TopologyArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validator-only confusion matrix over ground-truth programs.
    Confusion {
        #[arg(long)]
        bench: Option<PathBuf>,
        #[command(flatten)]
        topo: TopologyArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum AuditCommand {
    /// 8 corruption types x N injections; asserts 100% detection.
    Corruption {
        #[arg(long, default_value_t = 30)]
        n: usize,
        #[arg(long)]
        bench: Option<PathBuf>,
        #[command(flatten)]
        topo: TopologyArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The 15-case adversarial suite; asserts 15/15 flagged.
    Adversarial {
        #[command(flatten)]
        topo: TopologyArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-program validator latency over the benchmark.
    Runtime {
        #[arg(long)]
        bench: Option<PathBuf>,
        #[command(flatten)]
        topo: TopologyArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SweepCommand {
    /// Disable k random planes per seed and evaluate delivery.
    PlanesOff {
        /// Comma-separated plane counts, e.g. 1,2,3,5.
        list: String,
        #[arg(long, default_value = "1,2,3")]
        seeds: String,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        #[command(flatten)]
        topo: TopologyArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Context_ {
    snapshot: TopologySnapshot,
    catalog: RegionCatalog,
    events: BTreeSet<String>,
    config: WalkerConfig,
}

fn build_context(topo: &TopologyArgs) -> Result<Context_> {
    let config = match &topo.topology {
        Some(path) => WalkerConfig::from_toml_file(path).with_context(|| format!("loading {}", path.display()))?,
        None => WalkerConfig::default(),
    };
    let catalog = match &topo.regions {
        Some(path) => RegionCatalog::from_csv_file(path).with_context(|| format!("loading {}", path.display()))?,
        None => default_catalog().clone(),
    };
    let snapshot = build_snapshot(&config, topo.time)?;
    let events = topo
        .events
        .as_deref()
        .map(|s| s.split(',').map(|e| e.trim().to_string()).filter(|e| !e.is_empty()).collect())
        .unwrap_or_default();
    Ok(Context_ {
        snapshot,
        catalog,
        events,
        config,
    })
}

fn load_program(path: &Path) -> Result<leo_intent::ir::ConstraintProgram> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_program(&text).map_err(|errs| {
        anyhow::anyhow!(
            "program does not parse:\n{}",
            errs.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n")
        )
    })
}

fn load_bench(path: &Option<PathBuf>) -> Result<Vec<BenchmarkEntry>> {
    match path {
        Some(p) => Ok(load_benchmark_file(p).with_context(|| format!("loading {}", p.display()))?),
        None => Ok(harness::builtin_benchmark()),
    }
}

fn write_out<T: serde::Serialize>(out: &Option<PathBuf>, value: &T) -> Result<()> {
    if let Some(path) = out {
        std::fs::write(path, serde_json::to_string_pretty(value)?)
            .with_context(|| format!("writing {}", path.display()))?;
        eprintln!("report written to {}", path.display());
    }
    Ok(())
}

fn endpoint_mode(s: &str) -> Result<EndpointMode> {
    match s {
        "universal" => Ok(EndpointMode::Universal),
        "existential" => Ok(EndpointMode::Existential),
        other => bail!("unknown mode {other:?} (expected universal or existential)"),
    }
}

fn compiler_config(
    backend: &str,
    endpoint: &Option<String>,
    model: &Option<String>,
    shots: &str,
    max_retries: Option<u32>,
) -> Result<CompilerConfig> {
    let mut config = CompilerConfig {
        backend: BackendKind::parse(backend).with_context(|| format!("unknown backend {backend:?}"))?,
        ..CompilerConfig::default()
    };
    if let Some(url) = endpoint {
        config.endpoint_url = url.clone();
    } else if let Ok(url) = std::env::var("LEO_INTENT_ENDPOINT") {
        config.endpoint_url = url;
    }
    if let Some(m) = model {
        config.model_name = m.clone();
    } else if let Ok(m) = std::env::var("LEO_INTENT_MODEL") {
        config.model_name = m;
    }
    config.shots = match shots {
        "zero" => Shots::Zero,
        "six" => Shots::Six,
        other => bail!("unknown shots {other:?} (expected zero or six)"),
    };
    if let Some(r) = max_retries {
        config.max_retries = r;
    }
    Ok(config)
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { program, topo, mode, out } => {
            let ctx = build_context(&topo)?;
            let text = std::fs::read_to_string(&program).with_context(|| format!("reading {}", program.display()))?;
            let validator = Validator::new(&ctx.snapshot, &ctx.catalog)
                .with_events(ctx.events.clone())
                .with_mode(endpoint_mode(&mode)?);
            let mut report = validator.validate_source(&text);
            for pass in &report.pass_results {
                println!("pass {} ({}): {:?}", pass.pass, pass.name, pass.status);
                for e in &pass.errors {
                    println!("  error: {e}");
                }
                for w in &pass.warnings {
                    println!("  warning: {w}");
                }
            }
            println!("outcome: {}", report.outcome.label());
            if let Outcome::Accept(witness) = &report.outcome {
                let paths: usize = witness.flows.iter().map(|f| f.paths.len()).sum();
                println!("witness: {} flow(s), {} path(s)", witness.flows.len(), paths);
            }
            if matches!(report.outcome, Outcome::Reject) {
                if let Ok(p) = parse_program(&text) {
                    let resolution = validator.resolve_fallback(&p, &report);
                    if let leo_intent::validator::FallbackResolution::UnsatCore { indices, .. } = &resolution {
                        report.unsat_core = Some(indices.clone());
                    }
                    println!("fallback resolution: {}", serde_json::to_string(&resolution)?);
                }
            }
            write_out(&out, &report)?;
            Ok(true)
        }
        Command::Ground { program, topo, out } => {
            let ctx = build_context(&topo)?;
            let p = load_program(&program)?;
            let validator = Validator::new(&ctx.snapshot, &ctx.catalog).with_events(ctx.events.clone());
            let report = validator.validate(&p);
            if !report.structurally_valid() {
                bail!("program fails structural validation:\n{}", report.errors.join("\n"));
            }
            let grounding = ground(&p, &ctx.snapshot, &ctx.catalog, &ctx.events)?;
            let summary = grounding.summary();
            println!("{}", serde_json::to_string_pretty(&summary)?);
            write_out(&out, &grounding)?;
            Ok(true)
        }
        Command::Route {
            src,
            dst,
            program,
            topo,
        } => {
            let ctx = build_context(&topo)?;
            let grounding = match &program {
                Some(path) => {
                    let p = load_program(path)?;
                    ground(&p, &ctx.snapshot, &ctx.catalog, &ctx.events)?
                }
                None => leo_intent::grounding::GroundingResult::identity(&ctx.snapshot),
            };
            let graph = ConstrainedGraph::new(&ctx.snapshot, &grounding);
            match shortest_path(&graph, src, dst)? {
                Some(path) => {
                    println!(
                        "path ({} hops, {:.3} ms): {}",
                        path.hops,
                        path.delay_ms,
                        path.nodes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" -> ")
                    );
                }
                None => println!("unreachable on the constrained graph"),
            }
            Ok(true)
        }
        Command::Compile {
            intent,
            backend,
            script,
            endpoint,
            model,
            shots,
            max_retries,
            topo,
            out,
        } => {
            let ctx = build_context(&topo)?;
            let config = compiler_config(&backend, &endpoint, &model, &shots, max_retries)?;
            let validator = Validator::new(&ctx.snapshot, &ctx.catalog).with_events(ctx.events.clone());
            let mut http;
            let mut mock;
            let chat: &mut dyn ChatBackend = match config.backend {
                BackendKind::Llm => {
                    http = HttpBackend::new(config.timeout_s)?;
                    &mut http
                }
                BackendKind::Mock => {
                    let path = script.context("--script is required for the mock backend")?;
                    let text = std::fs::read_to_string(&path)?;
                    let responses: Vec<String> = serde_json::from_str(&text).context("script must be a JSON array of strings")?;
                    mock = MockBackend::new(responses);
                    &mut mock
                }
                BackendKind::RuleBased => {
                    mock = MockBackend::default();
                    &mut mock
                }
            };
            let (result, trace) = compiler::compile(&intent, &config, chat, &validator);
            match result {
                Ok(program) => {
                    let text = serialize_program(&program);
                    println!("{text}");
                    eprintln!(
                        "compiled in {} attempt(s){}",
                        trace.attempts.len(),
                        if trace.first_try { " (first try)" } else { "" }
                    );
                    if let Some(path) = out {
                        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
                    }
                    Ok(true)
                }
                Err(e) => {
                    eprintln!("compilation failed: {e}");
                    for (i, attempt) in trace.attempts.iter().enumerate() {
                        for err in &attempt.errors {
                            eprintln!("  attempt {}: {err}", i + 1);
                        }
                    }
                    Ok(false)
                }
            }
        }
        Command::Bench { command } => match command {
            BenchCommand::Run {
                bench,
                config,
                backend,
                endpoint,
                model,
                topo,
                out,
            } => {
                let ctx = build_context(&topo)?;
                let entries = load_bench(&bench)?;
                let mode = AblationMode::parse(&config).with_context(|| format!("unknown config {config:?}"))?;
                let compiler_config = compiler_config(&backend, &endpoint, &model, "six", None)?;
                let validator = Validator::new(&ctx.snapshot, &ctx.catalog).with_events(ctx.events.clone());
                let report = harness::run_bench(&entries, &compiler_config, mode, &validator)?;
                println!(
                    "{:<16} {:>4} {:>9} {:>7} {:>8} {:>6}",
                    "category", "n", "compiled", "types", "targets", "full"
                );
                for (category, agg) in &report.per_category {
                    println!(
                        "{:<16} {:>4} {:>9} {:>7} {:>8} {:>6}",
                        category, agg.n, agg.compiled, agg.types_match, agg.targets_match, agg.full_match
                    );
                }
                let o = &report.overall;
                println!(
                    "{:<16} {:>4} {:>9} {:>7} {:>8} {:>6}",
                    "overall", o.n, o.compiled, o.types_match, o.targets_match, o.full_match
                );
                println!("unsafe acceptances: {}", report.unsafe_acceptances);
                write_out(&out, &report)?;
                Ok(report.unsafe_acceptances == 0)
            }
            BenchCommand::Confusion { bench, topo, out } => {
                let ctx = build_context(&topo)?;
                let entries = load_bench(&bench)?;
                let validator = Validator::new(&ctx.snapshot, &ctx.catalog).with_events(ctx.events.clone());
                let report = harness::run_confusion(&entries, &validator);
                println!("{:<16} {:>4} {:>7} {:>7} {:>8}", "category", "n", "accept", "reject", "abstain");
                for (category, row) in &report.rows {
                    println!(
                        "{:<16} {:>4} {:>7} {:>7} {:>8}",
                        category, row.total, row.accept, row.reject, row.abstain
                    );
                }
                println!(
                    "decided rate: {:.1}%  unsafe acceptances: {}",
                    report.decided_rate * 100.0,
                    report.unsafe_acceptances
                );
                write_out(&out, &report)?;
                Ok(report.unsafe_acceptances == 0)
            }
        },
        Command::Audit { command } => match command {
            AuditCommand::Corruption { n, bench, topo, out } => {
                let ctx = build_context(&topo)?;
                let entries = load_bench(&bench)?;
                let validator = Validator::new(&ctx.snapshot, &ctx.catalog);
                let report = harness::run_corruption_audit(&entries, &validator, n);
                println!("{:<24} {:>9} {:>9} passes", "corruption type", "injected", "detected");
                for t in &report.per_type {
                    println!(
                        "{:<24} {:>9} {:>9} {:?}",
                        t.ctype, t.injected, t.detected, t.caught_by_passes
                    );
                }
                println!(
                    "total: {}/{} detected; passes 1-6 covered: {}",
                    report.total_detected, report.total_injected, report.passes_1_to_6_covered
                );
                write_out(&out, &report)?;
                // Pass coverage is a property of the full matrix; smoke runs
                // only assert detection.
                let coverage_ok = n < 30 || report.passes_1_to_6_covered;
                Ok(report.all_detected && coverage_ok)
            }
            AuditCommand::Adversarial { topo, out } => {
                let ctx = build_context(&topo)?;
                let validator = Validator::new(&ctx.snapshot, &ctx.catalog);
                let report = harness::run_adversarial(&validator);
                for case in &report.cases {
                    println!(
                        "[{}] {:<34} outcome={:<8} {}",
                        if case.flagged { "flagged" } else { "MISSED " },
                        case.id,
                        case.outcome,
                        case.description
                    );
                }
                println!("detected: {}/{}", report.flagged, report.total);
                write_out(&out, &report)?;
                Ok(report.flagged == report.total)
            }
            AuditCommand::Runtime { bench, topo, out } => {
                let ctx = build_context(&topo)?;
                let entries = load_bench(&bench)?;
                let validator = Validator::new(&ctx.snapshot, &ctx.catalog);
                let report = harness::measure_runtime(&entries, &validator);
                println!("{:<22} {:>4} {:>11} {:>11} {:>11}", "category", "n", "median(ms)", "p95(ms)", "max(ms)");
                for row in &report.rows {
                    println!(
                        "{:<22} {:>4} {:>11.3} {:>11.3} {:>11.3}",
                        row.label, row.n, row.median_ms, row.p95_ms, row.max_ms
                    );
                }
                write_out(&out, &report)?;
                Ok(true)
            }
        },
        Command::Eval {
            seeds,
            steps,
            pairs,
            topo,
            out,
        } => {
            let ctx = build_context(&topo)?;
            let seed_list: Vec<u64> = seeds
                .split(',')
                .map(|s| s.trim().parse::<u64>().context("seeds must be integers"))
                .collect::<Result<_>>()?;
            let report = harness::run_e2e(&ctx.config, &ctx.catalog, &DijkstraRouter, &seed_list, steps, pairs);
            println!(
                "{:<20} {:>9} {:>7} {:>14} {:>10}",
                "scenario", "raw_pdr", "reach", "reachable_pdr", "violations"
            );
            let mut clean = true;
            for r in &report.scenarios {
                println!(
                    "{:<20} {:>8.1}% {:>6.1}% {:>13.1}% {:>10}",
                    r.scenario,
                    r.raw_pdr * 100.0,
                    r.reachability * 100.0,
                    r.reachable_pdr * 100.0,
                    r.violations
                );
                clean &= r.violations == 0;
            }
            write_out(&out, &report)?;
            Ok(clean)
        }
        Command::Sweep { command } => match command {
            SweepCommand::PlanesOff {
                list,
                seeds,
                steps,
                pairs,
                topo,
                out,
            } => {
                let ctx = build_context(&topo)?;
                let counts: Vec<usize> = list
                    .split(',')
                    .map(|s| s.trim().parse::<usize>().context("plane counts must be integers"))
                    .collect::<Result<_>>()?;
                let seed_list: Vec<u64> = seeds
                    .split(',')
                    .map(|s| s.trim().parse::<u64>().context("seeds must be integers"))
                    .collect::<Result<_>>()?;
                let report = harness::sweep_planes_off(
                    &counts,
                    &ctx.config,
                    &ctx.catalog,
                    &DijkstraRouter,
                    &seed_list,
                    steps,
                    pairs,
                );
                println!(
                    "{:>10} {:>9} {:>9} {:>7} {:>14} {:>10}",
                    "planes_off", "capacity", "raw_pdr", "reach", "reachable_pdr", "violations"
                );
                let mut clean = true;
                for row in &report.rows {
                    println!(
                        "{:>10} {:>8.0}% {:>8.1}% {:>6.1}% {:>13.1}% {:>10}",
                        row.planes_off,
                        row.capacity_lost * 100.0,
                        row.raw_pdr * 100.0,
                        row.reachability * 100.0,
                        row.reachable_pdr * 100.0,
                        row.violations
                    );
                    clean &= row.violations == 0;
                }
                write_out(&out, &report)?;
                Ok(clean)
            }
        },
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
