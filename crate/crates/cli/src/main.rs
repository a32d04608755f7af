use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use addrnet_core::bench::{bench_scale, device_counts, BenchConfig, RouteImpl, CSV_HEADER, MIN_REPS};
use addrnet_core::net::{resolve, Name, NodeId, ResolveResult};
use addrnet_core::platform::{builtin, load_platform, PlatformSpec};
use addrnet_core::refmon::CheckSet;
use addrnet_core::stats::{worst_case_state, StatsReport};
use addrnet_core::text::parse_u64;
use addrnet_core::topo::{route, TopologyGraph};
use addrnet_core::trace::{parse_trace, run_trace, Outcome};

/// Address-space models, capability traces, and routing over platforms.
///
/// A platform argument is a builtin name (xeon_phi, pcie_scale:N,
/// arm_uniform, arm_swapped, arm_private, arm_private_swapped) or the path
/// of a platform file.
#[derive(Parser)]
#[command(name = "addrnet", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Load a platform, validate it, and boot the monitor on it.
    Check { platform: String },
    /// Resolve a name in the booted platform to the names that accept it.
    Resolve {
        platform: String,
        /// Node id or label.
        asid: String,
        addr: String,
    },
    /// Print the configurable spaces to program so `src` reaches `dst`.
    Route { platform: String, src: String, dst: String },
    /// Run a trace file against the booted platform.
    Trace { platform: String, tracefile: PathBuf },
    /// Time route queries on the PCIe scaling platform and emit CSV.
    BenchScale {
        #[arg(long, default_value_t = 16)]
        min: usize,
        #[arg(long, default_value_t = 1024)]
        max: usize,
        #[arg(long, default_value_t = 16)]
        step: usize,
        /// Output file, or `-` for standard output.
        #[arg(long, default_value = "-")]
        out: String,
        #[arg(long, default_value_t = MIN_REPS as u64, value_parser = clap::value_parser!(u64).range(MIN_REPS as u64..))]
        reps: u64,
        #[arg(long, default_value_t = 200)]
        warmup: usize,
    },
    /// Capability accounting for a platform.
    Stats {
        platform: String,
        /// Report the state after running this trace.
        #[arg(long, conflicts_with = "worst_case")]
        after_trace: Option<PathBuf>,
        /// Report the state where every RAM frame is its own capability.
        #[arg(long)]
        worst_case: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    JsonLines,
}

/// Printed as `error: <Kind>: <message>`. Exit status 1, or 2 for usage.
struct Failure {
    kind: &'static str,
    message: String,
}

fn fail(kind: &'static str, message: impl ToString) -> Failure {
    Failure { kind, message: message.to_string() }
}

fn load(arg: &str) -> Result<PlatformSpec, Failure> {
    let spec = if Path::new(arg).is_file() {
        let text = fs::read_to_string(arg).map_err(|e| fail("IoError", format!("{arg}: {e}")))?;
        load_platform(&text)
    } else {
        builtin(arg)
    };
    spec.map_err(|e| fail(e.kind(), e))
}

fn node(spec: &PlatformSpec, arg: &str) -> Result<NodeId, Failure> {
    if let Some(n) = spec.node_by_label(arg) {
        return Ok(n.id);
    }
    parse_u64(arg)
        .and_then(|v| u16::try_from(v).ok())
        .map(NodeId)
        .filter(|id| spec.node(*id).is_some())
        .ok_or_else(|| fail("UnknownNode", format!("no node `{arg}` in {}", spec.name)))
}

fn label(spec: &PlatformSpec, id: NodeId) -> String {
    spec.node(id).map_or_else(|| id.to_string(), |n| n.label.clone())
}

fn boot(spec: &PlatformSpec) -> Result<addrnet_core::refmon::KernelState, Failure> {
    spec.boot().map_err(|e| fail("BootError", e))
}

fn read_trace(path: &Path) -> Result<Vec<addrnet_core::trace::MonitorOp>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| fail("IoError", format!("{}: {e}", path.display())))?;
    parse_trace(&text).map_err(|e| fail("ParseError", format!("{}: {e}", path.display())))
}

fn run(cmd: Cmd, out: &mut dyn Write) -> Result<(), Failure> {
    let io = |e: io::Error| fail("IoError", e);
    match cmd {
        Cmd::Check { platform } => {
            let spec = load(&platform)?;
            spec.validate().map_err(|e| fail(e.kind(), e))?;
            let st = boot(&spec)?;
            writeln!(
                out,
                "ok {}: {} nodes, {} subjects, {} capabilities",
                spec.name,
                spec.nodes.len(),
                spec.subjects.len(),
                st.mdb.len()
            )
            .map_err(io)?;
        }
        Cmd::Resolve { platform, asid, addr } => {
            let spec = load(&platform)?;
            let id = node(&spec, &asid)?;
            let addr = parse_u64(&addr).ok_or_else(|| fail("ParseError", format!("bad address `{addr}`")))?;
            let start = Name::checked(id, addr).map_err(|e| fail("NetError", e))?;
            let st = boot(&spec)?;
            match resolve(&st.materialized(), start).map_err(|e| fail("NetError", e))? {
                ResolveResult::Accepted(names) => {
                    for n in names {
                        writeln!(out, "{n}").map_err(io)?;
                    }
                }
                ResolveResult::Undecodable(n) => return Err(fail("Undecodable", format!("{start} stops at {n}"))),
                ResolveResult::Loop(cycle) => {
                    let cycle: Vec<String> = cycle.iter().map(ToString::to_string).collect();
                    return Err(fail("Loop", format!("{start} loops through {}", cycle.join(" -> "))));
                }
            }
        }
        Cmd::Route { platform, src, dst } => {
            let spec = load(&platform)?;
            let (s, d) = (node(&spec, &src)?, node(&spec, &dst)?);
            let bp = route(&TopologyGraph::from_platform(&spec), s, d).map_err(|e| fail(e.kind(), e))?;
            let spaces: Vec<String> = bp.spaces().into_iter().map(|id| label(&spec, id)).collect();
            writeln!(out, "{}", spaces.join(",")).map_err(io)?;
        }
        Cmd::Trace { platform, tracefile } => {
            let spec = load(&platform)?;
            let ops = read_trace(&tracefile)?;
            let result = run_trace(boot(&spec)?, &ops, CheckSet::ALL);
            let done = result.states.len().saturating_sub(1);
            for (i, op) in ops.iter().take(done).enumerate() {
                writeln!(out, "{i} ok {op}").map_err(io)?;
            }
            match result.outcome {
                Outcome::Completed => writeln!(out, "Correct").map_err(io)?,
                Outcome::InvalidInitial(v) => {
                    let kind = v.first().map_or("Invariant", |v| v.kind());
                    return Err(fail(kind, "initial state is inconsistent"));
                }
                Outcome::Aborted { step, error } => {
                    writeln!(out, "{step} failed {}", ops[step]).map_err(io)?;
                    writeln!(out, "Incorrect").map_err(io)?;
                    return Err(fail(error.kind(), format!("step {step}: {error}")));
                }
            }
        }
        Cmd::BenchScale { min, max, step, out: dest, reps, warmup } => {
            if min == 0 || min > max || step == 0 {
                return Err(fail("UsageError", "need 1 <= min <= max and step >= 1"));
            }
            let cfg = BenchConfig { reps: reps as usize, warmup };
            eprintln!("# single thread, repetitions run back to back, reps={} warmup={}", cfg.reps, cfg.warmup);
            let started = Instant::now();
            let points = bench_scale(&device_counts(min, max, step), &RouteImpl::ALL, cfg)
                .map_err(|e| fail(e.kind(), e))?;
            let sink: Box<dyn Write> = if dest == "-" {
                Box::new(&mut *out)
            } else {
                Box::new(fs::File::create(&dest).map_err(|e| fail("IoError", format!("{dest}: {e}")))?)
            };
            let mut w = csv::Writer::from_writer(sink);
            let csv_err = |e: csv::Error| fail("IoError", e);
            w.write_record(CSV_HEADER).map_err(csv_err)?;
            for p in &points {
                w.write_record(p.csv_record()).map_err(csv_err)?;
            }
            w.flush().map_err(io)?;
            eprintln!("# {} points in {:.1?}", points.len(), started.elapsed());
        }
        Cmd::Stats { platform, after_trace, worst_case, format } => {
            let spec = load(&platform)?;
            let st = if worst_case {
                worst_case_state(&spec).map_err(|e| fail("BootError", e))?
            } else {
                let st = boot(&spec)?;
                match after_trace {
                    None => st,
                    Some(path) => {
                        let ops = read_trace(&path)?;
                        let result = run_trace(st, &ops, CheckSet::ALL);
                        if let Outcome::Aborted { step, error } = &result.outcome {
                            return Err(fail(error.kind(), format!("step {step}: {error}")));
                        }
                        result.states.last().cloned().ok_or_else(|| fail("Invariant", "initial state is inconsistent"))?
                    }
                }
            };
            let report = StatsReport::of(&st, &TopologyGraph::from_platform(&spec));
            write_stats(&report, format, out).map_err(io)?;
        }
    }
    Ok(())
}

fn write_stats(r: &StatsReport, format: Format, out: &mut dyn Write) -> io::Result<()> {
    let fields = r.fields();
    match format {
        Format::Text => {
            for (k, v) in &fields {
                writeln!(out, "{k}: {v}")?;
            }
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(fields.iter().map(|(k, _)| k))?;
            w.write_record(fields.iter().map(|(_, v)| v))?;
            w.flush()?;
        }
        Format::JsonLines => {
            let obj = serde_json::json!({
                "capability_count": r.capability_count,
                "bytes_of_capabilities": r.bytes_of_capabilities,
                "managed_memory_bytes": r.managed_memory_bytes,
                "overhead_ratio": r.overhead_ratio,
                "mdb_depth": r.mdb_depth,
                "graph_diameter": r.graph_diameter,
            });
            writeln!(out, "{obj}")?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match run(cli.cmd, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            lock.flush().ok();
            eprintln!("error: {}: {}", f.kind, f.message);
            ExitCode::from(if f.kind == "UsageError" { 2 } else { 1 })
        }
    }
}
