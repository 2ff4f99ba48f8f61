use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use natsim::frontend::{apply_overrides, characterize, compile, load_block_db, BasicBlockRecord, CostTable, WorkloadProgram};
use natsim::kernel::{filter_ids, run, trace_definitions, SimulationResult};
use natsim::target::{cycles_to_ns, TargetConfig, MAX_CORES};
use natsim::trace::{profile, read_trace, trace_paths, validate, TraceSink};

#[derive(Parser)]
#[command(name = "natsim", version, about = "Native simulation of OpenMP-style workloads on a virtual many-core platform")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a workload for one or more core counts.
    Run(RunArgs),
    /// Print the function profile of a trace.
    Report {
        /// Trace master file (`x.trace`) or its stem (`x`).
        trace: PathBuf,
    },
    /// Check a trace for nesting, ordering and conservation errors.
    Inspect { trace: PathBuf },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Workload source (.nsc).
    #[arg(long)]
    workload: PathBuf,
    /// Target platform description. Defaults to the built-in 16-core platform.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-block instruction counts overriding the characterization.
    #[arg(long)]
    block_db: Option<PathBuf>,
    /// Instruction cost per construct.
    #[arg(long)]
    cost_table: Option<PathBuf>,
    /// Comma-separated core counts. Defaults to the config's core count.
    #[arg(long, value_delimiter = ',')]
    cores: Vec<u32>,
    /// Output prefix; each run writes `<prefix>.c<N>.summary` and
    /// `<prefix>.c<N>.trace`. Defaults to the workload path without extension.
    #[arg(long)]
    trace_prefix: Option<PathBuf>,
    #[arg(long)]
    no_trace: bool,
    /// Trace only these functions (plus `main`, loop bodies and
    /// pseudo-functions).
    #[arg(long, value_delimiter = ',')]
    filter_functions: Vec<String>,
    /// Write trace events to disk whenever this many bytes are buffered.
    #[arg(long)]
    flush_bytes: Option<usize>,
    /// Run the core counts of the sweep on separate host threads.
    #[arg(long)]
    parallel_sweep: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Report { trace } => cmd_report(&trace),
        Command::Inspect { trace } => cmd_inspect(&trace),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

struct Loaded {
    name: String,
    program: WorkloadProgram,
    records: Vec<BasicBlockRecord>,
    config: TargetConfig,
    filter: Option<Vec<u32>>,
    prefix: PathBuf,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load(args: &RunArgs) -> Result<Loaded> {
    let source = read(&args.workload)?;
    let program = compile(&source).with_context(|| format!("{}", args.workload.display()))?;
    let config = match &args.config {
        Some(p) => TargetConfig::parse(&read(p)?).with_context(|| format!("{}", p.display()))?,
        None => TargetConfig::default(),
    };
    let table = match &args.cost_table {
        Some(p) => CostTable::parse(&read(p)?).with_context(|| format!("{}", p.display()))?,
        None => CostTable::default(),
    };
    let mut records = characterize(program.cfg(), &table);
    if let Some(p) = &args.block_db {
        let overrides = load_block_db(p, records.len()).with_context(|| format!("{}", p.display()))?;
        records = apply_overrides(&records, &overrides);
    }
    let filter = if args.filter_functions.is_empty() {
        None
    } else {
        Some(filter_ids(program.cfg(), &args.filter_functions)?)
    };
    let name = args.workload.file_name().map_or_else(|| "workload".into(), |n| n.to_string_lossy().into_owned());
    let prefix = args.trace_prefix.clone().unwrap_or_else(|| args.workload.with_extension(""));
    Ok(Loaded { name, program, records, config, filter, prefix })
}

struct Outcome {
    cores: u32,
    result: SimulationResult,
    host: Duration,
    trace: Option<(PathBuf, u64)>,
    summary: PathBuf,
}

fn output_path(prefix: &Path, cores: u32, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(format!(".c{cores}.{ext}"));
    PathBuf::from(s)
}

fn simulate(l: &Loaded, cores: u32, args: &RunArgs) -> Result<Outcome> {
    let config = l.config.clone().with_cores(cores);
    let start = Instant::now();
    let (result, trace) = if args.no_trace {
        (run(&l.program, &l.records, &config, None)?, None)
    } else {
        let path = output_path(&l.prefix, cores, "trace");
        let defs = trace_definitions(l.program.cfg(), &config);
        let mut sink = TraceSink::to_files(defs, &path, args.flush_bytes)?;
        if let Some(ids) = &l.filter {
            sink = sink.with_filter(ids.iter().copied());
        }
        let result = run(&l.program, &l.records, &config, Some(&mut sink))?;
        let events = sink.recorded();
        sink.finish()?;
        (result, Some((path, events)))
    };
    let host = start.elapsed();
    let summary = output_path(&l.prefix, cores, "summary");
    fs::write(&summary, summary_text(l, &config, &result, trace.as_ref()))
        .with_context(|| format!("cannot write {}", summary.display()))?;
    Ok(Outcome { cores, result, host, trace, summary })
}

fn ms(cycles: u64, clock_hz: u64) -> String {
    let ns = cycles_to_ns(cycles, clock_hz);
    format!("{}.{:06}", ns / 1_000_000, ns % 1_000_000)
}

/// Machine-readable `key = value` summary. Host timing is left out so that
/// identical runs produce identical files.
fn summary_text(l: &Loaded, config: &TargetConfig, r: &SimulationResult, trace: Option<&(PathBuf, u64)>) -> String {
    let mut s = String::new();
    let total = r.total_cycles();
    let sum = |f: fn(&natsim::kernel::CoreSummary) -> u64| r.cores.iter().map(f).sum::<u64>();
    let outputs: Vec<String> = r.outputs.iter().map(i32::to_string).collect();
    let _ = writeln!(s, "workload = {}", l.name);
    let _ = writeln!(s, "cores = {}", config.core_count);
    let _ = writeln!(s, "clock_hz = {}", config.clock_hz);
    let _ = writeln!(s, "target_cycles = {total}");
    let _ = writeln!(s, "target_ms = {}", ms(total, config.clock_hz));
    let _ = writeln!(s, "exit_code = {}", r.exit_code);
    let _ = writeln!(s, "outputs = {}", outputs.join(" "));
    let _ = writeln!(s, "serial_fraction = {:.6}", r.serial_fraction());
    let _ = writeln!(s, "parallel_regions = {}", r.regions.len());
    let _ = writeln!(s, "race_warnings = {}", r.races.len());
    let _ = writeln!(s, "busy_cycles = {}", sum(|c| c.counters.busy));
    let _ = writeln!(s, "wait_cycles = {}", sum(|c| c.counters.wait));
    let _ = writeln!(s, "idle_cycles = {}", sum(|c| c.counters.idle));
    let _ = writeln!(s, "overhead_cycles = {}", sum(|c| c.counters.overhead));
    let _ = writeln!(s, "icache_accesses = {}", sum(|c| c.icache.accesses));
    let _ = writeln!(s, "icache_misses = {}", sum(|c| c.icache.misses));
    let _ = writeln!(s, "dcache_accesses = {}", sum(|c| c.dcache.accesses));
    let _ = writeln!(s, "dcache_misses = {}", sum(|c| c.dcache.misses));
    match trace {
        Some((p, n)) => {
            let _ = writeln!(s, "trace = {}", p.display());
            let _ = writeln!(s, "trace_events = {n}");
        }
        None => {
            let _ = writeln!(s, "trace = none");
        }
    }
    for c in &r.cores {
        let k = &c.counters;
        let util = if total == 0 { 0.0 } else { k.busy as f64 / total as f64 };
        let _ = writeln!(s, "core.{}.clock = {}", c.core, c.clock);
        let _ = writeln!(s, "core.{}.busy_cycles = {}", c.core, k.busy);
        let _ = writeln!(s, "core.{}.wait_cycles = {}", c.core, k.wait);
        let _ = writeln!(s, "core.{}.idle_cycles = {}", c.core, k.idle);
        let _ = writeln!(s, "core.{}.overhead_cycles = {}", c.core, k.overhead);
        let _ = writeln!(s, "core.{}.utilization = {util:.6}", c.core);
        let _ = writeln!(s, "core.{}.instructions = {}", c.core, k.instructions);
        let _ = writeln!(s, "core.{}.icache_misses = {}", c.core, c.icache.misses);
        let _ = writeln!(s, "core.{}.dcache_misses = {}", c.core, c.dcache.misses);
    }
    s
}

fn print_outcome(o: &Outcome, clock_hz: u64, base: Option<u64>) {
    let r = &o.result;
    let total = r.total_cycles();
    println!("== {} cores ==", o.cores);
    print!("target time: {total} cycles ({} ms)", ms(total, clock_hz));
    if let Some(b) = base.filter(|_| total > 0) {
        print!(", speedup {:.2}", b as f64 / total as f64);
    }
    println!();
    println!("host time:   {:.3} ms", o.host.as_secs_f64() * 1e3);
    if !r.outputs.is_empty() {
        let out: Vec<String> = r.outputs.iter().map(i32::to_string).collect();
        println!("output:      {}", out.join(" "));
    }
    println!("exit code:   {}", r.exit_code);
    println!("serial:      {:.2}%", 100.0 * r.serial_fraction());
    println!("{:<5} {:>8} {:>8} {:>8} {:>8} {:>12} {:>12}", "core", "busy", "wait", "idle", "ovhd", "I$ miss", "D$ miss");
    for c in &r.cores {
        let pct = |v: u64| if total == 0 { 0.0 } else { 100.0 * v as f64 / total as f64 };
        let k = &c.counters;
        let rate = |m: u64, a: u64| if a == 0 { 0.0 } else { 100.0 * m as f64 / a as f64 };
        println!(
            "{:<5} {:>7.2}% {:>7.2}% {:>7.2}% {:>7.2}% {:>11.2}% {:>11.2}%",
            c.core,
            pct(k.busy),
            pct(k.wait),
            pct(k.idle),
            pct(k.overhead),
            rate(c.icache.misses, c.icache.accesses),
            rate(c.dcache.misses, c.dcache.accesses)
        );
    }
    for w in &r.races {
        eprintln!("warning: {w}");
    }
    match &o.trace {
        Some((p, n)) => println!("trace:       {} ({n} events)", p.display()),
        None => println!("trace:       disabled"),
    }
    println!("summary:     {}", o.summary.display());
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode> {
    let l = load(args)?;
    let sweep = if args.cores.is_empty() { vec![l.config.core_count] } else { args.cores.clone() };
    if let Some(&bad) = sweep.iter().find(|&&n| n == 0 || n > MAX_CORES) {
        bail!("core count {bad} is not between 1 and {MAX_CORES}");
    }
    if let Some(dir) = l.prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let outcomes: Vec<Outcome> = if args.parallel_sweep {
        std::thread::scope(|s| {
            let l = &l;
            let handles: Vec<_> = sweep.iter().map(|&n| s.spawn(move || simulate(l, n, args))).collect();
            handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect::<Result<_>>()
        })?
    } else {
        sweep.iter().map(|&n| simulate(&l, n, args)).collect::<Result<_>>()?
    };
    println!("workload: {}", args.workload.display());
    let base = outcomes.iter().find(|o| o.cores == 1).map(|o| o.result.total_cycles());
    for o in &outcomes {
        print_outcome(o, l.config.clock_hz, base);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(path: &Path) -> Result<ExitCode> {
    let (events, defs) = read_trace(path)?;
    let report = profile(&events, &defs)?;
    let (master, _) = trace_paths(path);
    println!("trace: {} ({} events, {} cores)", master.display(), events.len(), defs.processes.len());
    println!("total: {} cycles ({} ms)", report.total_time, ms(report.total_time, defs.resolution));
    println!();
    print!("{report}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_inspect(path: &Path) -> Result<ExitCode> {
    let (events, defs) = read_trace(path)?;
    match validate(&events, &defs) {
        Ok(s) => {
            println!("PASS: {} events on {} cores", s.events, s.cores.len());
            Ok(ExitCode::SUCCESS)
        }
        Err(v) => {
            println!("FAIL: {v}");
            Ok(ExitCode::FAILURE)
        }
    }
}
