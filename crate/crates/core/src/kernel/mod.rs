//! Host-speed interpretation of a workload with per-core virtual clocks,
//! and a deterministic model of the OpenMP runtime.
//!
//! Sequential code runs on core 0. A `parallel for` forks every core:
//! iterations are split into contiguous chunks of `ceil(N/P)`, each core
//! executes its chunk, and core 0 resumes at the join, which is the latest
//! chunk end. Chunks are interpreted one core after another, so program
//! data never depends on timing; the recorded per-core action streams are
//! then replayed in virtual-time order to resolve critical-section
//! contention.

mod layout;
mod machine;
mod sched;

use thiserror::Error;

pub use layout::{MemoryLayout, VarLoc, PRIVATE_BASE, PRIVATE_STRIDE, SHARED_BASE, WORD_BYTES};
pub use sched::{step_scheduler, Deadlock, VirtualLock};

use crate::cache::{CacheState, CacheStats};
use crate::frontend::{BasicBlockRecord, Cfg, LockId, WorkloadProgram};
use crate::target::{block_time_cycles, scaled_cycles, TargetConfig};
use crate::trace::{Definition, TraceDefinitions, TraceError, TraceSink, COUNTERS, IDLE, OVERHEAD, WAIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoreStatus {
    Running,
    Waiting(LockId),
    Idle,
}

/// Cumulative per-core accounting. `busy + wait + idle + overhead` always
/// equals the core's clock.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CoreCounters {
    /// Block execution time, including shared-memory extra cycles.
    pub busy: u64,
    pub wait: u64,
    pub idle: u64,
    pub overhead: u64,
    pub shared_accesses: u64,
    pub shared_extra_cycles: u64,
    pub blocks: u64,
    pub instructions: u64,
}

#[derive(Debug, Clone)]
pub struct CoreState {
    pub core_id: u32,
    pub clock: u64,
    /// `(trace function id, entry time)`, innermost last.
    pub call_stack: Vec<(u32, u64)>,
    pub icache: CacheState,
    pub dcache: CacheState,
    pub status: CoreStatus,
    pub counters: CoreCounters,
}

/// One data access of a block: target address and whether it is in
/// shared memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataAccess {
    pub addr: u64,
    pub shared: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockExecutionCounters {
    pub instr_count: u64,
    pub ic_misses: u64,
    pub dc_misses: u64,
    /// `round(C*Tm + Timiss*ICmisses + Tdmiss*DCmisses)`.
    pub block_time_cycles: u64,
    pub shared_accesses: u64,
    /// `round(shared_accesses * shared_mem_extra_cycles)`.
    pub shared_extra_cycles: u64,
}

impl BlockExecutionCounters {
    pub fn compute(config: &TargetConfig, instr_count: u64, ic_misses: u64, dc_misses: u64, shared: u64) -> Self {
        Self {
            instr_count,
            ic_misses,
            dc_misses,
            block_time_cycles: block_time_cycles(config, instr_count, ic_misses, dc_misses),
            shared_accesses: shared,
            shared_extra_cycles: scaled_cycles(&config.shared_mem_extra_cycles, shared),
        }
    }

    pub fn total_cycles(&self) -> u64 {
        self.block_time_cycles + self.shared_extra_cycles
    }
}

impl CoreState {
    pub fn new(core_id: u32, config: &TargetConfig) -> Self {
        Self {
            core_id,
            clock: 0,
            call_stack: Vec::new(),
            icache: CacheState::new(config.icache),
            dcache: CacheState::new(config.dcache),
            status: CoreStatus::Idle,
            counters: CoreCounters::default(),
        }
    }

    /// Executes one block: fetches its code through the instruction cache,
    /// performs `accesses` on the data cache and advances the clock by the
    /// block time plus shared-memory extras.
    pub fn advance_block(
        &mut self,
        record: &BasicBlockRecord,
        accesses: &[DataAccess],
        config: &TargetConfig,
    ) -> BlockExecutionCounters {
        let icm = self.icache.block_fetch(record);
        let dcm = accesses.iter().filter(|a| !self.dcache.access(a.addr).hit).count() as u64;
        let shared = accesses.iter().filter(|a| a.shared).count() as u64;
        let c = BlockExecutionCounters::compute(config, record.instr_count, icm, dcm, shared);
        self.clock += c.total_cycles();
        self.counters.busy += c.total_cycles();
        self.counters.blocks += 1;
        self.counters.instructions += c.instr_count;
        self.counters.shared_accesses += shared;
        self.counters.shared_extra_cycles += c.shared_extra_cycles;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreSummary {
    pub core: u32,
    /// Final virtual time in cycles.
    pub clock: u64,
    pub counters: CoreCounters,
    pub icache: CacheStats,
    pub dcache: CacheStats,
}

/// Time a core held a critical-section lock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LockInterval {
    pub lock: LockId,
    pub core: u32,
    pub acquire: u64,
    pub release: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionStats {
    pub region: u32,
    pub line: u32,
    pub iterations: u64,
    pub fork: u64,
    /// Time core 0 resumes, including join overhead.
    pub join: u64,
}

/// Unsynchronized access to shared data from several cores of one
/// parallel loop, at least one of them writing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaceWarning {
    pub region_line: u32,
    pub variable: String,
    pub cores: Vec<u32>,
}

impl std::fmt::Display for RaceWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "parallel loop at line {}: `{}` written and accessed by cores {:?} outside a critical section",
            self.region_line, self.variable, self.cores
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulationResult {
    pub cores: Vec<CoreSummary>,
    /// Values passed to `print`, in program order.
    pub outputs: Vec<i32>,
    /// Return value of the entry function.
    pub exit_code: i32,
    pub lock_intervals: Vec<LockInterval>,
    pub regions: Vec<RegionStats>,
    pub races: Vec<RaceWarning>,
}

impl SimulationResult {
    /// Target execution time: the final clock of core 0.
    pub fn total_cycles(&self) -> u64 {
        self.cores[0].clock
    }

    /// Fraction of target time spent outside parallel regions.
    pub fn serial_fraction(&self) -> f64 {
        let total = self.total_cycles();
        if total == 0 {
            return 1.0;
        }
        let parallel: u64 = self.regions.iter().map(|r| r.join - r.fork).sum();
        (total - parallel) as f64 / total as f64
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("line {line}, virtual time {time}: {msg}")]
    Runtime { line: u32, time: u64, msg: String },
    #[error("deadlock at virtual time {time}: {graph}")]
    Deadlock { time: u64, graph: String },
    #[error("step limit of {limit} block executions exceeded")]
    StepLimit { limit: u64 },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("trace: {0}")]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Maximum number of dynamic block executions.
    pub max_steps: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { max_steps: 200_000_000 }
    }
}

/// Trace function ids: program functions first (by function id), then the
/// outlined parallel loop bodies, then the idle, wait and overhead
/// pseudo-functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceIds {
    pub region_base: u32,
    pub idle: u32,
    pub wait: u32,
    pub overhead: u32,
}

impl TraceIds {
    pub fn new(cfg: &Cfg) -> Self {
        let region_base = cfg.functions.len() as u32;
        let idle = region_base + cfg.regions.len() as u32;
        Self { region_base, idle, wait: idle + 1, overhead: idle + 2 }
    }
}

pub fn trace_definitions(cfg: &Cfg, config: &TargetConfig) -> TraceDefinitions {
    let ids = TraceIds::new(cfg);
    let mut functions: Vec<Definition> = cfg.functions.iter().map(|f| Definition::new(f.id, &f.name)).collect();
    functions.extend(cfg.regions.iter().map(|r| Definition::new(ids.region_base + r.id, &r.outlined_name)));
    functions.push(Definition::new(ids.idle, IDLE));
    functions.push(Definition::new(ids.wait, WAIT));
    functions.push(Definition::new(ids.overhead, OVERHEAD));
    TraceDefinitions {
        resolution: config.clock_hz,
        processes: (0..config.core_count).map(|k| Definition::new(k, format!("Core {k}"))).collect(),
        functions,
        counters: COUNTERS.iter().enumerate().map(|(i, n)| Definition::new(i as u32, *n)).collect(),
    }
}

/// Function ids kept when tracing only `names`. The entry function,
/// outlined loop bodies and pseudo-functions are always kept so that every
/// core's timeline stays fully covered.
pub fn filter_ids(cfg: &Cfg, names: &[String]) -> Result<Vec<u32>, KernelError> {
    let ids = TraceIds::new(cfg);
    let mut keep = vec![cfg.entry];
    keep.extend(cfg.regions.iter().map(|r| ids.region_base + r.id));
    keep.extend([ids.idle, ids.wait, ids.overhead]);
    for n in names {
        if let Some(f) = cfg.function(n) {
            keep.push(f.id);
        } else if let Some(r) = cfg.regions.iter().find(|r| &r.outlined_name == n) {
            keep.push(ids.region_base + r.id);
        } else {
            return Err(KernelError::Input(format!("unknown function `{n}` in filter list")));
        }
    }
    keep.sort_unstable();
    keep.dedup();
    Ok(keep)
}

/// Runs `program` on the platform described by `config`. Attaching a
/// trace sink never changes the result.
pub fn run(
    program: &WorkloadProgram,
    records: &[BasicBlockRecord],
    config: &TargetConfig,
    trace: Option<&mut TraceSink>,
) -> Result<SimulationResult, KernelError> {
    run_with(program, records, config, trace, RunOptions::default())
}

pub fn run_with(
    program: &WorkloadProgram,
    records: &[BasicBlockRecord],
    config: &TargetConfig,
    trace: Option<&mut TraceSink>,
    options: RunOptions,
) -> Result<SimulationResult, KernelError> {
    let cfg = program.cfg.as_ref().ok_or_else(|| KernelError::Input("program has no control-flow graph".into()))?;
    let config = config.clone().validate().map_err(|e| KernelError::Input(e.to_string()))?;
    if records.len() != cfg.blocks.len() {
        return Err(KernelError::Input(format!(
            "{} block records for {} blocks",
            records.len(),
            cfg.blocks.len()
        )));
    }
    if let Some(t) = &trace {
        if t.definitions().processes.len() != config.core_count as usize {
            return Err(KernelError::Input("trace definitions do not match the core count".into()));
        }
    }
    machine::Machine::new(cfg, records, &config, trace, options)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    fn record(instrs: u64) -> BasicBlockRecord {
        BasicBlockRecord { block_id: 0, instr_count: instrs, code_addr: 0x8000, code_len_bytes: instrs * 4 }
    }

    #[test]
    fn equation_substitution() {
        let config = TargetConfig {
            mean_instr_cycles: Ratio::from_integer(2),
            imiss_cycles: Ratio::from_integer(10),
            dmiss_cycles: Ratio::from_integer(20),
            ..TargetConfig::default()
        };
        assert_eq!(BlockExecutionCounters::compute(&config, 100, 3, 1, 0).block_time_cycles, 250);
        let unit = TargetConfig { mean_instr_cycles: Ratio::from_integer(1), ..config };
        assert_eq!(BlockExecutionCounters::compute(&unit, 50, 0, 0, 0).block_time_cycles, 50);
    }

    #[test]
    fn warm_icache_makes_second_execution_cheaper() {
        let config = TargetConfig::default();
        let mut core = CoreState::new(0, &config);
        let r = record(10);
        let first = core.advance_block(&r, &[], &config);
        let second = core.advance_block(&r, &[], &config);
        assert!(first.ic_misses >= 1);
        assert_eq!(second.ic_misses, 0);
        assert!(second.block_time_cycles < first.block_time_cycles);
        assert_eq!(core.clock, first.total_cycles() + second.total_cycles());
    }

    #[test]
    fn shared_accesses_add_extra_cycles() {
        let config = TargetConfig::default();
        let mut core = CoreState::new(0, &config);
        let acc = [DataAccess { addr: SHARED_BASE, shared: true }, DataAccess { addr: SHARED_BASE, shared: true }];
        let c = core.advance_block(&record(5), &acc, &config);
        assert_eq!(c.dc_misses, 1);
        assert_eq!(c.shared_extra_cycles, 4);
        assert_eq!(core.clock, c.block_time_cycles + 4);
    }
}
