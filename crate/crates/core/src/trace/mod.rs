//! Post-mortem tracing: events recorded at zero virtual cost, an
//! OTF-style multi-stream ASCII file format, profiles and validation.
//!
//! Master file `<name>.trace`:
//!
//! ```text
//! NSTRACE 1
//! RES <ticks_per_sec>
//! PROC <id> <name>
//! FUNC <id> <name>
//! CNTR <id> <name>
//! ```
//!
//! One stream per process, `<name>.<id>.events`:
//!
//! ```text
//! E <ts> <func>
//! L <ts> <func>
//! C <ts> <counter> <value>
//! B <ts> <block> <instrs> <icache_misses> <dcache_misses> <cycles>
//! ```

mod format;
mod profile;
mod sink;

use std::path::PathBuf;

use thiserror::Error;

pub use format::{parse_trace, read_trace, render_trace, stream_path, trace_paths, write_trace, RenderedTrace};
pub use profile::{profile, validate, CoreProfile, FunctionProfile, ProfileReport, ValidationSummary, Violation};
pub use sink::TraceSink;

/// Function-table entries that stand for time a core spent outside
/// program code.
pub const IDLE: &str = "<idle>";
pub const WAIT: &str = "<wait>";
pub const OVERHEAD: &str = "<overhead>";

pub fn is_pseudo(name: &str) -> bool {
    name.starts_with('<') && name.ends_with('>')
}

/// Counter table, in id order. Values are cumulative per core.
pub const COUNTERS: [&str; 10] = [
    "busy_cycles",
    "wait_cycles",
    "idle_cycles",
    "overhead_cycles",
    "icache_accesses",
    "icache_misses",
    "dcache_accesses",
    "dcache_misses",
    "shared_accesses",
    "shared_extra_cycles",
];

pub const CNTR_BUSY: u32 = 0;
pub const CNTR_WAIT: u32 = 1;
pub const CNTR_IDLE: u32 = 2;
pub const CNTR_OVERHEAD: u32 = 3;
pub const CNTR_SHARED_EXTRA: u32 = 9;

/// Per-execution counters of one dynamic basic block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockExec {
    pub block: u32,
    pub instr_count: u64,
    pub ic_misses: u64,
    pub dc_misses: u64,
    pub cycles: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Enter(u32),
    Leave(u32),
    Counter(u32, u64),
    Block(BlockExec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub timestamp: u64,
    pub core: u32,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Definition {
    pub id: u32,
    pub name: String,
}

impl Definition {
    pub fn new(id: u32, name: impl Into<String>) -> Self {
        Self { id, name: name.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TraceDefinitions {
    /// Timestamp ticks per second.
    pub resolution: u64,
    pub processes: Vec<Definition>,
    pub functions: Vec<Definition>,
    pub counters: Vec<Definition>,
}

impl TraceDefinitions {
    pub fn function_name(&self, id: u32) -> Option<&str> {
        self.functions.iter().find(|d| d.id == id).map(|d| d.name.as_str())
    }

    pub fn function_id(&self, name: &str) -> Option<u32> {
        self.functions.iter().find(|d| d.name == name).map(|d| d.id)
    }

    pub fn counter_id(&self, name: &str) -> Option<u32> {
        self.counters.iter().find(|d| d.name == name).map(|d| d.id)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("{file}:{line}: {msg}")]
    Malformed { file: String, line: usize, msg: String },
    #[error("{file}: truncated (missing final newline)")]
    Truncated { file: String },
    #[error("core {core}: timestamp {timestamp} is earlier than previous event at {last}")]
    OutOfOrder { core: u32, timestamp: u64, last: u64 },
    #[error("core {core}: {msg}")]
    Nesting { core: u32, msg: String },
    #[error("event references undefined {what} {id}")]
    Undefined { what: &'static str, id: u32 },
}

/// Stable-sorts events into canonical order: grouped by core, ascending
/// core id, record order preserved within a core.
pub fn canonical_order(events: &mut [TraceEvent]) {
    events.sort_by_key(|e| e.core);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pseudo_names() {
        assert!(is_pseudo(IDLE) && is_pseudo(WAIT) && is_pseudo(OVERHEAD));
        assert!(!is_pseudo("main") && !is_pseudo("main._omp_fn.0"));
        assert_eq!(COUNTERS[CNTR_SHARED_EXTRA as usize], "shared_extra_cycles");
        assert_eq!(COUNTERS[CNTR_OVERHEAD as usize], "overhead_cycles");
    }
}
