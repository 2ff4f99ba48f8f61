use std::collections::{BTreeMap, HashSet};
use std::fmt;

use super::{
    is_pseudo, EventKind, TraceDefinitions, TraceError, TraceEvent, CNTR_BUSY, CNTR_IDLE, CNTR_OVERHEAD,
    CNTR_SHARED_EXTRA, CNTR_WAIT, COUNTERS, IDLE, OVERHEAD, WAIT,
};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoreShare {
    pub core: u32,
    pub calls: u64,
    pub inclusive: u64,
    pub exclusive: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionProfile {
    pub id: u32,
    pub name: String,
    pub calls: u64,
    pub inclusive: u64,
    pub exclusive: u64,
    /// Only cores that called the function, ascending core id.
    pub per_core: Vec<CoreShare>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoreProfile {
    pub core: u32,
    /// Timestamp of the core's last event.
    pub final_time: u64,
    /// Exclusive time of program functions.
    pub busy: u64,
    pub wait: u64,
    pub idle: u64,
    pub overhead: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProfileReport {
    /// Program functions by exclusive time, descending.
    pub functions: Vec<FunctionProfile>,
    /// Idle, wait and overhead pseudo-functions.
    pub pseudo: Vec<FunctionProfile>,
    pub cores: Vec<CoreProfile>,
    /// Latest timestamp over all cores.
    pub total_time: u64,
}

impl ProfileReport {
    pub fn function(&self, name: &str) -> Option<&FunctionProfile> {
        self.functions.iter().chain(&self.pseudo).find(|f| f.name == name)
    }

    /// Exclusive time of `f` as a fraction of the total target time.
    pub fn share_of_total(&self, f: &FunctionProfile) -> f64 {
        if self.total_time == 0 {
            0.0
        } else {
            f.exclusive as f64 / self.total_time as f64
        }
    }

    /// Exclusive time of `f` as a fraction of the summed time of all cores.
    pub fn share_of_cores(&self, f: &FunctionProfile) -> f64 {
        let all: u64 = self.cores.iter().map(|c| c.final_time).sum();
        if all == 0 {
            0.0
        } else {
            f.exclusive as f64 / all as f64
        }
    }
}

struct Frame {
    func: u32,
    enter: u64,
    children: u64,
}

/// Inclusive and exclusive time per function, aggregated over calls and
/// cores. Pseudo-functions count as children of the function they are
/// nested in.
pub fn profile(events: &[TraceEvent], defs: &TraceDefinitions) -> Result<ProfileReport, TraceError> {
    let mut acc: BTreeMap<u32, BTreeMap<u32, CoreShare>> = BTreeMap::new();
    let mut cores: BTreeMap<u32, CoreProfile> = BTreeMap::new();
    let mut stacks: BTreeMap<u32, Vec<Frame>> = BTreeMap::new();
    for ev in events {
        let core = cores.entry(ev.core).or_insert_with(|| CoreProfile { core: ev.core, ..Default::default() });
        core.final_time = core.final_time.max(ev.timestamp);
        let stack = stacks.entry(ev.core).or_default();
        match ev.kind {
            EventKind::Enter(f) => stack.push(Frame { func: f, enter: ev.timestamp, children: 0 }),
            EventKind::Leave(f) => {
                let frame = match stack.pop() {
                    Some(fr) if fr.func == f => fr,
                    _ => {
                        return Err(TraceError::Nesting { core: ev.core, msg: format!("unmatched leave of function {f}") })
                    }
                };
                let inclusive = ev.timestamp.checked_sub(frame.enter).ok_or(TraceError::OutOfOrder {
                    core: ev.core,
                    timestamp: ev.timestamp,
                    last: frame.enter,
                })?;
                let exclusive = inclusive.saturating_sub(frame.children);
                if let Some(parent) = stack.last_mut() {
                    parent.children += inclusive;
                }
                let share = acc.entry(f).or_default().entry(ev.core).or_insert_with(|| CoreShare { core: ev.core, ..Default::default() });
                share.calls += 1;
                share.inclusive += inclusive;
                share.exclusive += exclusive;
                let name = defs.function_name(f).ok_or(TraceError::Undefined { what: "function", id: f })?;
                match name {
                    IDLE => core.idle += inclusive,
                    WAIT => core.wait += inclusive,
                    OVERHEAD => core.overhead += inclusive,
                    n if !is_pseudo(n) => core.busy += exclusive,
                    _ => {}
                }
            }
            EventKind::Counter(..) | EventKind::Block(_) => {}
        }
    }
    for (core, stack) in &stacks {
        if let Some(fr) = stack.last() {
            return Err(TraceError::Nesting { core: *core, msg: format!("function {} never left", fr.func) });
        }
    }
    let mut functions = Vec::new();
    let mut pseudo = Vec::new();
    for (id, per) in acc {
        let name = defs.function_name(id).unwrap_or_default().to_string();
        let per_core: Vec<CoreShare> = per.into_values().collect();
        let p = FunctionProfile {
            id,
            calls: per_core.iter().map(|c| c.calls).sum(),
            inclusive: per_core.iter().map(|c| c.inclusive).sum(),
            exclusive: per_core.iter().map(|c| c.exclusive).sum(),
            per_core,
            name,
        };
        if is_pseudo(&p.name) {
            pseudo.push(p);
        } else {
            functions.push(p);
        }
    }
    for list in [&mut functions, &mut pseudo] {
        list.sort_by(|a, b| b.exclusive.cmp(&a.exclusive).then(a.id.cmp(&b.id)));
    }
    let cores: Vec<CoreProfile> = cores.into_values().collect();
    let total_time = cores.iter().map(|c| c.final_time).max().unwrap_or(0);
    Ok(ProfileReport { functions, pseudo, cores, total_time })
}

impl fmt::Display for ProfileReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // `wall` relates exclusive time to the elapsed target time and can
        // exceed 100% for code running on several cores; `cores` relates it
        // to the time of all cores together.
        writeln!(
            f,
            "{:<28} {:>8} {:>14} {:>14} {:>9} {:>7}",
            "function", "calls", "exclusive", "inclusive", "wall", "cores"
        )?;
        for p in self.functions.iter().chain(&self.pseudo) {
            writeln!(
                f,
                "{:<28} {:>8} {:>14} {:>14} {:>8.2}% {:>6.2}%",
                p.name,
                p.calls,
                p.exclusive,
                p.inclusive,
                100.0 * self.share_of_total(p),
                100.0 * self.share_of_cores(p)
            )?;
        }
        if self.cores.is_empty() {
            return Ok(());
        }
        writeln!(f)?;
        writeln!(f, "{:<6} {:>14} {:>7} {:>7} {:>7} {:>9}", "core", "final", "busy", "wait", "idle", "overhead")?;
        for c in &self.cores {
            let pct = |v: u64| if c.final_time == 0 { 0.0 } else { 100.0 * v as f64 / c.final_time as f64 };
            writeln!(
                f,
                "{:<6} {:>14} {:>6.2}% {:>6.2}% {:>6.2}% {:>8.2}%",
                c.core,
                c.final_time,
                pct(c.busy),
                pct(c.wait),
                pct(c.idle),
                pct(c.overhead)
            )?;
        }
        Ok(())
    }
}

/// First problem found by [`validate`]. `line` is the 1-based line in the
/// core's stream file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub core: u32,
    pub line: usize,
    pub msg: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "core {} line {}: {}", self.core, self.line, self.msg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationSummary {
    pub events: usize,
    /// `(core, final timestamp)` of every core with events.
    pub cores: Vec<(u32, u64)>,
}

#[derive(Default)]
struct CoreCheck {
    line: usize,
    last: u64,
    stack: Vec<Frame>,
    /// End of the last top-level call.
    covered: u64,
    real_exclusive: u64,
    pseudo: [u64; 3],
    block_cycles: u64,
    snapshot_time: Option<u64>,
    snapshot: [Option<u64>; COUNTERS.len()],
}

/// Checks per-core monotonicity, nesting and defined ids, that top-level
/// calls tile `[0, final]` without gaps, and that counter snapshots agree
/// with the event stream: `busy + wait + idle + overhead` equals the
/// snapshot time, and at the end busy time equals the exclusive time of
/// program functions and the sum of block cycles plus shared-memory extras.
pub fn validate(events: &[TraceEvent], defs: &TraceDefinitions) -> Result<ValidationSummary, Violation> {
    let funcs: HashSet<u32> = defs.functions.iter().map(|d| d.id).collect();
    let procs: HashSet<u32> = defs.processes.iter().map(|d| d.id).collect();
    // Counter ids by position in COUNTERS, when the trace defines them.
    let cid: Vec<Option<u32>> = COUNTERS.iter().map(|n| defs.counter_id(n)).collect();
    let mut checks: BTreeMap<u32, CoreCheck> = BTreeMap::new();
    for ev in events {
        let c = checks.entry(ev.core).or_default();
        c.line += 1;
        let line = c.line;
        let v = |msg: String| Violation { core: ev.core, line, msg };
        if !procs.contains(&ev.core) {
            return Err(v("undefined process".into()));
        }
        if ev.timestamp < c.last {
            return Err(v(format!("timestamp {} is earlier than the previous event at {}", ev.timestamp, c.last)));
        }
        c.last = ev.timestamp;
        if c.snapshot_time.is_some_and(|t| t != ev.timestamp) {
            check_snapshot(c, &cid).map_err(|m| Violation { core: ev.core, line: line - 1, msg: m })?;
            c.snapshot_time = None;
        }
        match ev.kind {
            EventKind::Enter(f) => {
                if !funcs.contains(&f) {
                    return Err(v(format!("undefined function {f}")));
                }
                if c.stack.is_empty() && ev.timestamp != c.covered {
                    return Err(v(format!(
                        "{} unaccounted cycles between {} and {}",
                        ev.timestamp - c.covered,
                        c.covered,
                        ev.timestamp
                    )));
                }
                c.stack.push(Frame { func: f, enter: ev.timestamp, children: 0 });
            }
            EventKind::Leave(f) => {
                let frame = match c.stack.pop() {
                    Some(fr) if fr.func == f => fr,
                    Some(fr) => return Err(v(format!("leave of function {f} while function {} is open", fr.func))),
                    None => return Err(v(format!("leave of function {f} without enter"))),
                };
                let inclusive = ev.timestamp - frame.enter;
                if let Some(parent) = c.stack.last_mut() {
                    parent.children += inclusive;
                } else {
                    c.covered = ev.timestamp;
                }
                let name = defs.function_name(f).unwrap_or_default();
                match name {
                    IDLE => c.pseudo[0] += inclusive,
                    WAIT => c.pseudo[1] += inclusive,
                    OVERHEAD => c.pseudo[2] += inclusive,
                    n if !is_pseudo(n) => c.real_exclusive += inclusive - frame.children,
                    _ => {}
                }
            }
            EventKind::Counter(id, value) => {
                let Some(pos) = cid.iter().position(|x| *x == Some(id)) else {
                    if defs.counters.iter().any(|d| d.id == id) {
                        continue;
                    }
                    return Err(v(format!("undefined counter {id}")));
                };
                c.snapshot_time = Some(ev.timestamp);
                c.snapshot[pos] = Some(value);
            }
            EventKind::Block(b) => c.block_cycles += b.cycles,
        }
    }
    let mut cores = Vec::new();
    for (core, c) in &mut checks {
        let line = c.line;
        let v = |msg: String| Violation { core: *core, line, msg };
        if let Some(fr) = c.stack.last() {
            return Err(v(format!("function {} never left", fr.func)));
        }
        if c.covered != c.last {
            return Err(v(format!("{} cycles after the last call are unaccounted", c.last - c.covered)));
        }
        if c.snapshot_time.is_some() {
            check_snapshot(c, &cid).map_err(v)?;
            let busy = c.snapshot[CNTR_BUSY as usize];
            if c.snapshot_time == Some(c.last) && busy.is_some() {
                let busy = busy.unwrap_or(0);
                if busy != c.real_exclusive {
                    return Err(v(format!(
                        "busy counter {busy} differs from exclusive function time {}",
                        c.real_exclusive
                    )));
                }
                for (slot, cntr, name) in [(0, CNTR_IDLE, IDLE), (1, CNTR_WAIT, WAIT), (2, CNTR_OVERHEAD, OVERHEAD)] {
                    let counted = c.snapshot[cntr as usize].unwrap_or(0);
                    if counted != c.pseudo[slot] {
                        return Err(v(format!("{name} intervals total {} but counter says {counted}", c.pseudo[slot])));
                    }
                }
                let extra = c.snapshot[CNTR_SHARED_EXTRA as usize].unwrap_or(0);
                if c.block_cycles > 0 && c.block_cycles + extra != busy {
                    return Err(v(format!(
                        "block cycles {} plus shared extras {extra} differ from busy counter {busy}",
                        c.block_cycles
                    )));
                }
            }
        }
        cores.push((*core, c.last));
    }
    Ok(ValidationSummary { events: events.len(), cores })
}

fn check_snapshot(c: &mut CoreCheck, cid: &[Option<u32>]) -> Result<(), String> {
    let t = c.snapshot_time.expect("snapshot present");
    let parts = [CNTR_BUSY, CNTR_WAIT, CNTR_IDLE, CNTR_OVERHEAD].map(|i| c.snapshot[i as usize]);
    let defined = [CNTR_BUSY, CNTR_WAIT, CNTR_IDLE, CNTR_OVERHEAD].iter().all(|&i| cid[i as usize].is_some());
    if defined && parts.iter().all(Option::is_some) {
        let sum: u64 = parts.iter().flatten().sum();
        if sum != t {
            return Err(format!("busy+wait+idle+overhead = {sum} at time {t}"));
        }
    }
    Ok(())
}
