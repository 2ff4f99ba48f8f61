use std::collections::{BTreeMap, HashMap};

use crate::frontend::ast::{AssignOp, BinOp};
use crate::frontend::{
    BasicBlockRecord, BlockId, Callee, Cfg, IrArg, IrExpr, IrStmt, IrStmtKind, LockId, Place, Placement,
    Terminator, VarId, VarKind,
};
use crate::target::TargetConfig;
use crate::trace::{BlockExec, EventKind, TraceEvent, TraceSink};

use super::layout::MemoryLayout;
use super::sched::{step_scheduler, VirtualLock};
use super::{
    BlockExecutionCounters, CoreState, CoreStatus, CoreSummary, KernelError, LockInterval, RaceWarning,
    RegionStats, RunOptions, SimulationResult, TraceIds,
};

/// Timeline effect of interpretation on one core.
#[derive(Debug, Clone, Copy)]
enum Action {
    Busy(u64),
    Enter(u32),
    Leave(u32),
    Block(BlockExec),
    Acquire(LockId),
    Release(LockId),
}

/// An array (or sub-array) bound to an array parameter.
#[derive(Debug, Clone, Copy)]
struct ArrayRef {
    placement: Placement,
    word: usize,
    /// Variable that owns the storage.
    origin: VarId,
    /// Leading dimensions of `origin` already indexed away.
    skip: usize,
}

#[derive(Debug, Clone, Copy)]
struct Target {
    placement: Placement,
    word: usize,
    origin: VarId,
}

struct OpenBlock {
    block: BlockId,
    ic_misses: u64,
    dc_misses: u64,
    shared: u64,
}

struct ActiveRegion {
    header: BlockId,
    var: VarId,
    chunk_end: i64,
}

#[derive(Default)]
struct RaceEntry {
    origin: VarId,
    writers: u64,
    accessors: u64,
}

enum Flow {
    Return(i32),
    Stopped,
}

pub(super) struct Machine<'a> {
    cfg: &'a Cfg,
    records: &'a [BasicBlockRecord],
    config: &'a TargetConfig,
    layout: MemoryLayout,
    shared: Vec<i32>,
    private: Vec<Vec<i32>>,
    cores: Vec<CoreState>,
    cur: usize,
    open: Vec<OpenBlock>,
    bindings: Vec<Vec<Option<ArrayRef>>>,
    /// Locks held by the interpreting core, innermost last.
    held: Vec<LockId>,
    active: Option<ActiveRegion>,
    /// Per-core action logs while a parallel region is interpreted.
    logs: Option<Vec<Vec<Action>>>,
    /// Virtual time of each core's log so far, for diagnostics.
    provisional: Vec<u64>,
    trace: Option<&'a mut TraceSink>,
    ids: TraceIds,
    locks: Vec<VirtualLock>,
    lock_intervals: Vec<LockInterval>,
    races: HashMap<usize, RaceEntry>,
    race_warnings: Vec<RaceWarning>,
    regions: Vec<RegionStats>,
    outputs: Vec<i32>,
    steps: u64,
    max_steps: u64,
}

impl<'a> Machine<'a> {
    pub(super) fn new(
        cfg: &'a Cfg,
        records: &'a [BasicBlockRecord],
        config: &'a TargetConfig,
        trace: Option<&'a mut TraceSink>,
        options: RunOptions,
    ) -> Result<Self, KernelError> {
        let layout = MemoryLayout::new(cfg).map_err(KernelError::Input)?;
        let p = config.core_count as usize;
        let mut shared = vec![0; layout.shared_words];
        for (id, v) in cfg.vars.iter().enumerate() {
            if v.kind == VarKind::Global && v.init != 0 {
                let loc = layout.loc(id as VarId).expect("globals have storage");
                shared[loc.word] = v.init;
            }
        }
        Ok(Self {
            cfg,
            records,
            config,
            private: vec![vec![0; layout.private_words]; p],
            shared,
            layout,
            cores: (0..p as u32).map(|k| CoreState::new(k, config)).collect(),
            cur: 0,
            open: Vec::new(),
            bindings: vec![vec![None; cfg.vars.len()]; p],
            held: Vec::new(),
            active: None,
            logs: None,
            provisional: vec![0; p],
            trace,
            ids: TraceIds::new(cfg),
            locks: vec![VirtualLock::default(); cfg.locks.len()],
            lock_intervals: Vec::new(),
            races: HashMap::new(),
            race_warnings: Vec::new(),
            regions: Vec::new(),
            outputs: Vec::new(),
            steps: 0,
            max_steps: options.max_steps,
        })
    }

    pub(super) fn run(mut self) -> Result<SimulationResult, KernelError> {
        let entry = &self.cfg.functions[self.cfg.entry as usize];
        self.cores[0].status = CoreStatus::Running;
        self.emit(Action::Enter(entry.id))?;
        let exit_code = match self.run_blocks(entry.entry, None, &[])? {
            Flow::Return(v) => v,
            Flow::Stopped => unreachable!("entry function stops only by returning"),
        };
        self.emit(Action::Leave(entry.id))?;
        self.cores[0].status = CoreStatus::Idle;
        for k in 0..self.cores.len() {
            self.snapshot(k)?;
        }
        let cores = self
            .cores
            .iter()
            .map(|c| CoreSummary {
                core: c.core_id,
                clock: c.clock,
                counters: c.counters,
                icache: c.icache.stats(),
                dcache: c.dcache.stats(),
            })
            .collect();
        Ok(SimulationResult {
            cores,
            outputs: self.outputs,
            exit_code,
            lock_intervals: self.lock_intervals,
            regions: self.regions,
            races: self.race_warnings,
        })
    }

    fn now(&self) -> u64 {
        if self.logs.is_some() {
            self.provisional[self.cur]
        } else {
            self.cores[self.cur].clock
        }
    }

    fn runtime(&self, line: u32, msg: impl Into<String>) -> KernelError {
        KernelError::Runtime { line, time: self.now(), msg: msg.into() }
    }

    fn tracing(&self) -> bool {
        self.trace.is_some()
    }

    fn record(&mut self, core: usize, kind: EventKind) -> Result<(), KernelError> {
        if let Some(t) = self.trace.as_deref_mut() {
            t.record(TraceEvent { timestamp: self.cores[core].clock, core: core as u32, kind })?;
        }
        Ok(())
    }

    // ---- timeline ----------------------------------------------------

    fn emit(&mut self, a: Action) -> Result<(), KernelError> {
        if let Some(logs) = &mut self.logs {
            if let Action::Busy(c) = a {
                self.provisional[self.cur] += c;
            }
            logs[self.cur].push(a);
            return Ok(());
        }
        match a {
            // Outside parallel regions only core 0 runs, so locks are free.
            Action::Acquire(l) => self.grant(0, l),
            Action::Release(l) => self.release(0, l),
            other => self.apply(0, other),
        }
    }

    fn apply(&mut self, k: usize, a: Action) -> Result<(), KernelError> {
        match a {
            Action::Busy(c) => {
                self.cores[k].clock += c;
                self.cores[k].counters.busy += c;
                Ok(())
            }
            Action::Enter(f) => {
                let t = self.cores[k].clock;
                self.cores[k].call_stack.push((f, t));
                self.record(k, EventKind::Enter(f))
            }
            Action::Leave(f) => {
                let top = self.cores[k].call_stack.pop();
                debug_assert_eq!(top.map(|(id, _)| id), Some(f));
                self.record(k, EventKind::Leave(f))
            }
            Action::Block(b) => self.record(k, EventKind::Block(b)),
            Action::Acquire(_) | Action::Release(_) => unreachable!("lock actions are applied by the scheduler"),
        }
    }

    /// Time outside program code, shown as a pseudo-function.
    fn pseudo(&mut self, k: usize, func: u32, len: u64) -> Result<(), KernelError> {
        if len == 0 {
            return Ok(());
        }
        self.record(k, EventKind::Enter(func))?;
        let c = &mut self.cores[k];
        c.clock += len;
        if func == self.ids.idle {
            c.counters.idle += len;
        } else {
            c.counters.overhead += len;
        }
        self.record(k, EventKind::Leave(func))
    }

    fn grant(&mut self, k: usize, l: LockId) -> Result<(), KernelError> {
        let t = self.cores[k].clock;
        let lock = &mut self.locks[l as usize];
        lock.holder = Some(k as u32);
        lock.acquired_at = t;
        Ok(())
    }

    fn release(&mut self, k: usize, l: LockId) -> Result<(), KernelError> {
        let t = self.cores[k].clock;
        let lock = &mut self.locks[l as usize];
        debug_assert_eq!(lock.holder, Some(k as u32));
        self.lock_intervals.push(LockInterval { lock: l, core: k as u32, acquire: lock.acquired_at, release: t });
        lock.holder = None;
        if let Some((arrival, w)) = lock.pop_waiter() {
            let w = w as usize;
            let c = &mut self.cores[w];
            c.counters.wait += t - arrival;
            c.clock = t;
            c.status = CoreStatus::Running;
            self.record(w, EventKind::Leave(self.ids.wait))?;
            self.grant(w, l)?;
        }
        Ok(())
    }

    fn acquire(&mut self, k: usize, l: LockId) -> Result<(), KernelError> {
        if self.locks[l as usize].holder.is_none() {
            return self.grant(k, l);
        }
        let t = self.cores[k].clock;
        self.locks[l as usize].wait_queue.push((t, k as u32));
        self.cores[k].status = CoreStatus::Waiting(l);
        self.record(k, EventKind::Enter(self.ids.wait))
    }

    fn snapshot(&mut self, k: usize) -> Result<(), KernelError> {
        if !self.tracing() {
            return Ok(());
        }
        let c = &self.cores[k];
        let (ic, dc, n) = (c.icache.stats(), c.dcache.stats(), c.counters);
        let values = [
            n.busy,
            n.wait,
            n.idle,
            n.overhead,
            ic.accesses,
            ic.misses,
            dc.accesses,
            dc.misses,
            n.shared_accesses,
            n.shared_extra_cycles,
        ];
        for (id, v) in values.into_iter().enumerate() {
            self.record(k, EventKind::Counter(id as u32, v))?;
        }
        Ok(())
    }

    // ---- blocks --------------------------------------------------------

    fn begin_block(&mut self, b: BlockId) {
        let ic_misses = self.cores[self.cur].icache.block_fetch(&self.records[b as usize]);
        self.open.push(OpenBlock { block: b, ic_misses, dc_misses: 0, shared: 0 });
    }

    fn finish_block(&mut self) -> Result<(), KernelError> {
        let ob = self.open.pop().expect("open block");
        let rec = &self.records[ob.block as usize];
        let c = BlockExecutionCounters::compute(self.config, rec.instr_count, ob.ic_misses, ob.dc_misses, ob.shared);
        let n = &mut self.cores[self.cur].counters;
        n.blocks += 1;
        n.instructions += c.instr_count;
        n.shared_accesses += c.shared_accesses;
        n.shared_extra_cycles += c.shared_extra_cycles;
        self.emit(Action::Busy(c.total_cycles()))?;
        if self.tracing() {
            self.emit(Action::Block(BlockExec {
                block: ob.block,
                instr_count: c.instr_count,
                ic_misses: c.ic_misses,
                dc_misses: c.dc_misses,
                cycles: c.block_time_cycles,
            }))?;
        }
        Ok(())
    }

    /// Executes blocks from `start` until a return, or until control
    /// reaches `stop`. `init` stores happen in the first block.
    fn run_blocks(&mut self, start: BlockId, stop: Option<BlockId>, init: &[(VarId, i32)]) -> Result<Flow, KernelError> {
        let cfg = self.cfg;
        let mut b = start;
        let mut first = true;
        loop {
            if stop == Some(b) {
                return Ok(Flow::Stopped);
            }
            self.steps += 1;
            if self.steps > self.max_steps {
                return Err(KernelError::StepLimit { limit: self.max_steps });
            }
            let block = &cfg.blocks[b as usize];
            self.begin_block(b);
            if first {
                for &(var, value) in init {
                    let t = self.var_target(var);
                    self.write(t, value, block.line);
                }
                first = false;
            }
            for s in &block.stmts {
                self.exec_stmt(s)?;
            }
            let line = block.term_line;
            match &block.term {
                Terminator::Jump { target, .. } => {
                    self.finish_block()?;
                    b = *target;
                }
                Terminator::Branch { cond, then_block, else_block } => {
                    let v = self.eval(cond, line)?;
                    let taken = match self.active.as_ref().map(|a| (a.header, a.var, a.chunk_end)) {
                        Some((header, var, end)) if header == b => {
                            let t = self.var_target(var);
                            (self.peek(t) as i64) < end
                        }
                        _ => v != 0,
                    };
                    self.finish_block()?;
                    b = if taken { *then_block } else { *else_block };
                }
                Terminator::Return(e) => {
                    let v = match e {
                        Some(e) => self.eval(e, line)?,
                        None => 0,
                    };
                    self.finish_block()?;
                    return Ok(Flow::Return(v));
                }
                Terminator::Acquire { lock, next } => {
                    self.finish_block()?;
                    if self.held.contains(lock) {
                        let name = cfg.locks[*lock as usize].display_name();
                        return Err(self.runtime(line, format!("recursive entry into {name}")));
                    }
                    self.held.push(*lock);
                    self.emit(Action::Acquire(*lock))?;
                    b = *next;
                }
                Terminator::Release { lock, next } => {
                    self.finish_block()?;
                    self.held.pop();
                    self.emit(Action::Release(*lock))?;
                    b = *next;
                }
                Terminator::Fork { region } => {
                    let r = &cfg.regions[*region as usize];
                    if self.active.is_some() {
                        return Err(self.runtime(r.line, "nested parallel region"));
                    }
                    let lo = self.eval(&r.lo, r.line)?;
                    let hi = self.eval(&r.hi, r.line)?;
                    self.finish_block()?;
                    self.parallel_for(*region, lo, hi)?;
                    b = r.exit;
                }
            }
        }
    }

    // ---- parallel regions ------------------------------------------------

    fn parallel_for(&mut self, region: u32, lo: i32, hi: i32) -> Result<(), KernelError> {
        let r = &self.cfg.regions[region as usize];
        let p = self.cores.len() as i64;
        let n = (hi as i64 - lo as i64 + r.inclusive as i64).max(0);
        let chunk = (n + p - 1) / p;
        let fork = self.cores[0].clock;
        let start = fork + self.config.fork_overhead_cycles;
        self.logs = Some(vec![Vec::new(); p as usize]);
        self.provisional = vec![start; p as usize];
        self.races.clear();
        let outlined = self.ids.region_base + region;
        for k in 0..p as usize {
            self.cur = k;
            self.held.clear();
            let a = lo as i64 + (k as i64 * chunk).min(n);
            let b = lo as i64 + ((k as i64 + 1) * chunk).min(n);
            self.active = Some(ActiveRegion { header: r.header, var: r.var, chunk_end: b });
            self.emit(Action::Enter(outlined))?;
            if a < b {
                self.run_blocks(r.header, Some(r.exit), &[(r.var, a as i32)])?;
            }
            self.emit(Action::Leave(outlined))?;
        }
        self.active = None;
        self.cur = 0;
        self.held.clear();
        let logs = self.logs.take().expect("region logs");
        self.collect_races(r.line);
        let join = self.replay(fork, logs)?;
        self.regions.push(RegionStats { region, line: r.line, iterations: n as u64, fork, join });
        Ok(())
    }

    /// Plays the per-core logs in virtual-time order and returns the time
    /// core 0 resumes.
    fn replay(&mut self, fork: u64, logs: Vec<Vec<Action>>) -> Result<u64, KernelError> {
        let p = self.cores.len();
        for k in 0..p {
            if k > 0 {
                let gap = fork - self.cores[k].clock;
                self.pseudo(k, self.ids.idle, gap)?;
            }
            self.pseudo(k, self.ids.overhead, self.config.fork_overhead_cycles)?;
            self.cores[k].status = CoreStatus::Running;
        }
        let mut cursor = vec![0usize; p];
        let mut ends = vec![0u64; p];
        loop {
            let k = match step_scheduler(&self.cores) {
                Ok(Some(k)) => k,
                Ok(None) => break,
                Err(d) => {
                    let time = d.waiting.iter().map(|(c, _)| self.cores[*c as usize].clock).max().unwrap_or(0);
                    let graph: Vec<String> = d
                        .waiting
                        .iter()
                        .map(|&(c, l)| {
                            let holder = self.locks[l as usize].holder.map_or("nobody".to_string(), |h| format!("core {h}"));
                            format!("core {c} waits for {} held by {holder}", self.cfg.locks[l as usize].display_name())
                        })
                        .collect();
                    return Err(KernelError::Deadlock { time, graph: graph.join("; ") });
                }
            };
            let Some(&a) = logs[k].get(cursor[k]) else {
                self.cores[k].status = CoreStatus::Idle;
                ends[k] = self.cores[k].clock;
                continue;
            };
            cursor[k] += 1;
            match a {
                Action::Acquire(l) => self.acquire(k, l)?,
                Action::Release(l) => self.release(k, l)?,
                other => self.apply(k, other)?,
            }
        }
        let join = ends.iter().copied().max().unwrap_or(fork);
        for k in 0..p {
            self.pseudo(k, self.ids.idle, join - ends[k])?;
            self.pseudo(k, self.ids.overhead, self.config.join_overhead_cycles)?;
            self.snapshot(k)?;
        }
        self.cores[0].status = CoreStatus::Running;
        Ok(self.cores[0].clock)
    }

    fn collect_races(&mut self, line: u32) {
        let mut by_var: BTreeMap<VarId, u64> = BTreeMap::new();
        for e in self.races.values() {
            if e.writers != 0 && e.accessors.count_ones() >= 2 {
                *by_var.entry(e.origin).or_default() |= e.accessors;
            }
        }
        for (var, mask) in by_var {
            self.race_warnings.push(RaceWarning {
                region_line: line,
                variable: self.cfg.vars[var as usize].name.clone(),
                cores: (0..64).filter(|c| mask & (1u64 << c) != 0).collect(),
            });
        }
        self.races.clear();
    }

    // ---- memory ----------------------------------------------------------

    fn var_target(&self, var: VarId) -> Target {
        let loc = self.layout.loc(var).expect("variable has storage");
        Target { placement: loc.placement, word: loc.word, origin: var }
    }

    fn cell(&mut self, t: Target) -> &mut i32 {
        match t.placement {
            Placement::Shared => &mut self.shared[t.word],
            Placement::Private => &mut self.private[self.cur][t.word],
        }
    }

    fn peek(&mut self, t: Target) -> i32 {
        *self.cell(t)
    }

    fn access(&mut self, t: Target, write: bool) {
        let addr = MemoryLayout::address(t.placement, t.word, self.cur as u32);
        let hit = self.cores[self.cur].dcache.access(addr).hit;
        let ob = self.open.last_mut().expect("access outside a block");
        if !hit {
            ob.dc_misses += 1;
        }
        if t.placement == Placement::Shared {
            ob.shared += 1;
            if self.active.is_some() && self.held.is_empty() {
                let bit = 1u64 << self.cur;
                let e = self.races.entry(t.word).or_insert_with(|| RaceEntry { origin: t.origin, ..Default::default() });
                e.accessors |= bit;
                if write {
                    e.writers |= bit;
                }
            }
        }
    }

    fn read(&mut self, t: Target) -> i32 {
        self.access(t, false);
        self.peek(t)
    }

    fn write(&mut self, t: Target, v: i32, _line: u32) {
        self.access(t, true);
        *self.cell(t) = v;
    }

    /// Resolves the storage behind `var`, and the dimensions visible
    /// through it.
    fn base(&self, var: VarId) -> (Target, &'a [u32]) {
        let cfg = self.cfg;
        let info = &cfg.vars[var as usize];
        if info.kind == VarKind::ArrayParam {
            let r = self.bindings[self.cur][var as usize].expect("array parameter is bound");
            let t = Target { placement: r.placement, word: r.word, origin: r.origin };
            (t, &cfg.vars[r.origin as usize].dims[r.skip..])
        } else {
            (self.var_target(var), &info.dims)
        }
    }

    /// Applies `indices` to `var`; returns the target and the remaining
    /// dimensions.
    fn index(&mut self, var: VarId, indices: &[IrExpr], line: u32) -> Result<(Target, &'a [u32]), KernelError> {
        let (mut t, dims) = self.base(var);
        let mut offset = 0usize;
        for (i, (ix, &extent)) in indices.iter().zip(dims).enumerate() {
            let v = self.eval(ix, line)?;
            if v < 0 || v as u32 >= extent {
                let name = &self.cfg.vars[var as usize].name;
                return Err(self.runtime(
                    line,
                    format!("index {v} out of bounds for dimension {i} of `{name}` (extent {extent})"),
                ));
            }
            offset = offset * extent as usize + v as usize;
        }
        let rest = &dims[indices.len()..];
        let stride: usize = rest.iter().map(|&d| d as usize).product();
        t.word += offset * stride;
        Ok((t, rest))
    }

    fn place(&mut self, p: &Place, line: u32) -> Result<Target, KernelError> {
        Ok(self.index(p.var, &p.indices, line)?.0)
    }

    // ---- statements and expressions ------------------------------------

    fn exec_stmt(&mut self, s: &IrStmt) -> Result<(), KernelError> {
        let line = s.line;
        match &s.kind {
            IrStmtKind::Assign { place, op: AssignOp::Set, value } => {
                let v = self.eval(value, line)?;
                let t = self.place(place, line)?;
                self.write(t, v, line);
            }
            IrStmtKind::Assign { place, op, value } => {
                let t = self.place(place, line)?;
                let v = self.eval(value, line)?;
                let old = self.read(t);
                let new = self.binop(op.binop().expect("compound operator"), old, v, line)?;
                self.write(t, new, line);
            }
            IrStmtKind::IncDec { place, increment } => {
                let t = self.place(place, line)?;
                let old = self.read(t);
                let new = if *increment { old.wrapping_add(1) } else { old.wrapping_sub(1) };
                self.write(t, new, line);
            }
            IrStmtKind::Eval(e) => {
                self.eval(e, line)?;
            }
            IrStmtKind::Declare(var) => {
                let t = self.var_target(*var);
                let words = self.cfg.vars[*var as usize].words().max(1) as usize;
                let cells = match t.placement {
                    Placement::Shared => &mut self.shared[t.word..t.word + words],
                    Placement::Private => &mut self.private[self.cur][t.word..t.word + words],
                };
                cells.fill(0);
            }
        }
        Ok(())
    }

    fn binop(&self, op: BinOp, a: i32, b: i32, line: u32) -> Result<i32, KernelError> {
        op.apply(a, b).ok_or_else(|| self.runtime(line, "division by zero"))
    }

    fn eval(&mut self, e: &IrExpr, line: u32) -> Result<i32, KernelError> {
        Ok(match e {
            IrExpr::Const(v) => *v,
            IrExpr::Load(p) => {
                let t = self.place(p, line)?;
                self.read(t)
            }
            IrExpr::Unary(op, x) => op.apply(self.eval(x, line)?),
            IrExpr::Binary(BinOp::And, l, r) => {
                if self.eval(l, line)? == 0 {
                    0
                } else {
                    (self.eval(r, line)? != 0) as i32
                }
            }
            IrExpr::Binary(BinOp::Or, l, r) => {
                if self.eval(l, line)? != 0 {
                    1
                } else {
                    (self.eval(r, line)? != 0) as i32
                }
            }
            IrExpr::Binary(op, l, r) => {
                let a = self.eval(l, line)?;
                let b = self.eval(r, line)?;
                self.binop(*op, a, b, line)?
            }
            IrExpr::Call { callee: Callee::Print, args } => {
                let IrArg::Value(v) = &args[0] else { unreachable!("print takes a value") };
                let v = self.eval(v, line)?;
                self.outputs.push(v);
                0
            }
            IrExpr::Call { callee: Callee::Function(f), args } => self.call(*f, args, line)?,
        })
    }

    fn call(&mut self, f: u32, args: &[IrArg], line: u32) -> Result<i32, KernelError> {
        let cfg = self.cfg;
        let func = &cfg.functions[f as usize];
        let mut scalars = Vec::new();
        let mut arrays = Vec::new();
        for (&param, arg) in func.params.iter().zip(args) {
            match arg {
                IrArg::Value(e) => scalars.push((param, self.eval(e, line)?)),
                IrArg::Array { var, indices } => {
                    let (t, _) = self.index(*var, indices, line)?;
                    let skip = match cfg.vars[*var as usize].kind {
                        VarKind::ArrayParam => self.bindings[self.cur][*var as usize].expect("bound").skip,
                        _ => 0,
                    } + indices.len();
                    arrays.push((param, ArrayRef { placement: t.placement, word: t.word, origin: t.origin, skip }));
                }
            }
        }
        for (param, r) in arrays {
            self.bindings[self.cur][param as usize] = Some(r);
        }
        self.emit(Action::Enter(f))?;
        let v = match self.run_blocks(func.entry, None, &scalars)? {
            Flow::Return(v) => v,
            Flow::Stopped => unreachable!("functions stop only by returning"),
        };
        self.emit(Action::Leave(f))?;
        Ok(v)
    }
}
