use natsim::frontend::{characterize, compile, BasicBlockRecord, CostTable, WorkloadProgram};
use natsim::kernel::{run, trace_definitions, KernelError, SimulationResult};
use natsim::target::{block_time_cycles, TargetConfig};
use natsim::trace::{profile, validate, EventKind, TraceEvent, TraceSink};
use natsim::workloads;
use num_rational::Ratio;
use proptest::prelude::*;

fn build(src: &str) -> (WorkloadProgram, Vec<BasicBlockRecord>) {
    let p = compile(src).unwrap_or_else(|e| panic!("{e}"));
    let r = characterize(p.cfg(), &CostTable::default());
    (p, r)
}

fn traced(p: &WorkloadProgram, r: &[BasicBlockRecord], c: &TargetConfig) -> (SimulationResult, Vec<TraceEvent>) {
    let mut sink = TraceSink::new(trace_definitions(p.cfg(), c));
    let res = run(p, r, c, Some(&mut sink)).unwrap();
    (res, sink.finish().unwrap())
}

fn cores(n: u32) -> TargetConfig {
    TargetConfig::default().with_cores(n)
}

/// One critical section per iteration so lock intervals reveal which core
/// ran which iteration.
fn tagged_loop(n: u32) -> String {
    format!(
        "int owner[64];\nint main() {{\n int i;\n int k = 0;\n\
         #pragma omp parallel for\n for (i = 0; i < {n}; i++) {{\n\
         #pragma omp critical\n {{ owner[k] = i; k++; }}\n }}\n return k;\n}}\n"
    )
}

#[test]
fn minimal_program_is_one_block() {
    let (p, r) = build("int main() { return 7; }");
    assert_eq!(r.len(), 1);
    let c = cores(1);
    let (res, events) = traced(&p, &r, &c);
    assert_eq!(res.exit_code, 7);
    let expect = block_time_cycles(&c, r[0].instr_count, 1, 0);
    assert_eq!(res.total_cycles(), expect);
    let blocks: Vec<_> = events.iter().filter(|e| matches!(e.kind, EventKind::Block(_))).collect();
    assert_eq!(blocks.len(), 1);
    assert_eq!(blocks[0].timestamp, expect);
}

#[test]
fn static_chunks_are_contiguous() {
    // (iterations, cores, expected iterations per core)
    let cases: [(u32, u32, &[usize]); 5] = [
        (10, 4, &[3, 3, 3, 1, 0][..4]),
        (8, 4, &[2, 2, 2, 2]),
        (3, 4, &[1, 1, 1, 0]),
        (0, 2, &[0, 0]),
        (17, 16, &[2, 2, 2, 2, 2, 2, 2, 2, 1, 0, 0, 0, 0, 0, 0, 0]),
    ];
    for (n, p, expect) in cases {
        let (prog, r) = build(&tagged_loop(n));
        let res = run(&prog, &r, &cores(p), None).unwrap();
        assert_eq!(res.exit_code, n as i32);
        let mut per_core = vec![0usize; p as usize];
        for li in &res.lock_intervals {
            per_core[li.core as usize] += 1;
        }
        assert_eq!(per_core, expect, "{n} iterations on {p} cores");
        assert_eq!(res.regions[0].iterations, n as u64);
    }
}

#[test]
fn critical_is_granted_in_arrival_order() {
    // Identical chunks: every core reaches the lock at the same time, so the
    // grant order is by core id.
    let (p, r) = build(&tagged_loop(4));
    let res = run(&p, &r, &cores(4), None).unwrap();
    let order: Vec<u32> = res.lock_intervals.iter().map(|l| l.core).collect();
    assert_eq!(order, [0, 1, 2, 3]);
    for w in res.lock_intervals.windows(2) {
        assert!(w[0].release <= w[1].acquire);
    }
    assert!(res.cores[3].counters.wait > 0);
}

#[test]
fn runtime_errors_name_the_line() {
    let (p, r) = build("int a[4];\nint main() {\n int i = 4;\n return a[i];\n}\n");
    match run(&p, &r, &cores(1), None) {
        Err(KernelError::Runtime { line, msg, .. }) => {
            assert_eq!(line, 4);
            assert!(msg.contains("out of bounds"), "{msg}");
        }
        other => panic!("{other:?}"),
    }
    let (p, r) = build("int main() {\n int z = 0;\n return 5 / z;\n}\n");
    assert!(matches!(run(&p, &r, &cores(1), None), Err(KernelError::Runtime { line: 3, .. })));
}

#[test]
fn opposite_lock_order_deadlocks() {
    let src = "int x;\nint main() {\n int i;\n#pragma omp parallel for\n for (i = 0; i < 2; i++) {\n\
               if (i == 0) {\n#pragma omp critical(a)\n {\n x++;\n#pragma omp critical(b)\n x++;\n }\n } else {\n\
               #pragma omp critical(b)\n {\n x++;\n#pragma omp critical(a)\n x++;\n }\n }\n }\n return x;\n}\n";
    let (p, r) = build(src);
    match run(&p, &r, &cores(2), None) {
        Err(KernelError::Deadlock { graph, .. }) => {
            assert!(graph.contains("core 0 waits for"), "{graph}");
            assert!(graph.contains("core 1 waits for"), "{graph}");
        }
        other => panic!("{other:?}"),
    }
    // One core takes both branches in turn.
    assert_eq!(run(&p, &r, &cores(1), None).unwrap().exit_code, 4);
}

#[test]
fn bundled_workloads_trace_cleanly() {
    for (name, src) in workloads::ALL {
        let (p, r) = build(src);
        for n in [1, 4, 16] {
            let c = cores(n);
            let plain = run(&p, &r, &c, None).unwrap();
            let (res, events) = traced(&p, &r, &c);
            assert_eq!(plain, res, "{name} on {n} cores: tracing changed the result");
            let defs = trace_definitions(p.cfg(), &c);
            validate(&events, &defs).unwrap_or_else(|v| panic!("{name} on {n} cores: {v:?}"));
            let report = profile(&events, &defs).unwrap();
            for core in &report.cores {
                assert_eq!(core.busy + core.wait + core.idle + core.overhead, core.final_time);
                assert_eq!(core.final_time, res.cores[core.core as usize].clock);
            }
            for e in &events {
                if let EventKind::Block(b) = e.kind {
                    assert_eq!(b.cycles, block_time_cycles(&c, b.instr_count, b.ic_misses, b.dc_misses));
                }
            }
            assert!(res.races.is_empty(), "{name}: {:?}", res.races);
        }
    }
}

#[test]
fn nqueens_finds_ten_solutions_and_scales() {
    let (p, r) = build(workloads::NQUEENS);
    let mut last = u64::MAX;
    let mut one = 0;
    for n in [1, 2, 4, 8, 16] {
        let res = run(&p, &r, &cores(n), None).unwrap();
        assert_eq!(res.outputs, [10], "{n} cores");
        assert!(res.total_cycles() <= last);
        last = res.total_cycles();
        if n == 1 {
            one = last;
        }
        let busy: u64 = res.cores.iter().map(|c| c.counters.busy).sum();
        let wait: u64 = res.cores.iter().map(|c| c.counters.wait).sum();
        assert!(wait * 100 < busy);
    }
    assert!(one as f64 / last as f64 >= 8.0);
}

#[test]
fn racy_loop_is_reported() {
    let (p, r) = build("int main() {\n int s = 0;\n int i;\n#pragma omp parallel for\n for (i = 0; i < 8; i++) {\n s += i;\n }\n return s;\n}\n");
    let res = run(&p, &r, &cores(4), None).unwrap();
    assert_eq!(res.exit_code, 28);
    assert_eq!(res.races.len(), 1);
    assert_eq!(res.races[0].variable, "s");
    assert_eq!(res.races[0].cores, [0, 1, 2, 3]);
    // The same loop on one core has nothing to race with.
    assert!(run(&p, &r, &cores(1), None).unwrap().races.is_empty());
}

fn workload(iters: u32, work: u32, every: u32) -> String {
    format!(
        "int data[64];\nint total;\n\
         int step(int x) {{ int j; int acc = x; for (j = 0; j < {work}; j++) {{ acc = acc * 3 + j; }} return acc; }}\n\
         int main() {{\n int i;\n int seq = 0;\n for (i = 0; i < 5; i++) {{ seq += step(i); }}\n\
         #pragma omp parallel for\n for (i = 0; i < {iters}; i++) {{\n data[i] = step(i);\n\
         if (i % {every} == 0) {{\n#pragma omp critical\n total += data[i] & 255;\n }}\n }}\n\
         print(total);\n print(seq);\n return data[0];\n}}\n"
    )
}

fn config() -> impl Strategy<Value = TargetConfig> {
    (1u32..=16, 1u64..=4, 0u64..=40, 0u64..=40, 0u64..=4, 0u64..=50, 0u64..=50).prop_map(
        |(n, tm, im, dm, sh, fork, join)| {
            let mut c = TargetConfig::default().with_cores(n);
            c.mean_instr_cycles = Ratio::new(tm * 3, 2);
            c.imiss_cycles = Ratio::from_integer(im);
            c.dmiss_cycles = Ratio::from_integer(dm);
            c.shared_mem_extra_cycles = Ratio::from_integer(sh);
            c.fork_overhead_cycles = fork;
            c.join_overhead_cycles = join;
            c
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_invariants(iters in 0u32..=64, work in 0u32..12, every in 1u32..6, c in config()) {
        let (p, r) = build(&workload(iters, work, every));
        let plain = run(&p, &r, &c, None).unwrap();
        let (res, events) = traced(&p, &r, &c);
        // Tracing leaves the simulation untouched, and repeated runs agree.
        prop_assert_eq!(&plain, &res);
        prop_assert_eq!(&run(&p, &r, &c, None).unwrap(), &res);

        // Same outputs as a single core with different timing.
        let reference = run(&p, &r, &TargetConfig::default().with_cores(1), None).unwrap();
        prop_assert_eq!(&res.outputs, &reference.outputs);
        prop_assert_eq!(res.exit_code, reference.exit_code);

        for core in &res.cores {
            let k = core.counters;
            prop_assert_eq!(k.busy + k.wait + k.idle + k.overhead, core.clock, "core {}", core.core);
        }
        let mut held = res.lock_intervals.clone();
        held.sort_by_key(|l| l.acquire);
        for w in held.windows(2) {
            prop_assert!(w[0].release <= w[1].acquire, "{:?} overlaps {:?}", w[0], w[1]);
        }
        let defs = trace_definitions(p.cfg(), &c);
        prop_assert!(validate(&events, &defs).is_ok(), "{:?}", validate(&events, &defs));
    }

    #[test]
    fn more_cores_never_slower_on_balanced_loops(work in 1u32..12) {
        let (p, r) = build(&workload(48, work, 48));
        let mut last = u64::MAX;
        for n in [1, 2, 4, 8, 16] {
            let t = run(&p, &r, &cores(n), None).unwrap().total_cycles();
            prop_assert!(t <= last, "{} cores: {} > {}", n, t, last);
            last = t;
        }
    }
}
