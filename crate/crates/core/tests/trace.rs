use natsim::frontend::{characterize, compile, CostTable};
use natsim::kernel::{filter_ids, run, trace_definitions};
use natsim::target::TargetConfig;
use natsim::trace::{
    parse_trace, read_trace, render_trace, validate, write_trace, BlockExec, Definition, EventKind, TraceDefinitions,
    TraceError, TraceEvent, TraceSink,
};
use natsim::workloads;
use proptest::prelude::*;

fn defs() -> impl Strategy<Value = TraceDefinitions> {
    let name = "[A-Za-z_<][A-Za-z0-9_. <>]{0,12}";
    (
        1u64..u64::MAX,
        prop::collection::vec(name, 1..5),
        prop::collection::vec(name, 1..8),
        prop::collection::vec(name, 0..4),
    )
        .prop_map(|(resolution, procs, funcs, cntrs)| {
            let defs = |names: Vec<String>| names.into_iter().enumerate().map(|(i, n)| Definition::new(i as u32, n)).collect();
            TraceDefinitions { resolution, processes: defs(procs), functions: defs(funcs), counters: defs(cntrs) }
        })
}

fn kind(funcs: u32, cntrs: u32) -> BoxedStrategy<EventKind> {
    let mut options = vec![
        (0..funcs).prop_map(EventKind::Enter).boxed(),
        (0..funcs).prop_map(EventKind::Leave).boxed(),
        (any::<u32>(), any::<u64>(), any::<u64>(), any::<u64>(), any::<u64>())
            .prop_map(|(block, instr_count, ic_misses, dc_misses, cycles)| {
                EventKind::Block(BlockExec { block, instr_count, ic_misses, dc_misses, cycles })
            })
            .boxed(),
    ];
    if cntrs > 0 {
        options.push((0..cntrs, any::<u64>()).prop_map(|(c, v)| EventKind::Counter(c, v)).boxed());
    }
    prop::strategy::Union::new(options).boxed()
}

/// Definitions plus events grouped by core in definition order, each core's
/// timestamps non-decreasing: the order the reader returns them in.
fn trace() -> impl Strategy<Value = (Vec<TraceEvent>, TraceDefinitions)> {
    defs().prop_flat_map(|d| {
        let procs = d.processes.len();
        let ev = (0..procs, 0u64..1000, kind(d.functions.len() as u32, d.counters.len() as u32));
        (Just(d), prop::collection::vec(ev, 0..200)).prop_map(move |(d, raw)| {
            let mut events: Vec<TraceEvent> =
                raw.into_iter().map(|(p, dt, kind)| TraceEvent { timestamp: dt, core: p as u32, kind }).collect();
            events.sort_by_key(|e| e.core);
            let mut clock = vec![0u64; procs];
            for e in &mut events {
                clock[e.core as usize] += e.timestamp;
                e.timestamp = clock[e.core as usize];
            }
            (events, d)
        })
    })
}

proptest! {
    #[test]
    fn render_parse_round_trip((events, defs) in trace()) {
        let r = render_trace(&events, &defs);
        prop_assert_eq!(parse_trace(&r).unwrap(), (events, defs));
    }

    #[test]
    fn file_round_trip((events, defs) in trace()) {
        let dir = tempfile::tempdir().unwrap();
        let master = write_trace(&events, &defs, &dir.path().join("t")).unwrap();
        prop_assert_eq!(read_trace(&master).unwrap(), (events, defs));
    }
}

#[test]
fn kernel_traces_survive_files_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    for (name, src) in workloads::ALL {
        let p = compile(src).unwrap();
        let r = characterize(p.cfg(), &CostTable::default());
        for n in [1, 3, 16] {
            let c = TargetConfig::default().with_cores(n);
            let defs = trace_definitions(p.cfg(), &c);
            let mut mem = TraceSink::new(defs.clone());
            let base = run(&p, &r, &c, Some(&mut mem)).unwrap();
            let events = mem.finish().unwrap();

            // Streaming to disk with a small buffer writes the same trace.
            let path = dir.path().join(format!("{name}.{n}"));
            let mut file = TraceSink::to_files(defs.clone(), &path, Some(512)).unwrap();
            assert_eq!(run(&p, &r, &c, Some(&mut file)).unwrap(), base);
            file.finish().unwrap();
            let (read, read_defs) = read_trace(&path).unwrap();
            assert_eq!(read_defs, defs);
            assert_eq!(read, events, "{name} on {n} cores");
            let summary = validate(&read, &read_defs).unwrap();
            assert_eq!(summary.events, events.len());
        }
    }
}

#[test]
fn filtered_traces_still_validate() {
    let p = compile(workloads::JPEG_PIPELINE).unwrap();
    let r = characterize(p.cfg(), &CostTable::default());
    let c = TargetConfig::default().with_cores(4);
    let defs = trace_definitions(p.cfg(), &c);
    let keep = filter_ids(p.cfg(), &["huffman_encode".to_string()]).unwrap();
    let mut sink = TraceSink::new(defs.clone()).with_filter(keep);
    let filtered = run(&p, &r, &c, Some(&mut sink)).unwrap();
    let events = sink.finish().unwrap();
    assert_eq!(filtered, run(&p, &r, &c, None).unwrap());
    let dct = defs.function_id("dct3").unwrap();
    assert!(!events.iter().any(|e| e.kind == EventKind::Enter(dct)));
    validate(&events, &defs).unwrap();
    assert!(filter_ids(p.cfg(), &["nope".to_string()]).is_err());
}

#[test]
fn missing_stream_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let defs = TraceDefinitions {
        resolution: 1,
        processes: vec![Definition::new(0, "Core 0"), Definition::new(1, "Core 1")],
        functions: vec![Definition::new(0, "main")],
        counters: vec![],
    };
    let master = write_trace(&[], &defs, &dir.path().join("x.trace")).unwrap();
    std::fs::remove_file(dir.path().join("x.1.events")).unwrap();
    assert!(matches!(read_trace(&master), Err(TraceError::Io { .. })));
}
