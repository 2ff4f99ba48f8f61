use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use natsim::trace::{read_trace, EventKind};

fn natsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_natsim")).args(args).current_dir(dir).output().expect("binary runs")
}

fn examples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/examples")
}

fn workload(name: &str) -> String {
    examples().join(name).to_string_lossy().into_owned()
}

fn summary(path: &Path) -> BTreeMap<String, String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let (k, v) = l.split_once(" = ").unwrap();
            (k.to_string(), v.to_string())
        })
        .collect()
}

#[test]
fn sweep_writes_traces_and_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let out = natsim(&["run", "--workload", &workload("nqueens.nsc"), "--cores", "1,16", "--trace-prefix", "q"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let one = summary(&dir.path().join("q.c1.summary"));
    let sixteen = summary(&dir.path().join("q.c16.summary"));
    assert_eq!(one["outputs"], "10");
    assert_eq!(sixteen["cores"], "16");
    let t = |s: &BTreeMap<String, String>| s["target_cycles"].parse::<u64>().unwrap();
    assert!(t(&sixteen) < t(&one));
    for n in [1, 16] {
        assert!(dir.path().join(format!("q.c{n}.trace")).exists());
        assert!(dir.path().join(format!("q.c{n}.{}.events", n - 1)).exists());
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("== 16 cores =="), "{stdout}");
    assert!(stdout.contains("speedup"), "{stdout}");
}

#[test]
fn missing_workload_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = natsim(&["run", "--workload", "no/such/file.nsc"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no/such/file.nsc"));
}

#[test]
fn tracing_off_keeps_timing() {
    let dir = tempfile::tempdir().unwrap();
    let w = workload("jpeg_pipeline.nsc");
    assert!(natsim(&["run", "--workload", &w, "--cores", "4", "--trace-prefix", "on"], dir.path()).status.success());
    let out = natsim(&["run", "--workload", &w, "--cores", "4", "--trace-prefix", "off", "--no-trace"], dir.path());
    assert!(out.status.success());
    assert!(!dir.path().join("off.c4.trace").exists());
    let mut on = summary(&dir.path().join("on.c4.summary"));
    let mut off = summary(&dir.path().join("off.c4.summary"));
    assert_eq!(off.remove("trace").unwrap(), "none");
    on.remove("trace");
    on.remove("trace_events");
    assert_eq!(on, off);
}

#[test]
fn parallel_sweep_matches_sequential() {
    let dir = tempfile::tempdir().unwrap();
    let w = workload("nqueens.nsc");
    for (prefix, extra) in [("seq", None), ("par", Some("--parallel-sweep"))] {
        let mut args = vec!["run", "--workload", &w, "--cores", "2,3,8", "--trace-prefix", prefix, "--flush-bytes", "4096"];
        args.extend(extra);
        assert!(natsim(&args, dir.path()).status.success());
    }
    for n in [2, 3, 8] {
        let read = |p: &str, ext: &str| fs::read(dir.path().join(format!("{p}.c{n}.{ext}"))).unwrap();
        assert_eq!(read("seq", "0.events"), read("par", "0.events"));
        let strip = |s: Vec<u8>| String::from_utf8(s).unwrap().replace("seq.c", "par.c");
        assert_eq!(strip(read("seq", "summary")), strip(read("par", "summary")));
    }
}

#[test]
fn filter_limits_traced_functions() {
    let dir = tempfile::tempdir().unwrap();
    let w = workload("nqueens.nsc");
    let out = natsim(&["run", "--workload", &w, "--cores", "4", "--trace-prefix", "f", "--filter-functions", "main"], dir.path());
    assert!(out.status.success());
    let (events, defs) = read_trace(&dir.path().join("f.c4.trace")).unwrap();
    let check = defs.function_id("check_acceptable").unwrap();
    assert!(!events.iter().any(|e| e.kind == EventKind::Enter(check)));
    assert!(natsim(&["inspect", "f.c4"], dir.path()).status.success());
    let bad = natsim(&["run", "--workload", &w, "--filter-functions", "nope"], dir.path());
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("nope"));
}

#[test]
fn config_cost_table_and_block_db() {
    let dir = tempfile::tempdir().unwrap();
    let w = workload("nqueens.nsc");
    let cfg = examples().join("arm926_16core.cfg").to_string_lossy().into_owned();
    let base = natsim(&["run", "--workload", &w, "--config", &cfg, "--cores", "2", "--trace-prefix", "a", "--no-trace"], dir.path());
    assert!(base.status.success());
    fs::write(dir.path().join("costs.txt"), "div = 40\n").unwrap();
    fs::write(dir.path().join("blocks.db"), "0 500\n").unwrap();
    let tuned = natsim(
        &["run", "--workload", &w, "--cores", "2", "--trace-prefix", "b", "--no-trace", "--cost-table", "costs.txt", "--block-db", "blocks.db"],
        dir.path(),
    );
    assert!(tuned.status.success(), "{}", String::from_utf8_lossy(&tuned.stderr));
    let a = summary(&dir.path().join("a.c2.summary"));
    let b = summary(&dir.path().join("b.c2.summary"));
    assert_eq!(a["outputs"], b["outputs"]);
    assert!(b["target_cycles"].parse::<u64>().unwrap() > a["target_cycles"].parse::<u64>().unwrap());

    fs::write(dir.path().join("bad.cfg"), "core_count = 0\n").unwrap();
    let out = natsim(&["run", "--workload", &w, "--config", "bad.cfg"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("core_count"));
    let out = natsim(&["run", "--workload", &w, "--cores", "65"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn report_orders_functions_by_exclusive_time() {
    let dir = tempfile::tempdir().unwrap();
    assert!(natsim(&["run", "--workload", &workload("nqueens.nsc"), "--cores", "16", "--trace-prefix", "q"], dir.path()).status.success());
    let out = natsim(&["report", "q.c16.trace"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = text.lines().skip_while(|l| !l.starts_with("function")).skip(1).take(3).collect();
    assert!(rows[0].starts_with("main._omp_fn.0"), "{text}");
    assert!(rows[1].starts_with("check_acceptable"), "{text}");
    assert!(text.contains("<idle>"));
}

#[test]
fn inspect_flags_corruption() {
    let dir = tempfile::tempdir().unwrap();
    assert!(natsim(&["run", "--workload", &workload("nqueens.nsc"), "--cores", "2", "--trace-prefix", "q"], dir.path()).status.success());
    let out = natsim(&["inspect", "q.c2"], dir.path());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("PASS"));

    let stream = dir.path().join("q.c2.1.events");
    let text = fs::read_to_string(&stream).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // Push the fourth record back in time.
    let mut f: Vec<&str> = lines[3].split(' ').collect();
    f[1] = "0";
    lines[3] = f.join(" ");
    fs::write(&stream, lines.join("\n") + "\n").unwrap();
    let out = natsim(&["inspect", "q.c2"], dir.path());
    assert!(!out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("FAIL: core 1 line 4"), "{stdout}");

    let out = natsim(&["inspect", "nothing.trace"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nothing.trace"));
}

#[test]
fn empty_trace_reports_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("e.trace"), "NSTRACE 1\nRES 1000\n").unwrap();
    let out = natsim(&["report", "e"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("0 events"), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("function")).count(), 1);
}
