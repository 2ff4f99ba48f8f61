use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{BlockExec, Definition, EventKind, TraceDefinitions, TraceError, TraceEvent};

pub(super) fn event_line(e: &TraceEvent, out: &mut String) {
    // Writing into a String cannot fail.
    let _ = match e.kind {
        EventKind::Enter(f) => writeln!(out, "E {} {f}", e.timestamp),
        EventKind::Leave(f) => writeln!(out, "L {} {f}", e.timestamp),
        EventKind::Counter(c, v) => writeln!(out, "C {} {c} {v}", e.timestamp),
        EventKind::Block(b) => writeln!(
            out,
            "B {} {} {} {} {} {}",
            e.timestamp, b.block, b.instr_count, b.ic_misses, b.dc_misses, b.cycles
        ),
    };
}

pub(super) fn master_text(defs: &TraceDefinitions) -> String {
    let mut s = String::from("NSTRACE 1\n");
    let _ = writeln!(s, "RES {}", defs.resolution);
    for (tag, list) in [("PROC", &defs.processes), ("FUNC", &defs.functions), ("CNTR", &defs.counters)] {
        for d in list {
            let _ = writeln!(s, "{tag} {} {}", d.id, d.name);
        }
    }
    s
}

/// A trace rendered to text: the master file and one stream per process,
/// in process-definition order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedTrace {
    pub master: String,
    pub streams: Vec<(u32, String)>,
}

pub fn render_trace(events: &[TraceEvent], defs: &TraceDefinitions) -> RenderedTrace {
    let streams = defs
        .processes
        .iter()
        .map(|p| {
            let mut s = String::new();
            events.iter().filter(|e| e.core == p.id).for_each(|e| event_line(e, &mut s));
            (p.id, s)
        })
        .collect();
    RenderedTrace { master: master_text(defs), streams }
}

/// Master file path and stream-name stem for a trace path. `x.trace` and
/// `x` both denote the trace `x`.
pub fn trace_paths(path: &Path) -> (PathBuf, PathBuf) {
    if path.extension().is_some_and(|e| e == "trace") {
        (path.to_path_buf(), path.with_extension(""))
    } else {
        let mut master = path.as_os_str().to_owned();
        master.push(".trace");
        (PathBuf::from(master), path.to_path_buf())
    }
}

pub fn stream_path(stem: &Path, core: u32) -> PathBuf {
    let mut p = stem.as_os_str().to_owned();
    p.push(format!(".{core}.events"));
    PathBuf::from(p)
}

pub(super) fn write_file(path: &Path, text: &str) -> Result<(), TraceError> {
    std::fs::write(path, text).map_err(|e| TraceError::Io { path: path.to_path_buf(), msg: e.to_string() })
}

/// Writes the master file and one stream file per process. Events are
/// written to their core's stream in slice order.
pub fn write_trace(events: &[TraceEvent], defs: &TraceDefinitions, path: &Path) -> Result<PathBuf, TraceError> {
    let (master, stem) = trace_paths(path);
    let r = render_trace(events, defs);
    write_file(&master, &r.master)?;
    for (core, text) in &r.streams {
        write_file(&stream_path(&stem, *core), text)?;
    }
    Ok(master)
}

pub fn read_trace(path: &Path) -> Result<(Vec<TraceEvent>, TraceDefinitions), TraceError> {
    let (master_path, stem) = trace_paths(path);
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|e| TraceError::Io { path: p.to_path_buf(), msg: e.to_string() })
    };
    let master = read(&master_path)?;
    let defs = parse_master(&master, &master_path.display().to_string())?;
    let mut streams = Vec::new();
    for p in &defs.processes {
        let sp = stream_path(&stem, p.id);
        streams.push((p.id, read(&sp)?, sp.display().to_string()));
    }
    let mut events = Vec::new();
    for (core, text, name) in &streams {
        parse_stream(text, *core, &defs, name, &mut events)?;
    }
    Ok((events, defs))
}

/// Parses a rendered trace; the inverse of [`render_trace`].
pub fn parse_trace(r: &RenderedTrace) -> Result<(Vec<TraceEvent>, TraceDefinitions), TraceError> {
    let defs = parse_master(&r.master, "<master>")?;
    let mut events = Vec::new();
    for p in &defs.processes {
        let Some((_, text)) = r.streams.iter().find(|(c, _)| *c == p.id) else {
            return Err(TraceError::Malformed { file: "<master>".into(), line: 0, msg: format!("no stream for process {}", p.id) });
        };
        parse_stream(text, p.id, &defs, &format!("<stream {}>", p.id), &mut events)?;
    }
    Ok((events, defs))
}

fn check_terminated(text: &str, file: &str) -> Result<(), TraceError> {
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(TraceError::Truncated { file: file.to_string() });
    }
    Ok(())
}

fn parse_master(text: &str, file: &str) -> Result<TraceDefinitions, TraceError> {
    check_terminated(text, file)?;
    let err = |line: usize, msg: String| TraceError::Malformed { file: file.to_string(), line, msg };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "NSTRACE 1")) => {}
        Some((_, other)) => return Err(err(1, format!("expected `NSTRACE 1`, found `{other}`"))),
        None => return Err(err(1, "empty master file".into())),
    }
    let mut defs = TraceDefinitions::default();
    let mut have_res = false;
    let mut seen: [HashSet<u32>; 3] = Default::default();
    for (i, line) in lines {
        let n = i + 1;
        let (tag, rest) = line.split_once(' ').ok_or_else(|| err(n, format!("malformed record `{line}`")))?;
        if tag == "RES" {
            if have_res {
                return Err(err(n, "duplicate RES record".into()));
            }
            defs.resolution = rest.parse().map_err(|_| err(n, format!("bad resolution `{rest}`")))?;
            have_res = true;
            continue;
        }
        let slot = match tag {
            "PROC" => 0,
            "FUNC" => 1,
            "CNTR" => 2,
            _ => return Err(err(n, format!("unknown record tag `{tag}`"))),
        };
        let (id, name) = rest.split_once(' ').ok_or_else(|| err(n, format!("{tag} record needs an id and a name")))?;
        let id: u32 = id.parse().map_err(|_| err(n, format!("bad id `{id}`")))?;
        if !seen[slot].insert(id) {
            return Err(err(n, format!("{tag} {id} defined twice")));
        }
        let def = Definition::new(id, name);
        match slot {
            0 => defs.processes.push(def),
            1 => defs.functions.push(def),
            _ => defs.counters.push(def),
        }
    }
    if !have_res {
        return Err(err(0, "missing RES record".into()));
    }
    Ok(defs)
}

fn parse_stream(
    text: &str,
    core: u32,
    defs: &TraceDefinitions,
    file: &str,
    out: &mut Vec<TraceEvent>,
) -> Result<(), TraceError> {
    check_terminated(text, file)?;
    let funcs: HashSet<u32> = defs.functions.iter().map(|d| d.id).collect();
    let cntrs: HashSet<u32> = defs.counters.iter().map(|d| d.id).collect();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let err = |msg: String| TraceError::Malformed { file: file.to_string(), line: n, msg };
        let mut fields = line.split(' ');
        let tag = fields.next().unwrap_or("");
        let nums: Vec<u64> = fields
            .map(|f| f.parse::<u64>().map_err(|_| err(format!("bad number `{f}`"))))
            .collect::<Result<_, _>>()?;
        let arity = match tag {
            "E" | "L" => 2,
            "C" => 3,
            "B" => 6,
            _ => return Err(err(format!("unknown record tag `{tag}`"))),
        };
        if nums.len() != arity {
            return Err(err(format!("`{tag}` record needs {arity} fields, found {}", nums.len())));
        }
        let id32 = |v: u64| u32::try_from(v).map_err(|_| err(format!("id {v} out of range")));
        let kind = match tag {
            "E" | "L" => {
                let f = id32(nums[1])?;
                if !funcs.contains(&f) {
                    return Err(err(format!("undefined function {f}")));
                }
                if tag == "E" {
                    EventKind::Enter(f)
                } else {
                    EventKind::Leave(f)
                }
            }
            "C" => {
                let c = id32(nums[1])?;
                if !cntrs.contains(&c) {
                    return Err(err(format!("undefined counter {c}")));
                }
                EventKind::Counter(c, nums[2])
            }
            _ => EventKind::Block(BlockExec {
                block: id32(nums[1])?,
                instr_count: nums[2],
                ic_misses: nums[3],
                dc_misses: nums[4],
                cycles: nums[5],
            }),
        };
        out.push(TraceEvent { timestamp: nums[0], core, kind });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defs() -> TraceDefinitions {
        TraceDefinitions {
            resolution: 470_000_000,
            processes: vec![Definition::new(0, "Core 0"), Definition::new(1, "Core 1")],
            functions: vec![Definition::new(0, "main"), Definition::new(1, "<idle>")],
            counters: vec![Definition::new(0, "busy_cycles")],
        }
    }

    #[test]
    fn render_exact_bytes() {
        let ev = [
            TraceEvent { timestamp: 0, core: 0, kind: EventKind::Enter(0) },
            TraceEvent {
                timestamp: 250,
                core: 0,
                kind: EventKind::Block(BlockExec { block: 3, instr_count: 100, ic_misses: 3, dc_misses: 1, cycles: 250 }),
            },
            TraceEvent { timestamp: 250, core: 0, kind: EventKind::Counter(0, 250) },
            TraceEvent { timestamp: 250, core: 0, kind: EventKind::Leave(0) },
        ];
        let r = render_trace(&ev, &defs());
        assert_eq!(
            r.master,
            "NSTRACE 1\nRES 470000000\nPROC 0 Core 0\nPROC 1 Core 1\nFUNC 0 main\nFUNC 1 <idle>\nCNTR 0 busy_cycles\n"
        );
        assert_eq!(r.streams[0].1, "E 0 0\nB 250 3 100 3 1 250\nC 250 0 250\nL 250 0\n");
        assert_eq!(r.streams[1].1, "");
        assert_eq!(parse_trace(&r).unwrap(), (ev.to_vec(), defs()));
    }

    #[test]
    fn files_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let ev = vec![
            TraceEvent { timestamp: 0, core: 0, kind: EventKind::Enter(0) },
            TraceEvent { timestamp: 9, core: 0, kind: EventKind::Leave(0) },
            TraceEvent { timestamp: 0, core: 1, kind: EventKind::Enter(1) },
            TraceEvent { timestamp: 9, core: 1, kind: EventKind::Leave(1) },
        ];
        let master = write_trace(&ev, &defs(), &dir.path().join("t")).unwrap();
        assert!(master.ends_with("t.trace"));
        assert_eq!(read_trace(&master).unwrap(), (ev, defs()));

        let s1 = dir.path().join("t.1.events");
        std::fs::write(&s1, "E 0 1\nL 9 1").unwrap();
        assert!(matches!(read_trace(&master), Err(TraceError::Truncated { .. })));
        std::fs::write(&s1, "E 0 1\nX 9 1\n").unwrap();
        assert!(matches!(read_trace(&master), Err(TraceError::Malformed { line: 2, .. })));
        std::fs::write(&s1, "E 0 7\n").unwrap();
        assert!(read_trace(&master).unwrap_err().to_string().contains("undefined function 7"));
        assert!(matches!(read_trace(&dir.path().join("missing.trace")), Err(TraceError::Io { .. })));
    }
}
