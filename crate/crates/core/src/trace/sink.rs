use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::format::{event_line, master_text, stream_path, trace_paths, write_file};
use super::{EventKind, TraceDefinitions, TraceError, TraceEvent};

#[derive(Default)]
struct CoreStream {
    last: u64,
    stack: Vec<u32>,
    events: Vec<TraceEvent>,
    pending: String,
}

struct FileOutput {
    stem: PathBuf,
    flush_bytes: Option<usize>,
    pending: usize,
}

/// Host-side event buffer. Recording never touches simulation state.
pub struct TraceSink {
    defs: TraceDefinitions,
    cores: Vec<CoreStream>,
    allowed: Option<Vec<bool>>,
    keep: bool,
    output: Option<FileOutput>,
    recorded: u64,
}

impl TraceSink {
    /// In-memory sink; events are returned by [`TraceSink::finish`].
    pub fn new(defs: TraceDefinitions) -> Self {
        let cores = defs.processes.iter().map(|_| CoreStream::default()).collect();
        Self { defs, cores, allowed: None, keep: true, output: None, recorded: 0 }
    }

    /// Sink that writes a trace at `path`. Streams are written at
    /// [`TraceSink::finish`], or whenever more than `flush_bytes` are
    /// buffered. Events are not kept in memory.
    pub fn to_files(defs: TraceDefinitions, path: &Path, flush_bytes: Option<usize>) -> Result<Self, TraceError> {
        let (master, stem) = trace_paths(path);
        write_file(&master, &master_text(&defs))?;
        for p in &defs.processes {
            write_file(&stream_path(&stem, p.id), "")?;
        }
        let mut sink = Self::new(defs);
        sink.keep = false;
        sink.output = Some(FileOutput { stem, flush_bytes, pending: 0 });
        Ok(sink)
    }

    pub fn keep_events(mut self, keep: bool) -> Self {
        self.keep = keep;
        self
    }

    /// Restricts Enter/Leave records to the given function ids.
    pub fn with_filter(mut self, ids: impl IntoIterator<Item = u32>) -> Self {
        let n = self.defs.functions.iter().map(|d| d.id as usize + 1).max().unwrap_or(0);
        let mut allowed = vec![false; n];
        for id in ids {
            if let Some(a) = allowed.get_mut(id as usize) {
                *a = true;
            }
        }
        self.allowed = Some(allowed);
        self
    }

    pub fn definitions(&self) -> &TraceDefinitions {
        &self.defs
    }

    /// Number of events accepted so far.
    pub fn recorded(&self) -> u64 {
        self.recorded
    }

    pub fn record(&mut self, ev: TraceEvent) -> Result<(), TraceError> {
        let core = ev.core;
        let Some(stream) = self.cores.get_mut(core as usize) else {
            return Err(TraceError::Undefined { what: "process", id: core });
        };
        if ev.timestamp < stream.last {
            return Err(TraceError::OutOfOrder { core, timestamp: ev.timestamp, last: stream.last });
        }
        stream.last = ev.timestamp;
        match ev.kind {
            EventKind::Enter(f) | EventKind::Leave(f) => {
                if let Some(allowed) = &self.allowed {
                    if !allowed.get(f as usize).copied().unwrap_or(false) {
                        return Ok(());
                    }
                }
                if let EventKind::Enter(_) = ev.kind {
                    stream.stack.push(f);
                } else {
                    match stream.stack.pop() {
                        Some(top) if top == f => {}
                        Some(top) => {
                            return Err(TraceError::Nesting {
                                core,
                                msg: format!("leave of function {f} while function {top} is open"),
                            })
                        }
                        None => {
                            return Err(TraceError::Nesting { core, msg: format!("leave of function {f} without enter") })
                        }
                    }
                }
            }
            EventKind::Counter(..) | EventKind::Block(_) => {}
        }
        self.recorded += 1;
        if self.keep {
            stream.events.push(ev);
        }
        if let Some(out) = &mut self.output {
            let before = stream.pending.len();
            event_line(&ev, &mut stream.pending);
            out.pending += stream.pending.len() - before;
            if out.flush_bytes.is_some_and(|limit| out.pending >= limit) {
                self.flush()?;
            }
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<(), TraceError> {
        let Some(out) = &mut self.output else {
            return Ok(());
        };
        for (p, stream) in self.defs.processes.iter().zip(&mut self.cores) {
            if stream.pending.is_empty() {
                continue;
            }
            let path = stream_path(&out.stem, p.id);
            let io = |e: std::io::Error| TraceError::Io { path: path.clone(), msg: e.to_string() };
            let mut f = OpenOptions::new().append(true).open(&path).map_err(io)?;
            f.write_all(stream.pending.as_bytes()).map_err(io)?;
            stream.pending.clear();
        }
        out.pending = 0;
        Ok(())
    }

    /// Flushes any file output and returns the kept events in canonical
    /// (core-major) order. Fails if a function is still open.
    pub fn finish(mut self) -> Result<Vec<TraceEvent>, TraceError> {
        for (core, s) in self.cores.iter().enumerate() {
            if let Some(f) = s.stack.last() {
                return Err(TraceError::Nesting { core: core as u32, msg: format!("function {f} never left") });
            }
        }
        self.flush()?;
        Ok(self.cores.into_iter().flat_map(|s| s.events).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{read_trace, Definition};
    use super::*;

    fn defs() -> TraceDefinitions {
        TraceDefinitions {
            resolution: 1000,
            processes: vec![Definition::new(0, "Core 0"), Definition::new(1, "Core 1")],
            functions: vec![Definition::new(0, "main"), Definition::new(1, "f")],
            counters: vec![],
        }
    }

    fn ev(core: u32, timestamp: u64, kind: EventKind) -> TraceEvent {
        TraceEvent { timestamp, core, kind }
    }

    #[test]
    fn single_call() {
        let mut s = TraceSink::new(defs());
        s.record(ev(0, 0, EventKind::Enter(0))).unwrap();
        s.record(ev(0, 250, EventKind::Leave(0))).unwrap();
        assert_eq!(s.finish().unwrap().len(), 2);
    }

    #[test]
    fn guards() {
        let mut s = TraceSink::new(defs());
        assert!(matches!(s.record(ev(0, 5, EventKind::Leave(0))), Err(TraceError::Nesting { core: 0, .. })));
        s.record(ev(1, 10, EventKind::Enter(1))).unwrap();
        assert!(matches!(s.record(ev(1, 9, EventKind::Leave(1))), Err(TraceError::OutOfOrder { core: 1, .. })));
        assert!(s.finish().is_err());
    }

    #[test]
    fn filter_drops_unlisted_functions() {
        let mut s = TraceSink::new(defs()).with_filter([0]);
        s.record(ev(0, 0, EventKind::Enter(0))).unwrap();
        s.record(ev(0, 1, EventKind::Enter(1))).unwrap();
        s.record(ev(0, 2, EventKind::Leave(1))).unwrap();
        s.record(ev(0, 3, EventKind::Leave(0))).unwrap();
        let out = s.finish().unwrap();
        assert_eq!(out.iter().map(|e| e.kind).collect::<Vec<_>>(), vec![EventKind::Enter(0), EventKind::Leave(0)]);
    }

    #[test]
    fn flushing_does_not_change_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let events: Vec<TraceEvent> = (0..200u64)
            .flat_map(|i| {
                let core = (i % 2) as u32;
                [ev(core, i * 10, EventKind::Enter(1)), ev(core, i * 10 + 5, EventKind::Leave(1))]
            })
            .collect();
        let mut bytes = Vec::new();
        for (name, limit) in [("a", None), ("b", Some(64))] {
            let path = dir.path().join(name);
            let mut s = TraceSink::to_files(defs(), &path, limit).unwrap();
            events.iter().for_each(|e| s.record(*e).unwrap());
            s.finish().unwrap();
            let one = std::fs::read(dir.path().join(format!("{name}.1.events"))).unwrap();
            bytes.push(one);
            let (read, _) = read_trace(&path).unwrap();
            assert_eq!(read.len(), events.len());
        }
        assert_eq!(bytes[0], bytes[1]);
    }
}
