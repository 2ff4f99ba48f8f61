//! Browser front end for natsim. The plain functions return serializable
//! values and are usable natively; the `#[wasm_bindgen]` wrappers hand
//! them to JavaScript as JSON strings.

use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

use natsim::frontend::{characterize, compile, CostTable, WorkloadProgram};
use natsim::kernel::{run, trace_definitions};
use natsim::target::{TargetConfig, MAX_CORES};
use natsim::trace::{is_pseudo, EventKind, TraceEvent, TraceSink};
use natsim::workloads;

/// Timeline segments kept per core; longer timelines are truncated.
pub const MAX_SEGMENTS: usize = 4000;

#[derive(Debug, Serialize)]
pub struct BlockRow {
    pub id: u32,
    pub function: String,
    pub line: u32,
    pub instructions: u64,
    pub code_addr: u64,
}

#[derive(Debug, Serialize)]
pub struct Annotation {
    pub annotated_source: String,
    pub blocks: Vec<BlockRow>,
}

#[derive(Debug, Serialize)]
pub struct Segment {
    pub start: u64,
    pub end: u64,
    pub name: String,
}

#[derive(Debug, Serialize)]
pub struct CoreRow {
    pub core: u32,
    pub busy: u64,
    pub wait: u64,
    pub idle: u64,
    pub overhead: u64,
    pub icache_misses: u64,
    pub dcache_misses: u64,
    pub segments: Vec<Segment>,
    pub truncated: bool,
}

#[derive(Debug, Serialize)]
pub struct Simulation {
    pub cores: u32,
    pub clock_hz: u64,
    pub total_cycles: u64,
    pub outputs: Vec<i32>,
    pub exit_code: i32,
    pub serial_fraction: f64,
    pub races: Vec<String>,
    pub per_core: Vec<CoreRow>,
}

#[derive(Debug, Serialize)]
pub struct SweepPoint {
    pub cores: u32,
    pub total_cycles: u64,
    pub speedup: f64,
    /// Amdahl bound from the serial fraction of the first point.
    pub amdahl: f64,
}

fn build(source: &str) -> Result<WorkloadProgram, String> {
    compile(source).map_err(|e| e.to_string())
}

fn config(config_text: &str, cores: u32) -> Result<TargetConfig, String> {
    if cores == 0 || cores > MAX_CORES {
        return Err(format!("core count must be between 1 and {MAX_CORES}"));
    }
    let base = if config_text.trim().is_empty() {
        TargetConfig::default()
    } else {
        TargetConfig::parse(config_text).map_err(|e| e.to_string())?
    };
    Ok(base.with_cores(cores))
}

/// Basic blocks, marker listing and instruction counts of a workload.
pub fn annotate(source: &str) -> Result<Annotation, String> {
    let p = build(source)?;
    let cfg = p.cfg();
    let records = characterize(cfg, &CostTable::default());
    let blocks = cfg
        .blocks
        .iter()
        .zip(&records)
        .map(|(b, r)| BlockRow {
            id: b.block_id,
            function: cfg.functions[b.function as usize].name.clone(),
            line: b.line,
            instructions: r.instr_count,
            code_addr: r.code_addr,
        })
        .collect();
    Ok(Annotation { annotated_source: cfg.annotated_source.clone(), blocks })
}

/// Per-core timeline: each segment is labelled with the innermost function
/// active during it.
fn segments(events: &[TraceEvent], core: u32, names: &dyn Fn(u32) -> String) -> (Vec<Segment>, bool) {
    let mut out: Vec<Segment> = Vec::new();
    let mut stack: Vec<u32> = Vec::new();
    let mut since = 0;
    for e in events.iter().filter(|e| e.core == core) {
        let (EventKind::Enter(_) | EventKind::Leave(_)) = e.kind else { continue };
        if let Some(&top) = stack.last() {
            if e.timestamp > since {
                let name = names(top);
                match out.last_mut() {
                    Some(last) if last.name == name && last.end == since => last.end = e.timestamp,
                    _ => out.push(Segment { start: since, end: e.timestamp, name }),
                }
                if out.len() > MAX_SEGMENTS {
                    out.truncate(MAX_SEGMENTS);
                    return (out, true);
                }
            }
        }
        match e.kind {
            EventKind::Enter(f) => stack.push(f),
            _ => {
                stack.pop();
            }
        }
        since = e.timestamp;
    }
    (out, false)
}

pub fn simulate(source: &str, cores: u32, config_text: &str) -> Result<Simulation, String> {
    let p = build(source)?;
    let c = config(config_text, cores)?;
    let records = characterize(p.cfg(), &CostTable::default());
    let defs = trace_definitions(p.cfg(), &c);
    let mut sink = TraceSink::new(defs.clone());
    let r = run(&p, &records, &c, Some(&mut sink)).map_err(|e| e.to_string())?;
    let events = sink.finish().map_err(|e| e.to_string())?;
    let names = |id: u32| {
        let n = defs.function_name(id).unwrap_or("?");
        if is_pseudo(n) {
            n.trim_matches(['<', '>']).to_string()
        } else {
            n.to_string()
        }
    };
    let per_core = r
        .cores
        .iter()
        .map(|s| {
            let (segments, truncated) = segments(&events, s.core, &names);
            CoreRow {
                core: s.core,
                busy: s.counters.busy,
                wait: s.counters.wait,
                idle: s.counters.idle,
                overhead: s.counters.overhead,
                icache_misses: s.icache.misses,
                dcache_misses: s.dcache.misses,
                segments,
                truncated,
            }
        })
        .collect();
    Ok(Simulation {
        cores,
        clock_hz: c.clock_hz,
        total_cycles: r.total_cycles(),
        outputs: r.outputs.clone(),
        exit_code: r.exit_code,
        serial_fraction: r.serial_fraction(),
        races: r.races.iter().map(|w| w.to_string()).collect(),
        per_core,
    })
}

/// Runs every core count and compares the speedup with Amdahl's law.
pub fn sweep(source: &str, core_counts: &[u32], config_text: &str) -> Result<Vec<SweepPoint>, String> {
    let p = build(source)?;
    let records = characterize(p.cfg(), &CostTable::default());
    let mut points = Vec::new();
    let mut first: Option<(u32, u64, f64)> = None;
    for &n in core_counts {
        let c = config(config_text, n)?;
        let r = run(&p, &records, &c, None).map_err(|e| e.to_string())?;
        let t = r.total_cycles();
        let (n0, t0, s) = *first.get_or_insert((n, t, r.serial_fraction()));
        let rel = n as f64 / n0 as f64;
        points.push(SweepPoint {
            cores: n,
            total_cycles: t,
            speedup: if t == 0 { 0.0 } else { t0 as f64 / t as f64 },
            amdahl: 1.0 / (s + (1.0 - s) / rel),
        });
    }
    Ok(points)
}

fn json<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).expect("plain data serializes"),
        Err(e) => serde_json::json!({ "error": e }).to_string(),
    }
}

/// Source of a bundled workload, or an empty string.
#[wasm_bindgen]
pub fn bundled_workload(name: &str) -> String {
    workloads::ALL.iter().find(|(n, _)| *n == name).map_or_else(String::new, |(_, s)| s.to_string())
}

#[wasm_bindgen]
pub fn default_config() -> String {
    TargetConfig::default().to_string()
}

#[wasm_bindgen]
pub fn annotate_json(source: &str) -> String {
    json(annotate(source))
}

#[wasm_bindgen]
pub fn simulate_json(source: &str, cores: u32, config_text: &str) -> String {
    json(simulate(source, cores, config_text))
}

/// `core_counts` is comma-separated.
#[wasm_bindgen]
pub fn sweep_json(source: &str, core_counts: &str, config_text: &str) -> String {
    let counts: Result<Vec<u32>, String> = core_counts
        .split(',')
        .map(|s| s.trim().parse::<u32>().map_err(|_| format!("bad core count `{}`", s.trim())))
        .collect();
    json(counts.and_then(|c| sweep(source, &c, config_text)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annotate_reports_every_block() {
        let a = annotate(workloads::NQUEENS).unwrap();
        assert!(a.annotated_source.contains("b_uc_mark_0__"));
        assert!(a.blocks.iter().any(|b| b.function == "check_acceptable"));
        assert!(a.blocks.iter().all(|b| b.instructions >= 1));
    }

    #[test]
    fn timelines_cover_each_core() {
        let s = simulate(workloads::NQUEENS, 4, "").unwrap();
        assert_eq!(s.outputs, [10]);
        for c in &s.per_core {
            let covered: u64 = c.segments.iter().map(|g| g.end - g.start).sum();
            assert!(c.truncated || covered == s.per_core[c.core as usize].busy + c.wait + c.idle + c.overhead);
            assert!(c.segments.windows(2).all(|w| w[0].end <= w[1].start));
        }
    }

    #[test]
    fn sweep_matches_amdahl_for_jpeg() {
        let pts = sweep(workloads::JPEG_PIPELINE, &[1, 2, 4, 8, 16], "").unwrap();
        assert_eq!(pts[0].speedup, 1.0);
        for p in &pts {
            assert!((p.speedup - p.amdahl).abs() / p.amdahl < 0.1, "{p:?}");
        }
    }

    #[test]
    fn errors_become_json() {
        let v: serde_json::Value = serde_json::from_str(&simulate_json("int main( {", 2, "")).unwrap();
        assert!(v["error"].as_str().unwrap().starts_with("1:11: syntax error"));
        let v: serde_json::Value = serde_json::from_str(&sweep_json(workloads::NQUEENS, "1,x", "")).unwrap();
        assert!(v["error"].is_string());
        assert!(bundled_workload("nope").is_empty());
        assert!(TargetConfig::parse(&default_config()).is_ok());
    }
}
