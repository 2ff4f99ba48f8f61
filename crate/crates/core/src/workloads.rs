//! Workloads and platform description shipped with the simulator.

pub const NQUEENS: &str = include_str!("../examples/nqueens.nsc");
pub const JPEG_PIPELINE: &str = include_str!("../examples/jpeg_pipeline.nsc");
pub const ARM926_16CORE: &str = include_str!("../examples/arm926_16core.cfg");

/// `(name, source)` of every bundled workload.
pub const ALL: [(&str, &str); 2] = [("nqueens", NQUEENS), ("jpeg_pipeline", JPEG_PIPELINE)];
