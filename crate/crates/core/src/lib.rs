//! Host-compiled simulation of OpenMP-style workloads on a multi-core
//! embedded target.

pub mod cache;
pub mod frontend;
pub mod target;
pub mod trace;
pub mod kernel;
pub mod workloads;
