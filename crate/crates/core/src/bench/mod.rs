//! Benchmark problems, run configuration, brute-force grid oracle and
//! trace files.

pub mod config;
pub mod grid;
pub mod registry;
pub mod trace_io;

pub use config::{PreparedRun, ProblemRef, RunConfig};
pub use grid::{grid_oracle, GridResult};
pub use registry::{build_benchmark, registry, Benchmark, Reference};
pub use trace_io::{read_trace, write_trace, TraceFormat};
