//! A shared-memory parallel runtime with OpenMP-style directives: thread teams,
//! worksharing loops, sections, single, critical, reductions, tasks, and a
//! source-level lowering of annotated blocks onto those runtime calls.

pub mod bench;
pub mod data_env;
pub mod directive;
pub mod error;
pub mod runtime;
pub mod schedule;
pub mod tasking;
pub mod transform;
pub mod worksharing;

pub use directive::{parse, Clause, Directive, DirectiveName, ParseError, ReductionOp};
pub use error::{OmpError, Result};
pub use runtime::{
    barrier, critical, omp_get_max_threads, omp_get_num_threads, omp_get_thread_num, omp_get_wtime, omp_in_parallel,
    parallel, parallel_run, RegionOutcome,
};
pub use schedule::{ScheduleKind, ScheduleSpec};
