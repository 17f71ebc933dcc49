//! Thread teams, context stacks and the `omp_*` API functions.

mod context;
mod critical;
mod env;
mod team;

use std::panic::{self, AssertUnwindSafe};
use std::sync::{Arc, OnceLock};
use std::thread;
use std::time::Instant;

pub use context::{ensure_context, TeamContext, TeamRecord};
pub use critical::{critical, critical_enter, critical_exit, critical_guard, CriticalGuard};
pub use env::Icv;
pub use team::ContainedError;

pub(crate) use context::{top_team, with_top};
pub(crate) use team::{panic_message, QueuedTask, TaskNode, Team};

use crate::error::{OmpError, Result};

/// What happened inside a parallel region.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RegionOutcome {
    /// Failures caught in members or tasks, in the order they were recorded.
    pub caught_errors: Vec<ContainedError>,
    pub team_size: usize,
}

impl RegionOutcome {
    pub fn is_clean(&self) -> bool {
        self.caught_errors.is_empty()
    }
}

/// Runs `block` on a team of threads. The caller participates as thread 0 and
/// `team_size - 1` fresh threads are spawned.
///
/// The team size is 1 when `if_value` is `Some(false)`, or when an enclosing
/// region already has more than one thread and nested parallelism is off.
/// Otherwise it is `num_threads` or the context's requested thread count.
///
/// Panics inside members are caught and reported in the outcome; the region
/// always completes, and all queued tasks have run before this returns.
pub fn parallel_run<F>(num_threads: Option<usize>, if_value: Option<bool>, block: F) -> Result<RegionOutcome>
where
    F: Fn() + Sync,
{
    if num_threads == Some(0) {
        return Err(OmpError::InvalidArgument("num_threads must be positive".into()));
    }
    let ctx = ensure_context();
    let icv = ctx.icv();
    let size = if if_value == Some(false) || (ctx.in_parallel() && !icv.nested_enabled) {
        1
    } else {
        num_threads.unwrap_or(icv.requested_num_threads)
    };

    let team = Arc::new(Team::new(size));
    let base = ctx.shallow_frames();
    ctx.push(context::Frame::new(TeamRecord::new(0, team.clone())));

    thread::scope(|scope| {
        for index in 1..size {
            let mut frames: Vec<context::Frame> = base.iter().map(|f| context::Frame::new(f.record.clone())).collect();
            frames.push(context::Frame::new(TeamRecord::new(index, team.clone())));
            let icv = icv.clone();
            let team = &team;
            let block = &block;
            thread::Builder::new()
                .name(format!("omp-worker-{index}"))
                .spawn_scoped(scope, move || {
                    context::install(frames, icv);
                    run_member(team, index, block);
                    context::uninstall();
                })
                .expect("failed to spawn team thread");
        }
        run_member(&team, 0, &block);
    });

    // Members that failed skipped the closing barrier, so leftovers run here.
    team.drain();
    ctx.pop();

    Ok(RegionOutcome {
        caught_errors: team.take_errors(),
        team_size: size,
    })
}

/// `parallel_run` with the requested thread count and no `if` clause.
pub fn parallel<F>(block: F) -> RegionOutcome
where
    F: Fn() + Sync,
{
    parallel_run(None, None, block).expect("no num_threads given")
}

fn run_member<F: Fn() + Sync>(team: &Team, index: usize, block: &F) {
    match panic::catch_unwind(AssertUnwindSafe(block)) {
        Ok(()) => team.barrier_wait(),
        Err(payload) => {
            team.record_error(index, panic_message(&*payload));
            team.member_failed();
        }
    }
}

/// Blocks until every member of the innermost team arrives. Waiting members run
/// queued tasks.
pub fn barrier() {
    let (_, team) = top_team();
    team.barrier_wait();
}

pub fn omp_set_num_threads(n: usize) -> Result<()> {
    if n == 0 {
        return Err(OmpError::InvalidArgument(
            "omp_set_num_threads requires a positive count".into(),
        ));
    }
    ensure_context().update_icv(|icv| icv.requested_num_threads = n);
    Ok(())
}

pub fn omp_get_thread_num() -> usize {
    with_top(|f| f.record.thread_index())
}

pub fn omp_get_num_threads() -> usize {
    with_top(|f| f.record.team_size())
}

pub fn omp_in_parallel() -> bool {
    ensure_context().in_parallel()
}

pub fn omp_get_max_threads() -> usize {
    ensure_context().icv().requested_num_threads
}

pub fn omp_set_nested(flag: bool) {
    ensure_context().update_icv(|icv| icv.nested_enabled = flag);
}

pub fn omp_get_nested() -> bool {
    ensure_context().icv().nested_enabled
}

pub fn omp_set_schedule(spec: crate::schedule::ScheduleSpec) {
    ensure_context().update_icv(|icv| icv.runtime_schedule = spec);
}

pub fn omp_get_schedule() -> crate::schedule::ScheduleSpec {
    ensure_context().icv().runtime_schedule
}

/// Seconds elapsed since a fixed process-wide origin. Monotonic.
pub fn omp_get_wtime() -> f64 {
    static ORIGIN: OnceLock<Instant> = OnceLock::new();
    ORIGIN.get_or_init(Instant::now).elapsed().as_secs_f64()
}
