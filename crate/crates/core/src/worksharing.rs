//! Worksharing constructs: scheduled loops, sections and single.
//!
//! Each construct is joined by every member of the innermost team. Shared
//! construct state lives in the team's shared table, keyed by the order in
//! which members encounter constructs. Unless `nowait` is set, leaving a
//! construct waits on the team barrier.

use std::any::Any;
use std::fmt::Debug;
use std::sync::{Arc, Condvar, Mutex};

use crate::error::{OmpError, Result};
use crate::runtime::{ensure_context, with_top, Team};
use crate::schedule::{ScheduleKind, ScheduleSpec};

/// One loop level: `start`, `stop` (exclusive) and a non-zero `step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepRange {
    start: i64,
    stop: i64,
    step: i64,
}

impl StepRange {
    pub fn new(start: i64, stop: i64, step: i64) -> Result<Self> {
        if step == 0 {
            return Err(OmpError::InvalidArgument("loop step must be non-zero".into()));
        }
        Ok(StepRange { start, stop, step })
    }

    /// `0..stop` with step 1.
    pub fn upto(stop: i64) -> Self {
        StepRange {
            start: 0,
            stop,
            step: 1,
        }
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn stop(&self) -> i64 {
        self.stop
    }

    pub fn step(&self) -> i64 {
        self.step
    }

    /// Number of iterations, `max(0, ceil((stop - start) / step))`.
    pub fn count(&self) -> u64 {
        let (span, step) = if self.step > 0 {
            (self.stop as i128 - self.start as i128, self.step as i128)
        } else {
            (self.start as i128 - self.stop as i128, -(self.step as i128))
        };
        if span <= 0 {
            0
        } else {
            ((span + step - 1) / step) as u64
        }
    }

    pub fn value_at(&self, k: u64) -> i64 {
        (self.start as i128 + k as i128 * self.step as i128) as i64
    }
}

/// An iteration space that can be flattened to `0..total()`. Collapsed nests
/// decompose the flat index in mixed radix with the innermost level fastest.
pub trait LoopBounds {
    type Index: Clone + PartialEq + Debug;

    fn total(&self) -> u64;

    fn index_at(&self, flat: u64) -> Self::Index;

    /// The index tuple a sequential run would execute last.
    fn last_index(&self) -> Option<Self::Index> {
        match self.total() {
            0 => None,
            n => Some(self.index_at(n - 1)),
        }
    }
}

impl LoopBounds for StepRange {
    type Index = i64;

    fn total(&self) -> u64 {
        self.count()
    }

    fn index_at(&self, flat: u64) -> i64 {
        self.value_at(flat)
    }
}

fn nest_total(levels: &[StepRange]) -> u64 {
    levels
        .iter()
        .try_fold(1u64, |acc, l| acc.checked_mul(l.count()))
        .expect("iteration space exceeds u64")
}

fn nest_decompose(levels: &[StepRange], mut flat: u64, out: &mut [i64]) {
    for (slot, level) in out.iter_mut().zip(levels).rev() {
        let n = level.count();
        *slot = level.value_at(flat % n);
        flat /= n;
    }
}

impl LoopBounds for (StepRange, StepRange) {
    type Index = (i64, i64);

    fn total(&self) -> u64 {
        nest_total(&[self.0, self.1])
    }

    fn index_at(&self, flat: u64) -> (i64, i64) {
        let inner = self.1.count();
        (self.0.value_at(flat / inner), self.1.value_at(flat % inner))
    }
}

impl<const D: usize> LoopBounds for [StepRange; D] {
    type Index = [i64; D];

    fn total(&self) -> u64 {
        nest_total(self)
    }

    fn index_at(&self, flat: u64) -> [i64; D] {
        let mut out = [0i64; D];
        nest_decompose(self, flat, &mut out);
        out
    }
}

impl LoopBounds for Vec<StepRange> {
    type Index = Vec<i64>;

    fn total(&self) -> u64 {
        nest_total(self)
    }

    fn index_at(&self, flat: u64) -> Vec<i64> {
        let mut out = vec![0i64; self.len()];
        nest_decompose(self, flat, &mut out);
        out
    }
}

/// Whether `last` is the sequentially-last index of `bounds`. False for every
/// caller when the space is empty.
pub fn is_last_iteration<B: LoopBounds>(bounds: &B, last: Option<&B::Index>) -> bool {
    match (bounds.last_index(), last) {
        (Some(expected), Some(got)) => &expected == got,
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Policy {
    Static { chunk: u64 },
    Dynamic { chunk: u64 },
    Guided { min_chunk: u64 },
}

/// Maps `auto` and `runtime` onto a concrete policy for `total` iterations on `team_size` threads.
fn resolve(spec: ScheduleSpec, runtime: ScheduleSpec, total: u64, team_size: u64) -> Policy {
    let spec = match spec.kind {
        ScheduleKind::Runtime => runtime,
        _ => spec,
    };
    let chunk = spec.chunk_size();
    match spec.kind {
        ScheduleKind::Dynamic => Policy::Dynamic {
            chunk: chunk.unwrap_or(1),
        },
        ScheduleKind::Guided => Policy::Guided {
            min_chunk: chunk.unwrap_or(1),
        },
        // auto, and runtime that itself names runtime or auto
        _ => Policy::Static {
            chunk: chunk.unwrap_or_else(|| total.div_ceil(team_size).max(1)),
        },
    }
}

/// Guided chunk size for the next claim: `max(ceil(remaining / T), min_chunk)`, capped at `remaining`.
pub fn guided_chunk(remaining: u64, team_size: u64, min_chunk: u64) -> u64 {
    remaining.div_ceil(team_size).max(min_chunk).min(remaining)
}

#[derive(Default)]
struct LoopShared {
    next: Mutex<u64>,
}

/// Iterator over the calling member's share of a loop.
pub struct ScheduledRange<B: LoopBounds> {
    bounds: B,
    total: u64,
    team: Arc<Team>,
    thread: u64,
    team_size: u64,
    policy: Policy,
    shared: Arc<LoopShared>,
    cursor: u64,
    chunk_end: u64,
    static_round: u64,
    last_flat: Option<u64>,
    nowait: bool,
    finished: bool,
}

/// Starts a worksharing loop over `bounds` for the calling member of the
/// innermost team. Every member must call this with the same arguments.
pub fn scheduled_range<B: LoopBounds>(bounds: B, spec: ScheduleSpec, nowait: bool) -> ScheduledRange<B> {
    let runtime = ensure_context().icv().runtime_schedule;
    let (thread, team, key) = with_top(|f| (f.record.thread_index(), f.record.team.clone(), f.next_construct_key()));
    let (shared, _) = team.join_construct(&key, LoopShared::default);
    let total = bounds.total();
    let team_size = team.size as u64;
    ScheduledRange {
        policy: resolve(spec, runtime, total, team_size),
        bounds,
        total,
        team,
        thread: thread as u64,
        team_size,
        shared,
        cursor: 0,
        chunk_end: 0,
        static_round: 0,
        last_flat: None,
        nowait,
        finished: false,
    }
}

impl<B: LoopBounds> ScheduledRange<B> {
    fn claim(&mut self) -> Option<(u64, u64)> {
        match self.policy {
            Policy::Static { chunk } => {
                let index = self.thread + self.static_round * self.team_size;
                self.static_round += 1;
                let start = index.checked_mul(chunk)?;
                (start < self.total).then(|| (start, (start + chunk).min(self.total)))
            }
            Policy::Dynamic { chunk } => {
                let mut next = self.shared.next.lock().unwrap_or_else(|e| e.into_inner());
                let start = *next;
                if start >= self.total {
                    return None;
                }
                *next = (start + chunk).min(self.total);
                Some((start, *next))
            }
            Policy::Guided { min_chunk } => {
                let mut next = self.shared.next.lock().unwrap_or_else(|e| e.into_inner());
                let start = *next;
                if start >= self.total {
                    return None;
                }
                *next = start + guided_chunk(self.total - start, self.team_size, min_chunk);
                Some((start, *next))
            }
        }
    }

    /// The next flat chunk `[start, end)` assigned to this member.
    pub fn next_chunk(&mut self) -> Option<(u64, u64)> {
        if self.finished {
            return None;
        }
        if self.cursor < self.chunk_end {
            let chunk = (self.cursor, self.chunk_end);
            self.cursor = self.chunk_end;
            self.last_flat = Some(chunk.1 - 1);
            return Some(chunk);
        }
        match self.claim() {
            Some(chunk) => {
                self.last_flat = Some(chunk.1 - 1);
                Some(chunk)
            }
            None => {
                self.finish();
                None
            }
        }
    }

    fn finish(&mut self) {
        if self.finished {
            return;
        }
        self.finished = true;
        if !self.nowait {
            self.team.barrier_wait();
        }
    }

    pub fn bounds(&self) -> &B {
        &self.bounds
    }

    /// Last index tuple this member executed.
    pub fn last_yielded(&self) -> Option<B::Index> {
        self.last_flat.map(|f| self.bounds.index_at(f))
    }

    /// True iff this member executed the sequentially-last iteration.
    pub fn executed_last(&self) -> bool {
        self.total > 0 && self.last_flat == Some(self.total - 1)
    }
}

impl<B: LoopBounds> Iterator for ScheduledRange<B> {
    type Item = B::Index;

    fn next(&mut self) -> Option<B::Index> {
        if self.cursor >= self.chunk_end {
            if self.finished {
                return None;
            }
            match self.claim() {
                Some((start, end)) => {
                    self.cursor = start;
                    self.chunk_end = end;
                }
                None => {
                    self.finish();
                    return None;
                }
            }
        }
        let flat = self.cursor;
        self.cursor += 1;
        self.last_flat = Some(flat);
        Some(self.bounds.index_at(flat))
    }
}

impl<B: LoopBounds> Drop for ScheduledRange<B> {
    fn drop(&mut self) {
        // Abandoning the loop early still joins the exit barrier so peers do not hang.
        if !std::thread::panicking() {
            self.finish();
        }
    }
}

pub(crate) struct SectionsState {
    executed: Mutex<Vec<bool>>,
}

/// Member handle for a `sections` construct.
pub struct Sections {
    state: Arc<SectionsState>,
    team: Arc<Team>,
    total: usize,
    nowait: bool,
    ran_last: bool,
    closed: bool,
}

/// Enters a `sections` construct with `total` sections numbered `0..total`.
pub fn sections_begin(total: usize, nowait: bool) -> Sections {
    let (team, key) = with_top(|f| (f.record.team.clone(), f.next_construct_key()));
    let (state, _) = team.join_construct(&key, || SectionsState {
        executed: Mutex::new(vec![false; total]),
    });
    Sections {
        state,
        team,
        total,
        nowait,
        ran_last: false,
        closed: false,
    }
}

impl Sections {
    /// Grants section `id` to the caller if no member has taken it yet.
    pub fn section_try(&mut self, id: usize) -> Result<bool> {
        if id >= self.total {
            return Err(OmpError::Logic(format!("section id {id} outside 0..{}", self.total)));
        }
        let mut executed = self.state.executed.lock().unwrap_or_else(|e| e.into_inner());
        if executed[id] {
            return Ok(false);
        }
        executed[id] = true;
        if id + 1 == self.total {
            self.ran_last = true;
        }
        Ok(true)
    }

    /// True iff this member executed the last section (for `lastprivate`).
    pub fn executed_last(&self) -> bool {
        self.ran_last
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Leaves the construct, waiting on the barrier unless `nowait`.
    pub fn end(mut self) {
        self.close();
    }

    fn close(&mut self) {
        if !self.closed {
            self.closed = true;
            if !self.nowait {
                self.team.barrier_wait();
            }
        }
    }
}

impl Drop for Sections {
    fn drop(&mut self) {
        if !std::thread::panicking() {
            self.close();
        }
    }
}

/// Runs each closure in `blocks` exactly once across the team.
pub fn sections(nowait: bool, blocks: &[&(dyn Fn() + Sync)]) {
    let mut s = sections_begin(blocks.len(), nowait);
    for (id, block) in blocks.iter().enumerate() {
        if s.section_try(id).expect("id in range") {
            block();
        }
    }
    s.end();
}

pub(crate) struct SingleState {
    payload: Mutex<Option<Arc<dyn Any + Send + Sync>>>,
    published: Condvar,
}

impl SingleState {
    fn new() -> Self {
        SingleState {
            payload: Mutex::new(None),
            published: Condvar::new(),
        }
    }

    pub(crate) fn publish(&self, value: Arc<dyn Any + Send + Sync>) -> Result<()> {
        let mut slot = self.payload.lock().unwrap_or_else(|e| e.into_inner());
        if slot.is_some() {
            return Err(OmpError::Logic("copyprivate published twice for one single".into()));
        }
        *slot = Some(value);
        self.published.notify_all();
        Ok(())
    }

    pub(crate) fn wait_payload(&self) -> Arc<dyn Any + Send + Sync> {
        let mut slot = self.payload.lock().unwrap_or_else(|e| e.into_inner());
        loop {
            if let Some(v) = slot.as_ref() {
                return v.clone();
            }
            slot = self.published.wait(slot).unwrap_or_else(|e| e.into_inner());
        }
    }
}

/// Member handle for a `single` construct.
pub struct Single {
    granted: bool,
    team: Arc<Team>,
    nowait: bool,
    closed: bool,
}

/// Enters a `single` construct; exactly the first member to arrive is granted it.
pub fn single_begin(nowait: bool) -> Single {
    let (team, key) = with_top(|f| (f.record.team.clone(), f.next_construct_key()));
    let (state, granted) = team.join_construct(&key, SingleState::new);
    with_top(|f| *f.last_single.borrow_mut() = Some(state));
    Single {
        granted,
        team,
        nowait,
        closed: false,
    }
}

impl Single {
    pub fn is_granted(&self) -> bool {
        self.granted
    }

    pub fn end(mut self) {
        self.close();
    }

    fn close(&mut self) {
        if !self.closed {
            self.closed = true;
            if !self.nowait {
                self.team.barrier_wait();
            }
        }
    }
}

impl Drop for Single {
    fn drop(&mut self) {
        if !std::thread::panicking() {
            self.close();
        }
    }
}

/// Runs `f` on exactly one member. Returns `Some` on that member.
pub fn single<R>(nowait: bool, f: impl FnOnce() -> R) -> Option<R> {
    let guard = single_begin(nowait);
    let out = guard.is_granted().then(f);
    guard.end();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::{barrier, omp_get_thread_num, parallel_run};
    use std::collections::BTreeMap;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Yields per thread, collected by running the loop inside a real team.
    fn per_thread<B>(bounds: B, spec: ScheduleSpec, threads: usize) -> BTreeMap<usize, Vec<B::Index>>
    where
        B: LoopBounds + Clone + Sync,
        B::Index: Send,
    {
        let out = Mutex::new(BTreeMap::new());
        let r = parallel_run(Some(threads), None, || {
            let mine: Vec<_> = scheduled_range(bounds.clone(), spec, false).collect();
            out.lock().unwrap().insert(omp_get_thread_num(), mine);
        })
        .unwrap();
        assert!(r.is_clean(), "{:?}", r.caught_errors);
        out.into_inner().unwrap()
    }

    #[test]
    fn step_range_counts() {
        assert_eq!(StepRange::new(0, 10, 1).unwrap().count(), 10);
        assert_eq!(StepRange::new(0, 10, 3).unwrap().count(), 4);
        assert_eq!(StepRange::new(10, 0, -3).unwrap().count(), 4);
        assert_eq!(StepRange::new(5, 5, 1).unwrap().count(), 0);
        assert_eq!(StepRange::new(5, 0, 1).unwrap().count(), 0);
        assert_eq!(StepRange::new(0, 5, -1).unwrap().count(), 0);
        assert!(StepRange::new(0, 5, 0).is_err());
        let r = StepRange::new(10, 0, -3).unwrap();
        assert_eq!((0..4).map(|k| r.value_at(k)).collect::<Vec<_>>(), vec![10, 7, 4, 1]);
    }

    #[test]
    fn static_chunk_two_on_four_threads() {
        let got = per_thread(
            StepRange::upto(20),
            ScheduleSpec::with_chunk(ScheduleKind::Static, 2),
            4,
        );
        assert_eq!(got[&0], vec![0, 1, 8, 9, 16, 17]);
        assert_eq!(got[&1], vec![2, 3, 10, 11, 18, 19]);
        assert_eq!(got[&2], vec![4, 5, 12, 13]);
        assert_eq!(got[&3], vec![6, 7, 14, 15]);
    }

    #[test]
    fn static_default_is_one_block_per_thread() {
        let got = per_thread(StepRange::upto(10), ScheduleSpec::STATIC, 4);
        assert_eq!(got[&0], vec![0, 1, 2]);
        assert_eq!(got[&3], vec![9]);
    }

    #[test]
    fn single_thread_is_sequential() {
        for kind in [
            ScheduleKind::Static,
            ScheduleKind::Dynamic,
            ScheduleKind::Guided,
            ScheduleKind::Auto,
        ] {
            let got = per_thread(StepRange::upto(17), ScheduleSpec::new(kind), 1);
            assert_eq!(got[&0], (0..17).collect::<Vec<_>>(), "{kind}");
        }
    }

    #[test]
    fn collapse_covers_product_space() {
        let bounds = (StepRange::upto(5), StepRange::upto(4));
        let got = per_thread(bounds, ScheduleSpec::with_chunk(ScheduleKind::Static, 2), 3);
        let mut all: Vec<(i64, i64)> = got.into_values().flatten().collect();
        all.sort();
        let expected: Vec<(i64, i64)> = (0..5).flat_map(|i| (0..4).map(move |j| (i, j))).collect();
        assert_eq!(all, expected);
    }

    #[test]
    fn array_nest_matches_pair_nest() {
        let pair = (StepRange::new(3, -3, -2).unwrap(), StepRange::new(0, 7, 3).unwrap());
        let arr = [pair.0, pair.1];
        assert_eq!(pair.total(), arr.total());
        for f in 0..pair.total() {
            let (a, b) = pair.index_at(f);
            assert_eq!([a, b], arr.index_at(f));
        }
    }

    #[test]
    fn guided_sizes_shrink() {
        let mut remaining = 100;
        let mut sizes = Vec::new();
        while remaining > 0 {
            let c = guided_chunk(remaining, 4, 1);
            sizes.push(c);
            remaining -= c;
        }
        assert_eq!(sizes[0], 25);
        assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(*sizes.last().unwrap(), 1);
        assert_eq!(guided_chunk(3, 4, 5), 3);
    }

    #[test]
    fn last_iteration_owner() {
        let flags = Mutex::new(BTreeMap::new());
        parallel_run(Some(4), None, || {
            let bounds = StepRange::upto(20);
            let mut range = scheduled_range(bounds, ScheduleSpec::with_chunk(ScheduleKind::Static, 2), false);
            for _ in range.by_ref() {}
            let last = range.last_yielded();
            let flag = is_last_iteration(&bounds, last.as_ref());
            assert_eq!(flag, range.executed_last());
            flags.lock().unwrap().insert(omp_get_thread_num(), flag);
        })
        .unwrap();
        let flags = flags.into_inner().unwrap();
        assert_eq!(flags.values().filter(|f| **f).count(), 1);
        assert!(flags[&1]);
    }

    #[test]
    fn last_iteration_empty_space() {
        let b = StepRange::upto(0);
        assert!(!is_last_iteration(&b, None));
        let b = StepRange::upto(3);
        assert!(is_last_iteration(&b, Some(&2)));
        assert!(!is_last_iteration(&b, Some(&1)));
    }

    #[test]
    fn empty_space_still_joins_barrier() {
        let after = AtomicUsize::new(0);
        let r = parallel_run(Some(3), None, || {
            assert_eq!(
                scheduled_range(StepRange::upto(0), ScheduleSpec::STATIC, false).count(),
                0
            );
            after.fetch_add(1, Ordering::SeqCst);
        })
        .unwrap();
        assert!(r.is_clean());
        assert_eq!(after.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn barrier_after_loop_orders_writes() {
        let done = AtomicUsize::new(0);
        let r = parallel_run(Some(4), None, || {
            for _ in scheduled_range(StepRange::upto(40), ScheduleSpec::new(ScheduleKind::Dynamic), false) {
                done.fetch_add(1, Ordering::SeqCst);
            }
            assert_eq!(done.load(Ordering::SeqCst), 40);
        })
        .unwrap();
        assert!(r.is_clean(), "{:?}", r.caught_errors);
    }

    #[test]
    fn runtime_schedule_reads_icv() {
        std::thread::spawn(|| {
            crate::runtime::omp_set_schedule(ScheduleSpec::with_chunk(ScheduleKind::Static, 3));
            let got = per_thread(StepRange::upto(12), ScheduleSpec::new(ScheduleKind::Runtime), 2);
            assert_eq!(got[&0], vec![0, 1, 2, 6, 7, 8]);
        })
        .join()
        .unwrap();
    }

    #[test]
    fn sections_granted_once() {
        let grants: Vec<AtomicUsize> = (0..3).map(|_| AtomicUsize::new(0)).collect();
        parallel_run(Some(4), None, || {
            let mut s = sections_begin(3, false);
            for (id, g) in grants.iter().enumerate() {
                if s.section_try(id).unwrap() {
                    g.fetch_add(1, Ordering::SeqCst);
                }
            }
            s.end();
        })
        .unwrap();
        assert!(grants.iter().all(|g| g.load(Ordering::SeqCst) == 1));
    }

    #[test]
    fn sections_single_thread_in_order() {
        let order = Mutex::new(Vec::new());
        parallel_run(Some(1), None, || {
            let mut s = sections_begin(3, false);
            for id in 0..3 {
                if s.section_try(id).unwrap() {
                    order.lock().unwrap().push(id);
                }
            }
            assert!(!s.section_try(0).unwrap());
            assert!(s.section_try(3).is_err());
            assert!(s.executed_last());
        })
        .unwrap();
        assert_eq!(order.into_inner().unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn single_grants_one_per_construct() {
        let grants = AtomicUsize::new(0);
        parallel_run(Some(4), None, || {
            for _ in 0..2 {
                single(false, || grants.fetch_add(1, Ordering::SeqCst));
            }
        })
        .unwrap();
        assert_eq!(grants.load(Ordering::SeqCst), 2);
        let on_one = single(false, || 5);
        assert_eq!(on_one, Some(5));
    }

    #[test]
    fn nowait_constructs_skip_barrier_but_stay_aligned() {
        let grants = AtomicUsize::new(0);
        let r = parallel_run(Some(3), None, || {
            for _ in 0..50 {
                if single_begin(true).is_granted() {
                    grants.fetch_add(1, Ordering::SeqCst);
                }
            }
            barrier();
            for _ in scheduled_range(StepRange::upto(9), ScheduleSpec::new(ScheduleKind::Guided), true) {}
        })
        .unwrap();
        assert!(r.is_clean());
        assert_eq!(grants.load(Ordering::SeqCst), 50);
    }

    #[test]
    fn construct_entries_are_released() {
        let sizes = Mutex::new(Vec::new());
        parallel_run(Some(3), None, || {
            for _ in scheduled_range(StepRange::upto(10), ScheduleSpec::new(ScheduleKind::Dynamic), false) {}
            single(false, || ());
            let team = with_top(|f| f.record.team.clone());
            sizes.lock().unwrap().push(team.table_len());
        })
        .unwrap();
        assert!(sizes.into_inner().unwrap().iter().all(|n| *n == 0));
    }
}
