use std::any::Any;
use std::collections::{HashMap, VecDeque};
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use super::context;

static NEXT_TEAM_ID: AtomicU64 = AtomicU64::new(1);

/// A failure caught inside a region member or task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContainedError {
    pub thread_index: usize,
    pub message: String,
}

/// Outstanding-children counter for a task (or a member's implicit task).
#[derive(Debug, Default)]
pub(crate) struct TaskNode {
    pending: AtomicUsize,
}

impl TaskNode {
    pub(crate) fn pending(&self) -> usize {
        self.pending.load(Ordering::Acquire)
    }
}

pub(crate) struct QueuedTask {
    pub(crate) body: Box<dyn FnOnce() + Send + 'static>,
    pub(crate) parent: Arc<TaskNode>,
    pub(crate) node: Arc<TaskNode>,
}

#[derive(Default)]
struct SyncState {
    queue: VecDeque<QueuedTask>,
    running: usize,
    arrived: usize,
    generation: u64,
    failed: usize,
}

struct TableEntry {
    value: Arc<dyn Any + Send + Sync>,
    arrivals: usize,
}

/// State shared by every member of one team.
pub(crate) struct Team {
    pub(crate) id: u64,
    pub(crate) size: usize,
    sync: Mutex<SyncState>,
    cv: Condvar,
    table: Mutex<HashMap<String, TableEntry>>,
    errors: Mutex<Vec<ContainedError>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    // Member bodies run under catch_unwind, so poisoning never carries meaning here.
    m.lock().unwrap_or_else(|e| e.into_inner())
}

pub(crate) fn panic_message(payload: &(dyn Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}

impl Team {
    pub(crate) fn new(size: usize) -> Self {
        assert!(size >= 1);
        Team {
            id: NEXT_TEAM_ID.fetch_add(1, Ordering::Relaxed),
            size,
            sync: Mutex::new(SyncState::default()),
            cv: Condvar::new(),
            table: Mutex::new(HashMap::new()),
            errors: Mutex::new(Vec::new()),
        }
    }

    pub(crate) fn record_error(&self, thread_index: usize, message: String) {
        lock(&self.errors).push(ContainedError { thread_index, message });
    }

    pub(crate) fn take_errors(&self) -> Vec<ContainedError> {
        std::mem::take(&mut *lock(&self.errors))
    }

    /// Removes a member that unwound out of its block from all future barriers.
    pub(crate) fn member_failed(&self) {
        let mut st = lock(&self.sync);
        st.failed += 1;
        self.cv.notify_all();
    }

    pub(crate) fn queue_len(&self) -> usize {
        lock(&self.sync).queue.len()
    }

    pub(crate) fn enqueue(&self, task: QueuedTask) {
        task.parent.pending.fetch_add(1, Ordering::AcqRel);
        let mut st = lock(&self.sync);
        st.queue.push_back(task);
        self.cv.notify_all();
    }

    /// Runs one dequeued task on the calling thread; `st` is released while it runs.
    fn run_dequeued<'a>(&'a self, mut st: MutexGuard<'a, SyncState>, task: QueuedTask) -> MutexGuard<'a, SyncState> {
        st.running += 1;
        drop(st);
        let QueuedTask { body, parent, node } = task;
        self.execute_body(body, node);
        let mut st = lock(&self.sync);
        st.running -= 1;
        parent.pending.fetch_sub(1, Ordering::AcqRel);
        self.cv.notify_all();
        st
    }

    pub(crate) fn execute_body(&self, body: impl FnOnce(), node: Arc<TaskNode>) {
        context::push_task(node);
        let result = panic::catch_unwind(AssertUnwindSafe(body));
        context::pop_task();
        if let Err(payload) = result {
            self.record_error(context::thread_index(), panic_message(&*payload));
        }
    }

    /// Executes queued tasks (newest first) until `node` has no outstanding
    /// children. With `drain_all` the queue must also be observed empty.
    pub(crate) fn wait_children(&self, node: &TaskNode, drain_all: bool) {
        let mut st = lock(&self.sync);
        loop {
            if node.pending() == 0 && (!drain_all || st.queue.is_empty()) {
                return;
            }
            if let Some(task) = st.queue.pop_back() {
                st = self.run_dequeued(st, task);
                continue;
            }
            st = self.cv.wait(st).unwrap_or_else(|e| e.into_inner());
        }
    }

    /// Team barrier. Waiting members execute queued tasks; the barrier releases once
    /// every live member has arrived and no task is queued or running.
    pub(crate) fn barrier_wait(&self) {
        let mut st = lock(&self.sync);
        let generation = st.generation;
        st.arrived += 1;
        loop {
            if st.generation != generation {
                return;
            }
            if st.arrived + st.failed >= self.size && st.queue.is_empty() && st.running == 0 {
                st.arrived = 0;
                st.generation = st.generation.wrapping_add(1);
                self.cv.notify_all();
                return;
            }
            if let Some(task) = st.queue.pop_front() {
                st = self.run_dequeued(st, task);
                continue;
            }
            st = self.cv.wait(st).unwrap_or_else(|e| e.into_inner());
        }
    }

    /// Runs every remaining task on the calling thread. Used after all workers joined.
    pub(crate) fn drain(&self) {
        let mut st = lock(&self.sync);
        while let Some(task) = st.queue.pop_front() {
            st = self.run_dequeued(st, task);
        }
    }

    /// Fetches (or creates) the shared entry for a worksharing construct. Returns the
    /// entry and whether the caller is the first member to arrive. The entry leaves the
    /// table once every member has arrived.
    pub(crate) fn join_construct<T, F>(&self, key: &str, init: F) -> (Arc<T>, bool)
    where
        T: Any + Send + Sync,
        F: FnOnce() -> T,
    {
        let mut table = lock(&self.table);
        let entry = table.entry(key.to_string()).or_insert_with(|| TableEntry {
            value: Arc::new(init()),
            arrivals: 0,
        });
        entry.arrivals += 1;
        let first = entry.arrivals == 1;
        let value = entry.value.clone();
        if entry.arrivals >= self.size {
            table.remove(key);
        }
        drop(table);
        let value = value
            .downcast::<T>()
            .unwrap_or_else(|_| panic!("construct entry `{key}` has a different type"));
        (value, first)
    }

    #[cfg(test)]
    pub(crate) fn table_len(&self) -> usize {
        lock(&self.table).len()
    }

    /// Plain shared-table access without arrival bookkeeping.
    pub(crate) fn table_get_or_insert<T, F>(&self, key: &str, init: F) -> Option<Arc<T>>
    where
        T: Any + Send + Sync,
        F: FnOnce() -> T,
    {
        let mut table = lock(&self.table);
        let entry = table.entry(key.to_string()).or_insert_with(|| TableEntry {
            value: Arc::new(init()),
            arrivals: 0,
        });
        entry.value.clone().downcast::<T>().ok()
    }
}
