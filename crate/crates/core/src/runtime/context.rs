//! Per-thread context stacks.
//!
//! Every thread that touches the runtime owns a stack of region records. The
//! bottom record is an implicit one-thread region, so API calls behave the same
//! inside and outside of parallel regions. Threads spawned by a parallel region
//! start from a shallow copy of the spawning thread's stack.

use std::cell::{Cell, RefCell};
use std::rc::Rc;
use std::sync::Arc;

use super::env::Icv;
use super::team::{TaskNode, Team};
use crate::worksharing::SingleState;

/// A thread's view of one region: its index within the team plus the team itself.
#[derive(Clone)]
pub struct TeamRecord {
    thread_index: usize,
    pub(crate) team: Arc<Team>,
}

impl TeamRecord {
    pub(crate) fn new(thread_index: usize, team: Arc<Team>) -> Self {
        debug_assert!(thread_index < team.size);
        TeamRecord { thread_index, team }
    }

    pub fn thread_index(&self) -> usize {
        self.thread_index
    }

    pub fn team_size(&self) -> usize {
        self.team.size
    }

    /// Pending tasks in the team's shared queue.
    pub fn queued_tasks(&self) -> usize {
        self.team.queue_len()
    }

    pub fn same_team(&self, other: &TeamRecord) -> bool {
        Arc::ptr_eq(&self.team, &other.team)
    }

    pub fn team_id(&self) -> u64 {
        self.team.id
    }

    /// Shared key-value table of the team. Returns `None` if the key already
    /// holds a value of a different type.
    pub fn shared_get_or_insert<T, F>(&self, key: &str, init: F) -> Option<Arc<T>>
    where
        T: std::any::Any + Send + Sync,
        F: FnOnce() -> T,
    {
        self.team.table_get_or_insert(key, init)
    }
}

impl std::fmt::Debug for TeamRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TeamRecord")
            .field("thread_index", &self.thread_index)
            .field("team_size", &self.team.size)
            .field("team_id", &self.team.id)
            .finish()
    }
}

pub(crate) struct Frame {
    pub(crate) record: TeamRecord,
    constructs: Cell<u64>,
    pub(crate) last_single: RefCell<Option<Arc<SingleState>>>,
    tasks: RefCell<Vec<Arc<TaskNode>>>,
}

impl Frame {
    pub(crate) fn new(record: TeamRecord) -> Self {
        Frame {
            record,
            constructs: Cell::new(0),
            last_single: RefCell::new(None),
            tasks: RefCell::new(vec![Arc::new(TaskNode::default())]),
        }
    }

    fn shallow_copy(&self) -> Self {
        Frame::new(self.record.clone())
    }

    /// Key for the next worksharing construct this member encounters. Members
    /// meet constructs in the same order, so equal keys name the same construct.
    pub(crate) fn next_construct_key(&self) -> String {
        let n = self.constructs.get();
        self.constructs.set(n + 1);
        format!("construct:{n}")
    }

    /// 1 while the member runs its implicit task, deeper inside explicit tasks.
    pub(crate) fn task_depth(&self) -> usize {
        self.tasks.borrow().len()
    }

    pub(crate) fn current_task(&self) -> Arc<TaskNode> {
        self.tasks
            .borrow()
            .last()
            .cloned()
            .expect("frame always has an implicit task")
    }
}

pub(crate) struct ContextInner {
    stack: RefCell<Vec<Frame>>,
    icv: RefCell<Icv>,
}

/// Handle to the calling thread's context. Not `Send`: a thread never reads
/// another thread's context.
#[derive(Clone)]
pub struct TeamContext {
    inner: Rc<ContextInner>,
}

thread_local! {
    static CONTEXT: RefCell<Option<Rc<ContextInner>>> = const { RefCell::new(None) };
}

/// Returns the calling thread's context, creating an implicit one-thread
/// region on first use.
pub fn ensure_context() -> TeamContext {
    CONTEXT.with(|slot| {
        let mut slot = slot.borrow_mut();
        let inner = slot.get_or_insert_with(|| {
            let team = Arc::new(Team::new(1));
            Rc::new(ContextInner {
                stack: RefCell::new(vec![Frame::new(TeamRecord::new(0, team))]),
                icv: RefCell::new(Icv::from_process_env()),
            })
        });
        TeamContext { inner: inner.clone() }
    })
}

pub(crate) fn install(frames: Vec<Frame>, icv: Icv) {
    CONTEXT.with(|slot| {
        *slot.borrow_mut() = Some(Rc::new(ContextInner {
            stack: RefCell::new(frames),
            icv: RefCell::new(icv),
        }));
    });
}

pub(crate) fn uninstall() {
    CONTEXT.with(|slot| slot.borrow_mut().take());
}

impl TeamContext {
    pub fn depth(&self) -> usize {
        self.inner.stack.borrow().len()
    }

    /// The innermost region record.
    pub fn top(&self) -> TeamRecord {
        self.with_top(|f| f.record.clone())
    }

    pub fn records(&self) -> Vec<TeamRecord> {
        self.inner.stack.borrow().iter().map(|f| f.record.clone()).collect()
    }

    pub fn icv(&self) -> Icv {
        self.inner.icv.borrow().clone()
    }

    pub fn same_as(&self, other: &TeamContext) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    pub(crate) fn update_icv(&self, f: impl FnOnce(&mut Icv)) {
        f(&mut self.inner.icv.borrow_mut());
    }

    pub(crate) fn with_top<R>(&self, f: impl FnOnce(&Frame) -> R) -> R {
        let stack = self.inner.stack.borrow();
        f(stack.last().expect("context stack is never empty"))
    }

    pub(crate) fn in_parallel(&self) -> bool {
        self.inner.stack.borrow().iter().any(|f| f.record.team_size() > 1)
    }

    pub(crate) fn shallow_frames(&self) -> Vec<Frame> {
        self.inner.stack.borrow().iter().map(Frame::shallow_copy).collect()
    }

    pub(crate) fn push(&self, frame: Frame) {
        self.inner.stack.borrow_mut().push(frame);
    }

    pub(crate) fn pop(&self) {
        let mut stack = self.inner.stack.borrow_mut();
        assert!(stack.len() > 1, "implicit region record cannot be popped");
        stack.pop();
    }
}

pub(crate) fn with_top<R>(f: impl FnOnce(&Frame) -> R) -> R {
    ensure_context().with_top(f)
}

pub(crate) fn top_team() -> (usize, Arc<Team>) {
    with_top(|f| (f.record.thread_index(), f.record.team.clone()))
}

pub(crate) fn thread_index() -> usize {
    with_top(|f| f.record.thread_index())
}

pub(crate) fn push_task(node: Arc<TaskNode>) {
    with_top(|f| f.tasks.borrow_mut().push(node));
}

pub(crate) fn pop_task() {
    with_top(|f| {
        let mut tasks = f.tasks.borrow_mut();
        debug_assert!(tasks.len() > 1);
        tasks.pop();
    });
}
