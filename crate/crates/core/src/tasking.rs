//! Explicit tasks on the team's shared queue.
//!
//! Submitted tasks are appended to the innermost team's queue and run by
//! whichever member reaches a task scheduling point first: `taskwait`, a team
//! barrier, or the end of the region. Every task has run before its region
//! returns.

use std::marker::PhantomData;
use std::panic::{self, AssertUnwindSafe};
use std::sync::Arc;

use crate::runtime::{with_top, QueuedTask, TaskNode, Team};

fn current() -> (Arc<Team>, Arc<TaskNode>, bool) {
    with_top(|f| {
        let node = f.current_task();
        let implicit = f.task_depth() == 1;
        (f.record.team.clone(), node, implicit)
    })
}

/// Submits `body` as a task. With `if_value == Some(false)` it runs on the
/// caller before this returns; otherwise it is queued on the team.
pub fn task_submit<F>(body: F, if_value: Option<bool>)
where
    F: FnOnce() + Send + 'static,
{
    let (team, parent, _) = current();
    if if_value == Some(false) {
        team.execute_body(body, Arc::new(TaskNode::default()));
        return;
    }
    team.enqueue(QueuedTask {
        body: Box::new(body),
        parent,
        node: Arc::new(TaskNode::default()),
    });
}

/// Runs queued tasks until every child of the current task has completed.
/// Called from a member's implicit task, it also drains the whole queue.
pub fn taskwait() {
    let (team, node, implicit) = current();
    team.wait_children(&node, implicit);
}

/// Tasks queued on the innermost team and not yet started.
pub fn pending_tasks() -> usize {
    with_top(|f| f.record.queued_tasks())
}

/// A group of tasks that may borrow from the enclosing stack frame. The scope
/// waits for all of its tasks before [`task_scope`] returns.
pub struct TaskScope<'scope> {
    team: Arc<Team>,
    node: Arc<TaskNode>,
    _borrow: PhantomData<&'scope mut &'scope ()>,
}

/// Runs `f` with a scope for spawning borrowing tasks, then waits (running
/// queued tasks meanwhile) until every task spawned in the scope has finished.
pub fn task_scope<'scope, F, R>(f: F) -> R
where
    F: FnOnce(&TaskScope<'scope>) -> R,
{
    let (team, _, _) = current();
    let scope = TaskScope {
        team,
        node: Arc::new(TaskNode::default()),
        _borrow: PhantomData,
    };
    let result = panic::catch_unwind(AssertUnwindSafe(|| f(&scope)));
    scope.team.wait_children(&scope.node, false);
    match result {
        Ok(r) => r,
        Err(payload) => panic::resume_unwind(payload),
    }
}

impl<'scope> TaskScope<'scope> {
    pub fn spawn<F>(&self, body: F)
    where
        F: FnOnce() + Send + 'scope,
    {
        let body: Box<dyn FnOnce() + Send + 'scope> = Box::new(body);
        // SAFETY: `task_scope` does not return (or unwind) before `self.node`
        // has no pending children, so the task finishes while 'scope is alive.
        let body: Box<dyn FnOnce() + Send + 'static> = unsafe { std::mem::transmute(body) };
        self.team.enqueue(QueuedTask {
            body,
            parent: self.node.clone(),
            node: Arc::new(TaskNode::default()),
        });
    }

    /// `spawn`, or run immediately on the caller when `if_value` is false.
    pub fn spawn_if<F>(&self, if_value: bool, body: F)
    where
        F: FnOnce() + Send + 'scope,
    {
        if if_value {
            self.spawn(body);
        } else {
            self.team.execute_body(body, Arc::new(TaskNode::default()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::{critical, ensure_context, omp_get_thread_num, parallel_run};
    use crate::worksharing::single;
    use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
    use std::sync::Mutex;

    fn fib(n: u64) -> u64 {
        if n < 2 {
            return n;
        }
        let (mut i, mut j) = (0, 0);
        task_scope(|s| {
            s.spawn(|| i = fib(n - 1));
            s.spawn(|| j = fib(n - 2));
        });
        i + j
    }

    fn fib_static(n: u64) -> u64 {
        if n < 2 {
            return n;
        }
        let i = Arc::new(AtomicU64::new(0));
        let j = Arc::new(AtomicU64::new(0));
        let (ic, jc) = (i.clone(), j.clone());
        task_submit(move || ic.store(fib_static(n - 1), Ordering::SeqCst), None);
        task_submit(move || jc.store(fib_static(n - 2), Ordering::SeqCst), None);
        taskwait();
        i.load(Ordering::SeqCst) + j.load(Ordering::SeqCst)
    }

    fn fib_iter(n: u64) -> u64 {
        let (mut a, mut b) = (0u64, 1u64);
        for _ in 0..n {
            (a, b) = (b, a + b);
        }
        a
    }

    #[test]
    fn ten_tasks_then_taskwait() {
        let counter = Arc::new(Mutex::new(0));
        std::thread::spawn(move || {
            for _ in 0..10 {
                let c = counter.clone();
                task_submit(move || critical(None, || *c.lock().unwrap() += 1), None);
            }
            assert_eq!(pending_tasks(), 10);
            taskwait();
            assert_eq!(*counter.lock().unwrap(), 10);
            assert_eq!(pending_tasks(), 0);
        })
        .join()
        .unwrap();
    }

    #[test]
    fn if_false_runs_synchronously() {
        let ran = Arc::new(AtomicUsize::new(0));
        let r = ran.clone();
        task_submit(
            move || {
                r.fetch_add(1, Ordering::SeqCst);
            },
            Some(false),
        );
        assert_eq!(ran.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn empty_taskwait_returns() {
        std::thread::spawn(taskwait).join().unwrap();
    }

    #[test]
    fn fib_scoped_across_team_sizes() {
        for t in [1, 2, 4] {
            let result = Mutex::new(None);
            let out = parallel_run(Some(t), None, || {
                if let Some(v) = single(false, || fib(20)) {
                    *result.lock().unwrap() = Some(v);
                }
            })
            .unwrap();
            assert!(out.is_clean());
            assert_eq!(result.into_inner().unwrap(), Some(6765), "T={t}");
        }
    }

    #[test]
    fn fib_static_tasks() {
        let result = Mutex::new(0);
        parallel_run(Some(3), None, || {
            single(false, || *result.lock().unwrap() = fib_static(15));
        })
        .unwrap();
        assert_eq!(*result.lock().unwrap(), fib_iter(15));
        assert_eq!(fib(10), 55);
    }

    #[test]
    fn region_end_drains_tasks() {
        let ran = Arc::new(AtomicUsize::new(0));
        let r = ran.clone();
        parallel_run(Some(2), None, move || {
            if omp_get_thread_num() == 0 {
                let r = r.clone();
                task_submit(
                    move || {
                        r.fetch_add(1, Ordering::SeqCst);
                    },
                    None,
                );
            }
        })
        .unwrap();
        assert_eq!(ran.load(Ordering::SeqCst), 1);
        assert_eq!(ensure_context().top().queued_tasks(), 0);
    }

    #[test]
    fn thousand_tasks_from_eight_threads() {
        let tokens = Arc::new(Mutex::new(Vec::new()));
        let t2 = tokens.clone();
        parallel_run(Some(8), None, move || {
            let me = omp_get_thread_num();
            for k in 0..125 {
                let t = t2.clone();
                task_submit(move || t.lock().unwrap().push(me * 1000 + k), None);
            }
        })
        .unwrap();
        let mut got = tokens.lock().unwrap().clone();
        got.sort();
        let mut want: Vec<usize> = (0..8).flat_map(|m| (0..125).map(move |k| m * 1000 + k)).collect();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn failing_task_is_contained() {
        let out = parallel_run(Some(2), None, || {
            single(false, || task_submit(|| panic!("task failed"), None));
        })
        .unwrap();
        assert_eq!(out.caught_errors.len(), 1);
        assert!(out.caught_errors[0].message.contains("task failed"));
    }

    #[test]
    fn scope_waits_even_when_body_panics() {
        let hits = AtomicUsize::new(0);
        let r = panic::catch_unwind(AssertUnwindSafe(|| {
            task_scope(|s| {
                s.spawn(|| {
                    hits.fetch_add(1, Ordering::SeqCst);
                });
                panic!("scope body");
            })
        }));
        assert!(r.is_err());
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }
}
